#include "redl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "redl/dirichlet.hpp"
#include "redl/error.hpp"

namespace redl {
namespace {

void check_target(std::span<const double> logits, std::span<const double> y) {
  if (logits.size() != y.size()) {
    throw DimensionMismatchError("loss: " + std::to_string(logits.size()) + " logits vs " +
                                 std::to_string(y.size()) + " target entries");
  }
}

double squared_error(std::span<const double> y, std::span<const double> p) {
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) sum += (y[i] - p[i]) * (y[i] - p[i]);
  return sum;
}

/// Pulls dL/dP back through P = alpha / S.
std::vector<double> through_normalization(std::span<const double> dl_dp, std::span<const double> p,
                                          double s) {
  double dot = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) dot += dl_dp[j] * p[j];
  std::vector<double> g(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) g[k] = (dl_dp[k] - dot) / s;
  return g;
}

DirichletParams modified_alpha(const DirichletParams& alpha, std::span<const double> y,
                               double lambda) {
  std::vector<double> tilde(alpha.alpha());
  for (std::size_t i = 0; i < tilde.size(); ++i) tilde[i] = lambda * y[i] + (1.0 - y[i]) * tilde[i];
  return DirichletParams(std::move(tilde));
}

}  // namespace

std::string_view to_string(LossForm form) {
  switch (form) {
    case LossForm::edl_mse:
      return "edl_mse";
    case LossForm::re_edl_mse:
      return "re_edl_mse";
    case LossForm::ce_projected:
      return "ce_projected";
    case LossForm::softmax_mse:
      return "softmax_mse";
    case LossForm::softmax_ce:
      return "softmax_ce";
  }
  return "?";
}

LossForm loss_form_from_string(std::string_view name) {
  for (auto f : {LossForm::edl_mse, LossForm::re_edl_mse, LossForm::ce_projected,
                 LossForm::softmax_mse, LossForm::softmax_ce}) {
    if (to_string(f) == name) return f;
  }
  throw std::invalid_argument("unknown loss form '" + std::string(name) + "'");
}

std::string_view to_string(KlSchedule schedule) {
  return schedule == KlSchedule::annealed ? "annealed" : "constant";
}

KlSchedule kl_schedule_from_string(std::string_view name) {
  if (name == "annealed") return KlSchedule::annealed;
  if (name == "constant") return KlSchedule::constant;
  throw std::invalid_argument("unknown kl schedule '" + std::string(name) + "'");
}

bool LossConfig::is_evidential() const {
  return form != LossForm::softmax_mse && form != LossForm::softmax_ce;
}

double LossConfig::kl_weight(int epoch) const {
  if (kl_schedule == KlSchedule::constant) return kl_coefficient;
  return kl_coefficient * std::min(1.0, static_cast<double>(epoch) / anneal_horizon);
}

void LossConfig::validate() const {
  if (!std::isfinite(lambda) || lambda <= 0.0) throw ConfigError("loss.lambda", "must be > 0");
  if (!std::isfinite(kl_coefficient) || kl_coefficient < 0.0) {
    throw ConfigError("loss.kl_coefficient", "must be >= 0");
  }
  if (!(anneal_horizon > 0.0)) throw ConfigError("loss.anneal_horizon", "must be > 0");
  if (use_variance_term && form != LossForm::edl_mse) {
    throw ConfigError("loss.use_variance_term", "only valid with form edl_mse");
  }
  if (!is_evidential() && kl_coefficient > 0.0) {
    throw ConfigError("loss.kl_coefficient", "softmax forms have no Dirichlet to regularize");
  }
  if (evidence_fn.kind == EvidenceKind::clamped_exp && !(evidence_fn.clamp_lo < evidence_fn.clamp_hi)) {
    throw ConfigError("loss.evidence_fn", "clamp_lo must be below clamp_hi");
  }
}

DirichletParams alpha_from_logits(std::span<const double> logits, const LossConfig& cfg) {
  auto alpha = apply_evidence_fn(cfg.evidence_fn, logits);
  for (double& a : alpha) a += cfg.lambda;
  return DirichletParams(std::move(alpha));
}

double variance_term(const DirichletParams& alpha) {
  const double s = alpha.strength();
  double sum_sq = 0.0;
  for (double a : alpha.alpha()) sum_sq += a * a;
  return (s * s - sum_sq) / (s * s * (s + 1.0));
}

double edl_empirical_risk(std::span<const double> logits, std::span<const double> y,
                          const LossConfig& cfg) {
  check_target(logits, y);
  const auto alpha = alpha_from_logits(logits, cfg);
  double risk = squared_error(y, expectation(alpha));
  if (cfg.use_variance_term) risk += variance_term(alpha);
  return risk;
}

double re_edl_empirical_risk(std::span<const double> logits, std::span<const double> y,
                             const LossConfig& cfg) {
  check_target(logits, y);
  return squared_error(y, expectation(alpha_from_logits(logits, cfg)));
}

double kl_regularizer(std::span<const double> logits, std::span<const double> y, int epoch,
                      const LossConfig& cfg) {
  check_target(logits, y);
  const double weight = cfg.kl_weight(epoch);
  if (weight == 0.0) return 0.0;
  const auto tilde = modified_alpha(alpha_from_logits(logits, cfg), y, cfg.lambda);
  return weight * kl_to_scaled_uniform(tilde, cfg.lambda, KlMode::exact);
}

double ce_projected_risk(std::span<const double> logits, std::span<const double> y,
                         const LossConfig& cfg) {
  check_target(logits, y);
  const auto p = expectation(alpha_from_logits(logits, cfg));
  double risk = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] != 0.0) risk -= y[i] * std::log(p[i]);
  }
  return risk;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double softmax_mse_risk(std::span<const double> logits, std::span<const double> y) {
  check_target(logits, y);
  return squared_error(y, softmax(logits));
}

double softmax_ce_risk(std::span<const double> logits, std::span<const double> y) {
  check_target(logits, y);
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - m);
  const double log_z = m + std::log(sum);
  double risk = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) risk -= y[i] * (logits[i] - log_z);
  return risk;
}

double empirical_risk(std::span<const double> logits, std::span<const double> y,
                      const LossConfig& cfg) {
  switch (cfg.form) {
    case LossForm::edl_mse:
      return edl_empirical_risk(logits, y, cfg);
    case LossForm::re_edl_mse:
      return re_edl_empirical_risk(logits, y, cfg);
    case LossForm::ce_projected:
      return ce_projected_risk(logits, y, cfg);
    case LossForm::softmax_mse:
      return softmax_mse_risk(logits, y);
    case LossForm::softmax_ce:
      return softmax_ce_risk(logits, y);
  }
  return 0.0;
}

double total_loss(std::span<const double> logits, std::span<const double> y, int epoch,
                  const LossConfig& cfg) {
  double loss = empirical_risk(logits, y, cfg);
  if (cfg.is_evidential()) loss += kl_regularizer(logits, y, epoch, cfg);
  return loss;
}

std::vector<double> loss_gradient(std::span<const double> logits, std::span<const double> y,
                                  int epoch, const LossConfig& cfg) {
  check_target(logits, y);
  const std::size_t c = logits.size();

  if (!cfg.is_evidential()) {
    const auto s = softmax(logits);
    std::vector<double> g(c);
    if (cfg.form == LossForm::softmax_ce) {
      double y_sum = 0.0;
      for (double v : y) y_sum += v;
      for (std::size_t k = 0; k < c; ++k) g[k] = y_sum * s[k] - y[k];
      return g;
    }
    std::vector<double> dl_ds(c);
    double dot = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      dl_ds[j] = -2.0 * (y[j] - s[j]);
      dot += dl_ds[j] * s[j];
    }
    for (std::size_t k = 0; k < c; ++k) g[k] = s[k] * (dl_ds[k] - dot);
    return g;
  }

  const auto alpha = alpha_from_logits(logits, cfg);
  const double s = alpha.strength();
  const auto p = expectation(alpha);

  std::vector<double> dl_dp(c);
  if (cfg.form == LossForm::ce_projected) {
    for (std::size_t j = 0; j < c; ++j) dl_dp[j] = y[j] != 0.0 ? -y[j] / p[j] : 0.0;
  } else {
    for (std::size_t j = 0; j < c; ++j) dl_dp[j] = -2.0 * (y[j] - p[j]);
  }
  auto dl_dalpha = through_normalization(dl_dp, p, s);

  if (cfg.form == LossForm::edl_mse && cfg.use_variance_term) {
    double q = 0.0;
    for (double v : p) q += v * v;
    for (std::size_t k = 0; k < c; ++k) {
      dl_dalpha[k] += -2.0 * (p[k] - q) / (s * (s + 1.0)) - (1.0 - q) / ((s + 1.0) * (s + 1.0));
    }
  }

  const double weight = cfg.kl_weight(epoch);
  if (weight != 0.0) {
    const auto tilde = modified_alpha(alpha, y, cfg.lambda);
    const auto g_tilde = kl_to_scaled_uniform_gradient(tilde, cfg.lambda);
    // The target entry is the constant lambda, so only non-target entries carry gradient.
    for (std::size_t k = 0; k < c; ++k) dl_dalpha[k] += weight * (1.0 - y[k]) * g_tilde[k];
  }

  for (std::size_t k = 0; k < c; ++k) dl_dalpha[k] *= cfg.evidence_fn.derivative(logits[k]);
  return dl_dalpha;
}

std::vector<double> predictive_probability(std::span<const double> logits, const LossConfig& cfg) {
  if (!cfg.is_evidential()) return softmax(logits);
  return expectation(alpha_from_logits(logits, cfg));
}

}  // namespace redl
