#include "redl/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

#include "redl/data.hpp"
#include "redl/dirichlet.hpp"
#include "redl/losses.hpp"
#include "redl/metrics.hpp"
#include "redl/nn.hpp"
#include "redl/numerics.hpp"

namespace redl {
namespace {

struct Accumulator {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;

  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  McEstimate estimate() const {
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1));
    return {mean, std::sqrt(var / static_cast<double>(n))};
  }
};

template <typename F>
McEstimate mc(const DirichletParams& d, std::size_t n, std::uint64_t seed, F&& per_draw) {
  DirichletSampler sampler(d, seed);
  std::vector<double> p(d.size());
  std::vector<double> log_p(d.size());
  Accumulator acc;
  for (std::size_t i = 0; i < n; ++i) {
    sampler.draw(p, log_p);
    acc.add(per_draw(p, log_p));
  }
  return acc.estimate();
}

double draw_entropy(std::span<const double> p, std::span<const double> log_p) {
  double h = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) h -= p[k] * log_p[k];
  return h;
}

/// Collects the worst value of a quantity over many trials.
class Check {
 public:
  Check(std::string group, std::string name, double tolerance)
      : r_{std::move(group), std::move(name), true, 0.0, tolerance, ""} {}

  void error(double e, const std::string& where = "") {
    if (!(e <= r_.observed) || std::isnan(e)) {
      r_.observed = e;
      if (!where.empty()) r_.detail = where;
    }
  }
  void require(bool ok, const std::string& where) {
    if (!ok && r_.passed) {
      r_.passed = false;
      r_.detail = where;
    }
  }
  CheckResult finish() {
    if (!(r_.observed <= r_.tolerance)) r_.passed = false;
    return r_;
  }

 private:
  CheckResult r_;
};

std::vector<double> random_simplex(std::mt19937_64& gen, std::size_t c, double total) {
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  std::vector<double> v(c);
  double s = 0.0;
  for (auto& x : v) s += (x = unit(gen));
  for (auto& x : v) x *= total / s;
  return v;
}

std::vector<double> one_hot(std::size_t c, std::size_t k) {
  std::vector<double> y(c, 0.0);
  y[k] = 1.0;
  return y;
}

std::vector<CheckResult> special_function_checks() {
  struct Row {
    double x, lg, dg, tg;
  };
  const Row rows[] = {
      {0.001, 6.907178885383853682512345, -1000.575571931810300471473, 1000001.642533195868978033},
      {0.5, 0.5723649429247000870717137, -1.963510026021423479440976, 4.934802200544679309417245},
      {1.0, 0.0, -0.5772156649015328606065121, 1.644934066848226436472415},
      {2.5, 0.2846828704729191596324947, 0.7031566406452431872256903, 0.4903577561002348649728011},
      {10.0, 12.80182748008146961120772, 2.251752589066721107647456, 0.105166335681685746122201},
      {100.5, 361.4355404677776215552519, 4.605174352581845211868679, 0.009999916669583102711636787},
      {1e6, 12815504.56914761165997697, 13.81551005796419077077462, 0.000001000000500000166666666667},
  };
  Check lg("numerics", "lgamma_reference_values", 1e-12);
  Check dg("numerics", "digamma_reference_values", 1e-12);
  Check tg("numerics", "trigamma_reference_values", 1e-12);
  for (const auto& r : rows) {
    const std::string at = "x=" + format_double(r.x);
    lg.error(std::abs(lgamma(r.x) - r.lg) / std::max(1.0, std::abs(r.lg)), at);
    dg.error(std::abs(digamma(r.x) - r.dg) / std::max(1.0, std::abs(r.dg)), at);
    tg.error(std::abs(trigamma(r.x) - r.tg) / std::max(1.0, std::abs(r.tg)), at);
  }
  return {lg.finish(), dg.finish(), tg.finish()};
}

std::vector<CheckResult> sl_checks(std::mt19937_64& gen) {
  std::uniform_int_distribution<std::size_t> classes(2, 10);
  std::uniform_real_distribution<double> u_dist(0.01, 1.0);
  std::uniform_real_distribution<double> lambda_dist(0.1, 2.0);
  Check opinion_trip("sl_core", "opinion_dirichlet_opinion_roundtrip", 1e-12);
  Check dirichlet_trip("sl_core", "dirichlet_opinion_dirichlet_roundtrip", 1e-12);
  Check expectation_id("sl_core", "projected_probability_equals_expectation", 1e-12);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t c = classes(gen);
    const double u = u_dist(gen);
    const double w = static_cast<double>(c) * lambda_dist(gen);
    const auto a = random_simplex(gen, c, 1.0);
    auto b = random_simplex(gen, c, 1.0 - u);
    const Opinion op(b, 1.0 - std::accumulate(b.begin(), b.end(), 0.0), a);
    const auto d = opinion_to_dirichlet(op, w);
    const auto back = dirichlet_to_opinion(d, w, a);
    double err = std::abs(back.uncertainty() - op.uncertainty());
    for (std::size_t k = 0; k < c; ++k) err = std::max(err, std::abs(back.belief()[k] - op.belief()[k]));
    opinion_trip.error(err);

    const auto d2 = opinion_to_dirichlet(back, w);
    double derr = 0.0;
    for (std::size_t k = 0; k < c; ++k) derr = std::max(derr, std::abs(d2[k] - d[k]) / d[k]);
    dirichlet_trip.error(derr);

    const auto pp = projected_probability(op);
    const auto ex = expectation(d);
    double eerr = 0.0;
    for (std::size_t k = 0; k < c; ++k) eerr = std::max(eerr, std::abs(pp[k] - ex[k]));
    expectation_id.error(eerr);
  }

  Check spot("sl_core", "hundred_class_spot_value", 1e-15);
  std::vector<double> e(100, 0.0);
  e[0] = 100.0;
  const double p1 = projected_probability(EvidenceVector(e), 1.0)[0];
  spot.error(std::abs(p1 - 0.505), "P(1)=" + format_double(p1));

  Check invariance("sl_core", "argmax_lambda_and_scale_invariance", 1e-12);
  std::exponential_distribution<double> ev(0.2);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> raw(classes(gen));
    for (auto& x : raw) x = ev(gen);
    const EvidenceVector evec(raw);
    const auto ref = argmax(projected_probability(evec, 0.1));
    for (int l = 1; l <= 13; ++l) {
      invariance.require(argmax(projected_probability(evec, 0.1 * l)) == ref, "argmax changed with lambda");
    }
    const auto base = evidence_proportion(evec);
    for (double k : {0.5, 2.0, 10.0}) {
      std::vector<double> scaled = raw;
      for (auto& x : scaled) x *= k;
      const auto p = evidence_proportion(EvidenceVector(scaled));
      for (std::size_t i = 0; i < p.size(); ++i) invariance.error(std::abs(p[i] - base[i]));
    }
  }
  return {opinion_trip.finish(), dirichlet_trip.finish(), expectation_id.finish(), spot.finish(),
          invariance.finish()};
}

std::vector<CheckResult> dirichlet_checks(std::mt19937_64& gen, const SelftestOptions& opt) {
  std::uniform_real_distribution<double> alpha_dist(0.5, 6.0);
  const std::size_t sizes[] = {2, 3, 5, 10};
  Check decomposition("losses", "edl_mse_equals_re_edl_plus_variance", 1e-12);
  Check mse_mc("losses", "edl_mse_matches_monte_carlo_3se", 3.0);
  Check ee_mc("dirichlet", "expected_entropy_matches_monte_carlo_3se", 3.0);
  Check de_mc("dirichlet", "differential_entropy_matches_monte_carlo_3se", 3.0);
  Check mi_mc("dirichlet", "mutual_information_matches_monte_carlo_3se", 3.0);
  Check mi_id("dirichlet", "mutual_information_decomposition", 1e-12);
  Check kl_mc("dirichlet", "exact_kl_matches_monte_carlo_3se", 3.0);
  for (int t = 0; t < 4; ++t) {
    const std::size_t c = sizes[t];
    std::vector<double> alpha(c);
    for (auto& a : alpha) a = alpha_dist(gen);
    const DirichletParams d(alpha);
    const auto y = one_hot(c, static_cast<std::size_t>(t) % c);
    const std::uint64_t s = opt.seed + 17 * static_cast<std::uint64_t>(t);
    const std::string at = "C=" + std::to_string(c);

    // Logits whose softplus evidence gives alpha with lambda = 0.5.
    LossConfig cfg;
    cfg.lambda = 0.5;
    std::vector<double> logits(c);
    for (std::size_t k = 0; k < c; ++k) logits[k] = std::log(std::expm1(alpha[k]));
    const auto a_cfg = alpha_from_logits(logits, cfg);
    cfg.form = LossForm::edl_mse;
    cfg.use_variance_term = true;
    const double edl = edl_empirical_risk(logits, y, cfg);
    const double parts = re_edl_empirical_risk(logits, y, cfg) + variance_term(a_cfg);
    decomposition.error(std::abs(edl - parts) / std::max(1.0, std::abs(edl)), at);

    const auto se = mc_squared_error(a_cfg, y, opt.mc_samples, s);
    mse_mc.error(std::abs(se.mean - edl) / se.standard_error, at);

    const auto ee = mc_expected_entropy(d, opt.mc_samples, s + 1);
    ee_mc.error(std::abs(ee.mean - expected_entropy(d)) / ee.standard_error, at);
    const auto de = mc_differential_entropy(d, opt.mc_samples, s + 2);
    de_mc.error(std::abs(de.mean - differential_entropy(d)) / de.standard_error, at);
    const auto mi = mc_mutual_information(d, opt.mc_samples, s + 3);
    mi_mc.error(std::abs(mi.mean - mutual_information(d)) / mi.standard_error, at);
    mi_id.error(std::abs(mutual_information(d) - (categorical_entropy(expectation(d)) - expected_entropy(d))), at);

    const auto kl = mc_kl_to_scaled_uniform(d, 0.7, opt.mc_samples, s + 4);
    kl_mc.error(std::abs(kl.mean - kl_to_scaled_uniform(d, 0.7, KlMode::exact)) / kl.standard_error, at);
  }

  Check kl_props("dirichlet", "exact_kl_nonnegative_zero_at_prior", 1e-12);
  Check kl_const("dirichlet", "truncated_exact_gap_is_constant", 1e-9);
  std::uniform_real_distribution<double> lambda_dist(0.2, 1.5);
  for (int t = 0; t < 10; ++t) {
    const std::size_t c = sizes[t % 4];
    const double lambda = lambda_dist(gen);
    std::vector<double> alpha(c);
    for (auto& a : alpha) a = alpha_dist(gen);
    const DirichletParams d(alpha);
    const double exact = kl_to_scaled_uniform(d, lambda, KlMode::exact);
    kl_props.require(exact > 0.0, "exact KL not positive away from the prior");
    kl_props.error(std::abs(kl_to_scaled_uniform(DirichletParams(std::vector<double>(c, lambda)), lambda, KlMode::exact)));
    const double gap = exact - kl_to_scaled_uniform(d, lambda, KlMode::truncated);
    kl_const.error(std::abs(gap - kl_normalizer(c, lambda)) / std::max(1.0, std::abs(gap)));
  }
  return {decomposition.finish(), mse_mc.finish(), ee_mc.finish(), de_mc.finish(), mi_mc.finish(),
          mi_id.finish(),         kl_mc.finish(),  kl_props.finish(), kl_const.finish()};
}

std::vector<LossConfig> all_loss_configs() {
  std::vector<LossConfig> out;
  const LossForm forms[] = {LossForm::edl_mse, LossForm::re_edl_mse, LossForm::ce_projected,
                            LossForm::softmax_mse, LossForm::softmax_ce};
  const EvidenceFunction fns[] = {EvidenceFunction::relu(), EvidenceFunction::softplus(),
                                  EvidenceFunction::clamped_exp()};
  for (auto form : forms) {
    for (const auto& fn : fns) {
      LossConfig cfg;
      cfg.form = form;
      cfg.evidence_fn = fn;
      cfg.lambda = 0.6;
      if (cfg.is_evidential()) cfg.kl_coefficient = 0.8;
      cfg.use_variance_term = form == LossForm::edl_mse;
      out.push_back(cfg);
      if (!cfg.is_evidential()) break;
    }
  }
  return out;
}

std::string cfg_label(const LossConfig& cfg) {
  return std::string(to_string(cfg.form)) + "/" + std::string(to_string(cfg.evidence_fn.kind));
}

/// Uniform in [-3, 3] but away from the relu kink at 0.
double logit_draw(std::mt19937_64& gen) {
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  double x = 0.0;
  do x = dist(gen);
  while (std::abs(x) < 1e-2);
  return x;
}

std::vector<CheckResult> gradient_checks(std::mt19937_64& gen, int draws) {
  constexpr double h = 1e-5;
  Check logit_grad("losses", "logit_gradient_matches_finite_differences", 1e-4);
  Check param_grad("nn", "parameter_gradient_matches_finite_differences", 1e-4);
  std::uniform_int_distribution<std::size_t> classes(2, 6);
  for (const auto& cfg : all_loss_configs()) {
    for (int t = 0; t < draws; ++t) {
      const std::size_t c = classes(gen);
      std::vector<double> l(c);
      for (auto& x : l) x = logit_draw(gen);
      const auto y = one_hot(c, static_cast<std::size_t>(t) % c);
      const int epoch = 3 + t % 10;
      const auto g = loss_gradient(l, y, epoch, cfg);
      for (std::size_t k = 0; k < c; ++k) {
        auto lp = l;
        auto lm = l;
        lp[k] += h;
        lm[k] -= h;
        const double fd = (total_loss(lp, y, epoch, cfg) - total_loss(lm, y, epoch, cfg)) / (2 * h);
        logit_grad.error(relative_error(g[k], fd), cfg_label(cfg));
      }
    }

    // End to end through a small tanh network on a batch of four samples.
    MlpSpec spec{{2, 8, 8, 3}, HiddenActivation::tanh, 11};
    Mlp net(spec);
    Eigen::MatrixXd x(4, 2);
    x << 0.3, -1.2, 1.5, 0.4, -0.7, 0.9, 0.1, 0.05;
    Eigen::MatrixXd targets = Eigen::MatrixXd::Zero(4, 3);
    for (int i = 0; i < 4; ++i) targets(i, i % 3) = 1.0;
    const auto logits = net.forward(x);
    if ((logits.array().abs() < 1e-3).any()) continue;
    Eigen::MatrixXd grad;
    const auto cache = net.forward_cached(x);
    batch_loss(cache.logits(), targets, 4, cfg, &grad);
    const Eigen::VectorXd analytic = net.backward(cache, grad);
    Eigen::VectorXd theta = net.parameters();
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double keep = theta[i];
      theta[i] = keep + h;
      net.set_parameters(theta);
      const double up = batch_loss(net.forward(x), targets, 4, cfg);
      theta[i] = keep - h;
      net.set_parameters(theta);
      const double down = batch_loss(net.forward(x), targets, 4, cfg);
      theta[i] = keep;
      param_grad.error(relative_error(analytic[i], (up - down) / (2 * h)), cfg_label(cfg));
    }
    net.set_parameters(theta);
  }
  return {logit_grad.finish(), param_grad.finish()};
}

double brute_force_auroc(const std::vector<ScoredSample>& s) {
  double wins = 0.0;
  double pairs = 0.0;
  for (const auto& p : s) {
    if (!p.is_positive) continue;
    for (const auto& n : s) {
      if (n.is_positive) continue;
      pairs += 1.0;
      wins += p.confidence > n.confidence ? 1.0 : (p.confidence == n.confidence ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

/// Mean over positives of the precision among samples scoring at least as high.
double step_through_aupr(const std::vector<ScoredSample>& s) {
  double total = 0.0;
  std::size_t positives = 0;
  for (const auto& p : s) {
    if (!p.is_positive) continue;
    ++positives;
    double above = 0.0;
    double above_pos = 0.0;
    for (const auto& q : s) {
      if (q.confidence >= p.confidence) {
        above += 1.0;
        above_pos += q.is_positive ? 1.0 : 0.0;
      }
    }
    total += above_pos / above;
  }
  return total / static_cast<double>(positives);
}

std::vector<CheckResult> metric_checks(std::mt19937_64& gen) {
  Check roc("metrics", "auroc_matches_pair_counting", 1e-12);
  Check pr("metrics", "aupr_matches_step_through", 1e-12);
  std::uniform_int_distribution<int> size(2, 200);
  std::uniform_int_distribution<int> grid(0, 20);  // coarse scores so ties occur
  std::bernoulli_distribution coin(0.5);
  for (int t = 0; t < 100; ++t) {
    const int n = size(gen);
    std::vector<ScoredSample> s(static_cast<std::size_t>(n));
    for (auto& x : s) x = {grid(gen) / 20.0, coin(gen)};
    s[0].is_positive = true;
    s[1].is_positive = false;
    roc.error(std::abs(auroc(s) - brute_force_auroc(s)));
    if (t < 25) pr.error(std::abs(aupr(s) - step_through_aupr(s)));
  }

  Check trivial("metrics", "brier_and_ece_trivial_cases", 0.0);
  Eigen::MatrixXd p(2, 2);
  p << 1, 0, 0, 1;
  trivial.error(std::abs(brier(p, p)));
  Eigen::MatrixXd q(1, 2);
  q << 0.5, 0.5;
  Eigen::MatrixXd y(1, 2);
  y << 1, 0;
  trivial.error(std::abs(brier(q, y) - 0.5));
  const double conf[] = {1.0, 1.0};
  const bool correct[] = {true, true};
  trivial.error(std::abs(ece(conf, correct)));
  const bool wrong[] = {false, false};
  trivial.error(std::abs(ece(conf, wrong) - 1.0));
  return {roc.finish(), pr.finish(), trivial.finish()};
}

std::vector<CheckResult> determinism_checks() {
  Check same("harness", "training_is_deterministic", 0.0);
  auto ds = gaussian_blobs(3, 30, 2, 0.8, 5);
  LossConfig cfg;
  cfg.kl_coefficient = 0.5;
  TrainOptions opt;
  opt.epochs = 3;
  opt.batch_size = 16;
  opt.seed = 9;
  MlpSpec spec{{2, 8, 3}, HiddenActivation::relu, 9};
  Mlp a(spec);
  Mlp b(spec);
  train(a, ds, cfg, opt);
  train(b, ds, cfg, opt);
  same.error((a.parameters() - b.parameters()).cwiseAbs().maxCoeff());
  const auto d1 = sample(DirichletParams({0.3, 2.0, 5.0}), 100, 3);
  const auto d2 = sample(DirichletParams({0.3, 2.0, 5.0}), 100, 3);
  same.require(d1.values == d2.values, "sampler not reproducible");
  return {same.finish()};
}

}  // namespace

bool McEstimate::within(double exact, double num_se) const {
  return std::abs(mean - exact) <= num_se * standard_error;
}

McEstimate mc_squared_error(const DirichletParams& d, std::span<const double> y, std::size_t n,
                            std::uint64_t seed) {
  return mc(d, n, seed, [&](std::span<const double> p, std::span<const double>) {
    double s = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) s += (y[k] - p[k]) * (y[k] - p[k]);
    return s;
  });
}

McEstimate mc_expected_entropy(const DirichletParams& d, std::size_t n, std::uint64_t seed) {
  return mc(d, n, seed, draw_entropy);
}

McEstimate mc_differential_entropy(const DirichletParams& d, std::size_t n, std::uint64_t seed) {
  return mc(d, n, seed,
            [&](std::span<const double>, std::span<const double> log_p) { return -log_density(d, log_p); });
}

McEstimate mc_mutual_information(const DirichletParams& d, std::size_t n, std::uint64_t seed) {
  auto ee = mc_expected_entropy(d, n, seed);
  return {categorical_entropy(expectation(d)) - ee.mean, ee.standard_error};
}

McEstimate mc_kl_to_scaled_uniform(const DirichletParams& d, double lambda, std::size_t n,
                                   std::uint64_t seed) {
  const DirichletParams prior(std::vector<double>(d.size(), lambda));
  return mc(d, n, seed, [&](std::span<const double>, std::span<const double> log_p) {
    return log_density(d, log_p) - log_density(prior, log_p);
  });
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

std::vector<CheckResult> run_selftest(const SelftestOptions& options) {
  std::mt19937_64 gen(options.seed);
  std::vector<CheckResult> out;
  auto append = [&](std::vector<CheckResult> part) { out.insert(out.end(), part.begin(), part.end()); };
  append(special_function_checks());
  append(sl_checks(gen));
  append(dirichlet_checks(gen, options));
  append(gradient_checks(gen, 20));
  append(metric_checks(gen));
  append(determinism_checks());
  return out;
}

CsvTable selftest_table(const std::vector<CheckResult>& results) {
  CsvTable table{{"group", "name", "passed", "observed", "tolerance", "detail"}, {}};
  for (const auto& r : results) {
    table.add_row({r.group, r.name, r.passed ? "1" : "0", format_double(r.observed), format_double(r.tolerance),
                   r.detail});
  }
  return table;
}

}  // namespace redl
