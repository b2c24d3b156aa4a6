#include "redl/dirichlet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "redl/error.hpp"
#include "redl/numerics.hpp"

namespace redl {

std::vector<double> expectation(const DirichletParams& d) {
  std::vector<double> p(d.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = d[i] / d.strength();
  return p;
}

std::vector<double> variance(const DirichletParams& d) {
  const double s = d.strength();
  const double denom = s * s * (s + 1.0);
  std::vector<double> v(d.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = d[i] * (s - d[i]) / denom;
  return v;
}

double categorical_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double q : p) {
    if (q > 0.0) h -= q * std::log(q);
  }
  return h;
}

double differential_entropy(const DirichletParams& d) {
  const double s = d.strength();
  const double psi_s = digamma(s);
  double h = -lgamma(s);
  for (double a : d.alpha()) h += lgamma(a) - (a - 1.0) * (digamma(a) - psi_s);
  return h;
}

double expected_entropy(const DirichletParams& d) {
  const double s = d.strength();
  const double psi_s1 = digamma(s + 1.0);
  double h = 0.0;
  for (double a : d.alpha()) h -= (a / s) * (digamma(a + 1.0) - psi_s1);
  return h;
}

double mutual_information(const DirichletParams& d) {
  const double s = d.strength();
  const double psi_s1 = digamma(s + 1.0);
  double mi = 0.0;
  for (double a : d.alpha()) {
    const double p = a / s;
    mi -= p * (std::log(p) - digamma(a + 1.0) + psi_s1);
  }
  return mi;
}

double log_density(const DirichletParams& d, std::span<const double> log_p) {
  if (log_p.size() != d.size()) throw DimensionMismatchError("log_density: size mismatch");
  double v = lgamma(d.strength());
  for (std::size_t i = 0; i < d.size(); ++i) v += (d[i] - 1.0) * log_p[i] - lgamma(d[i]);
  return v;
}

double kl_normalizer(std::size_t num_classes, double lambda) {
  const double c = static_cast<double>(num_classes);
  return c * lgamma(lambda) - lgamma(c * lambda);
}

double kl_to_scaled_uniform(const DirichletParams& d_tilde, double lambda, KlMode mode) {
  if (!std::isfinite(lambda) || lambda <= 0.0) throw InvalidParametersError("lambda must be > 0");
  const double s = d_tilde.strength();
  const double psi_s = digamma(s);
  double kl = lgamma(s);
  for (double a : d_tilde.alpha()) kl += -lgamma(a) + (a - lambda) * (digamma(a) - psi_s);
  if (mode == KlMode::exact) kl += kl_normalizer(d_tilde.size(), lambda);
  return kl;
}

std::vector<double> kl_to_scaled_uniform_gradient(const DirichletParams& d_tilde, double lambda) {
  const double s = d_tilde.strength();
  const double c = static_cast<double>(d_tilde.size());
  const double shared = trigamma(s) * (s - c * lambda);
  std::vector<double> g(d_tilde.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = (d_tilde[i] - lambda) * trigamma(d_tilde[i]) - shared;
  }
  return g;
}

UncertaintyReport uncertainty_report(const DirichletParams& d, double lambda) {
  const auto p = expectation(d);
  return UncertaintyReport{
      .mp = *std::max_element(p.begin(), p.end()),
      .um = lambda * static_cast<double>(d.size()) / d.strength(),
      .de = differential_entropy(d),
      .mi = mutual_information(d),
      .ee = expected_entropy(d),
  };
}

DirichletSampler::DirichletSampler(DirichletParams d, std::uint64_t seed)
    : d_(std::move(d)), gen_(seed), normal_(0.0, 1.0), scratch_(d_.size()) {}

double DirichletSampler::uniform_open() {
  // 53 random bits, offset by half an ulp so the result lies in (0, 1).
  return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
}

double DirichletSampler::log_gamma_variate(double shape) {
  // Marsaglia-Tsang squeeze/rejection; shapes below 1 are boosted by one and corrected
  // with U^{1/shape}, which is kept in log space.
  const double boosted = shape < 1.0 ? shape + 1.0 : shape;
  const double dd = boosted - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * dd);
  double log_g = 0.0;
  for (;;) {
    const double x = normal_(gen_);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform_open();
    if (u < 1.0 - 0.0331 * x * x * x * x ||
        std::log(u) < 0.5 * x * x + dd * (1.0 - v + std::log(v))) {
      log_g = std::log(dd) + std::log(v);
      break;
    }
  }
  if (shape < 1.0) log_g += std::log(uniform_open()) / shape;
  return log_g;
}

void DirichletSampler::draw(std::span<double> p, std::span<double> log_p) {
  const std::size_t c = d_.size();
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < c; ++i) {
    scratch_[i] = log_gamma_variate(d_[i]);
    max_log = std::max(max_log, scratch_[i]);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < c; ++i) sum += std::exp(scratch_[i] - max_log);
  const double log_norm = max_log + std::log(sum);
  for (std::size_t i = 0; i < c; ++i) {
    log_p[i] = scratch_[i] - log_norm;
    p[i] = std::exp(log_p[i]);
  }
}

void DirichletSampler::draw(std::span<double> p) {
  std::vector<double> log_p(p.size());
  draw(p, log_p);
}

SampleMatrix sample(const DirichletParams& d, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidParametersError("sample: n must be >= 1");
  SampleMatrix out{n, d.size(), std::vector<double>(n * d.size())};
  DirichletSampler sampler(d, seed);
  std::vector<double> log_p(d.size());
  for (std::size_t r = 0; r < n; ++r) {
    sampler.draw(std::span<double>(out.values.data() + r * d.size(), d.size()), log_p);
  }
  return out;
}

}  // namespace redl
