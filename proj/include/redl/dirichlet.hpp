#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "redl/sl_core.hpp"

namespace redl {

/// E[p(x)] = alpha(x) / S.
std::vector<double> expectation(const DirichletParams& d);

/// Var[p(x)] = alpha(x) (S - alpha(x)) / (S^2 (S + 1)).
std::vector<double> variance(const DirichletParams& d);

/// Shannon entropy of a categorical distribution, in nats (0 ln 0 = 0).
double categorical_entropy(std::span<const double> p);

/// Entropy of the Dirichlet density itself (nats). Can be negative.
double differential_entropy(const DirichletParams& d);

/// E_{p ~ Dir(alpha)}[H(p)] = -sum (alpha/S)(psi(alpha + 1) - psi(S + 1)).
double expected_entropy(const DirichletParams& d);

/// Distributional uncertainty: H(E[p]) - E[H(p)].
double mutual_information(const DirichletParams& d);

/// ln Dir(p; alpha) evaluated from log-probabilities.
double log_density(const DirichletParams& d, std::span<const double> log_p);

enum class KlMode {
  /// The optimization form: drops the alpha-independent normalizer.
  truncated,
  /// KL(Dir(alpha_tilde) || Dir(lambda 1)); >= 0 and zero iff alpha_tilde = lambda 1.
  exact,
};

/// KL divergence of Dir(alpha_tilde) from the symmetric Dir(lambda * 1).
double kl_to_scaled_uniform(const DirichletParams& d_tilde, double lambda,
                            KlMode mode = KlMode::truncated);

/// C lnGamma(lambda) - lnGamma(C lambda): exact minus truncated KL.
double kl_normalizer(std::size_t num_classes, double lambda);

/// Gradient of kl_to_scaled_uniform with respect to alpha_tilde (same for both modes).
std::vector<double> kl_to_scaled_uniform_gradient(const DirichletParams& d_tilde, double lambda);

struct UncertaintyReport {
  double mp;  ///< max projected probability
  double um;  ///< uncertainty mass W / S
  double de;  ///< differential entropy
  double mi;  ///< mutual information
  double ee;  ///< expected entropy
};

/// All measures for alpha = e + lambda (uncertainty mass uses W = C lambda).
UncertaintyReport uncertainty_report(const DirichletParams& d, double lambda);

/// Streams Dirichlet draws as normalized Gamma variates. Owns its generator, so a
/// sampler is single-threaded; use one per thread with distinct seeds.
class DirichletSampler {
 public:
  DirichletSampler(DirichletParams d, std::uint64_t seed);

  /// Writes one draw. Log-probabilities are computed before exponentiation, so they stay
  /// finite when tiny concentrations push p(x) below the smallest double.
  void draw(std::span<double> p, std::span<double> log_p);
  void draw(std::span<double> p);

  const DirichletParams& params() const { return d_; }

 private:
  double log_gamma_variate(double shape);
  double uniform_open();

  DirichletParams d_;
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_;
  std::vector<double> scratch_;
};

/// Row-major n x C block of draws.
struct SampleMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
};

/// n i.i.d. draws; bit-identical for identical (d, n, seed).
SampleMatrix sample(const DirichletParams& d, std::size_t n, std::uint64_t seed);

}  // namespace redl
