#pragma once

// Subjective opinions over a C-class domain and their bijection with Dirichlet densities.
//
// With base rate a and prior weight W:
//   alpha(x) = b(x) W / u + a(x) W          (opinion -> Dirichlet)
//   u = W / S,  b(x) = (alpha(x) - a(x) W) / S   (Dirichlet -> opinion)
// The per-class prior weight is lambda = W / C, so a uniform base rate gives alpha = e + lambda.

#include <cstddef>
#include <span>
#include <vector>

namespace redl {

/// Tolerance used for the additivity invariants (sum b + u = 1, sum a = 1).
inline constexpr double kAdditivityTolerance = 1e-12;

class DomainConfig {
 public:
  /// Uniform base rate 1/C.
  DomainConfig(std::size_t num_classes, double lambda);
  DomainConfig(std::vector<double> base_rate, double lambda);

  std::size_t num_classes() const { return base_rate_.size(); }
  const std::vector<double>& base_rate() const { return base_rate_; }
  double lambda() const { return lambda_; }
  /// W = C * lambda.
  double prior_weight() const { return lambda_ * static_cast<double>(base_rate_.size()); }

 private:
  std::vector<double> base_rate_;
  double lambda_;
};

class EvidenceVector {
 public:
  explicit EvidenceVector(std::vector<double> e);

  std::size_t size() const { return e_.size(); }
  const std::vector<double>& values() const { return e_; }
  double operator[](std::size_t i) const { return e_[i]; }
  double total() const;

 private:
  std::vector<double> e_;
};

class Opinion {
 public:
  Opinion(std::vector<double> belief, double uncertainty, std::vector<double> base_rate);

  /// Zero belief, u = 1.
  static Opinion vacuous(std::vector<double> base_rate);

  std::size_t num_classes() const { return belief_.size(); }
  const std::vector<double>& belief() const { return belief_; }
  double uncertainty() const { return uncertainty_; }
  const std::vector<double>& base_rate() const { return base_rate_; }

 private:
  std::vector<double> belief_;
  double uncertainty_;
  std::vector<double> base_rate_;
};

class DirichletParams {
 public:
  explicit DirichletParams(std::vector<double> alpha);

  std::size_t size() const { return alpha_.size(); }
  const std::vector<double>& alpha() const { return alpha_; }
  double operator[](std::size_t i) const { return alpha_[i]; }
  /// S = sum alpha.
  double strength() const { return strength_; }

 private:
  std::vector<double> alpha_;
  double strength_;
};

Opinion opinion_from_evidence(const EvidenceVector& e, const DomainConfig& cfg);

/// P(x) = b(x) + a(x) u.
std::vector<double> projected_probability(const Opinion& op);

/// Closed form (e(x) + lambda) / (sum e + C lambda) for a uniform base rate.
std::vector<double> projected_probability(const EvidenceVector& e, double lambda);

/// The lambda = 0 limit: e(x) / sum e. Throws InvalidParametersError when sum e = 0.
std::vector<double> evidence_proportion(const EvidenceVector& e);

/// Throws DegenerateOpinionError when u = 0.
DirichletParams opinion_to_dirichlet(const Opinion& op, double prior_weight);

/// Throws InvalidParametersError when alpha(x) < a(x) W for some x.
Opinion dirichlet_to_opinion(const DirichletParams& d, double prior_weight,
                             std::span<const double> base_rate);

/// alpha = e + lambda.
DirichletParams dirichlet_from_evidence(const EvidenceVector& e, double lambda);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> v);

std::vector<double> uniform_base_rate(std::size_t num_classes);

}  // namespace redl
