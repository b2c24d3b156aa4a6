#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace redl {

/// Natural log of the Gamma function for x > 0.
///
/// Shifts small arguments up with the recurrence lnΓ(x) = lnΓ(x+n) − ln(x(x+1)…(x+n−1))
/// and evaluates the Stirling series once x ≥ 15. Throws std::domain_error for x ≤ 0
/// or non-finite x.
double lgamma(double x);

/// Digamma ψ(x) = d/dx lnΓ(x) for x > 0. Same recurrence + asymptotic scheme as lgamma.
double digamma(double x);

/// Trigamma ψ'(x) for x > 0. Needed by the gradient of the KL regularizer.
double trigamma(double x);

enum class EvidenceKind { relu, softplus, clamped_exp };

struct EvidenceFunction {
  EvidenceKind kind = EvidenceKind::softplus;
  double clamp_lo = -10.0;
  double clamp_hi = 10.0;

  static EvidenceFunction relu() { return {EvidenceKind::relu}; }
  static EvidenceFunction softplus() { return {EvidenceKind::softplus}; }
  static EvidenceFunction clamped_exp(double lo = -10.0, double hi = 10.0) {
    return {EvidenceKind::clamped_exp, lo, hi};
  }

  double operator()(double logit) const;
  /// Derivative with respect to the logit. ReLU uses 0 at the kink; clamped_exp is 0
  /// outside the open clamp interval.
  double derivative(double logit) const;
};

std::string_view to_string(EvidenceKind kind);
EvidenceKind evidence_kind_from_string(std::string_view name);

/// Elementwise evidence. Throws std::domain_error on non-finite logits.
std::vector<double> apply_evidence_fn(const EvidenceFunction& f, std::span<const double> logits);

/// Numerically stable softplus ln(1 + e^x).
double softplus(double x);
double sigmoid(double x);

}  // namespace redl
