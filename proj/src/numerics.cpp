#include "redl/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace redl {
namespace {

// Arguments below this are shifted up by the recurrence before the asymptotic series.
constexpr double kAsymptoticThreshold = 15.0;

void check_domain(double x, const char* fn) {
  if (!std::isfinite(x) || x <= 0.0) {
    throw std::domain_error(std::string(fn) + ": argument must be finite and > 0, got " +
                            std::to_string(x));
  }
}

double lgamma_asymptotic(double x) {
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // B_{2k} / (2k (2k-1) x^{2k-1}), k = 1..8, Horner in 1/x^2.
  const double series =
      inv * (1.0 / 12.0 +
             inv2 * (-1.0 / 360.0 +
                     inv2 * (1.0 / 1260.0 +
                             inv2 * (-1.0 / 1680.0 +
                                     inv2 * (1.0 / 1188.0 +
                                             inv2 * (-691.0 / 360360.0 +
                                                     inv2 * (1.0 / 156.0 +
                                                             inv2 * (-3617.0 / 122400.0))))))));
  return (x - 0.5) * std::log(x) - x + 0.5 * std::log(2.0 * std::numbers::pi) + series;
}

double digamma_asymptotic(double x) {
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv2 * (1.0 / 12.0 +
              inv2 * (-1.0 / 120.0 +
                      inv2 * (1.0 / 252.0 +
                              inv2 * (-1.0 / 240.0 +
                                      inv2 * (1.0 / 132.0 +
                                              inv2 * (-691.0 / 32760.0 + inv2 * (1.0 / 12.0)))))));
  return std::log(x) - 0.5 * inv - series;
}

double trigamma_asymptotic(double x) {
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv * inv2 *
      (1.0 / 6.0 +
       inv2 * (-1.0 / 30.0 +
               inv2 * (1.0 / 42.0 +
                       inv2 * (-1.0 / 30.0 +
                               inv2 * (5.0 / 66.0 + inv2 * (-691.0 / 2730.0 + inv2 * (7.0 / 6.0)))))));
  return inv + 0.5 * inv2 + series;
}

}  // namespace

double lgamma(double x) {
  check_domain(x, "lgamma");
  if (x >= kAsymptoticThreshold) return lgamma_asymptotic(x);
  double product = 1.0;
  while (x < kAsymptoticThreshold) {
    product *= x;
    x += 1.0;
  }
  return lgamma_asymptotic(x) - std::log(product);
}

double digamma(double x) {
  check_domain(x, "digamma");
  double shift = 0.0;
  while (x < kAsymptoticThreshold) {
    shift += 1.0 / x;
    x += 1.0;
  }
  return digamma_asymptotic(x) - shift;
}

double trigamma(double x) {
  check_domain(x, "trigamma");
  double shift = 0.0;
  while (x < kAsymptoticThreshold) {
    shift += 1.0 / (x * x);
    x += 1.0;
  }
  return trigamma_asymptotic(x) + shift;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double EvidenceFunction::operator()(double logit) const {
  switch (kind) {
    case EvidenceKind::relu:
      return logit > 0.0 ? logit : 0.0;
    case EvidenceKind::softplus:
      return redl::softplus(logit);
    case EvidenceKind::clamped_exp:
      return std::exp(std::clamp(logit, clamp_lo, clamp_hi));
  }
  return 0.0;
}

double EvidenceFunction::derivative(double logit) const {
  switch (kind) {
    case EvidenceKind::relu:
      return logit > 0.0 ? 1.0 : 0.0;
    case EvidenceKind::softplus:
      return sigmoid(logit);
    case EvidenceKind::clamped_exp:
      return (logit > clamp_lo && logit < clamp_hi) ? std::exp(logit) : 0.0;
  }
  return 0.0;
}

std::string_view to_string(EvidenceKind kind) {
  switch (kind) {
    case EvidenceKind::relu:
      return "relu";
    case EvidenceKind::softplus:
      return "softplus";
    case EvidenceKind::clamped_exp:
      return "clamped_exp";
  }
  return "?";
}

EvidenceKind evidence_kind_from_string(std::string_view name) {
  if (name == "relu") return EvidenceKind::relu;
  if (name == "softplus") return EvidenceKind::softplus;
  if (name == "clamped_exp" || name == "exp") return EvidenceKind::clamped_exp;
  throw std::invalid_argument("unknown evidence function '" + std::string(name) + "'");
}

std::vector<double> apply_evidence_fn(const EvidenceFunction& f, std::span<const double> logits) {
  std::vector<double> out;
  out.reserve(logits.size());
  for (double l : logits) {
    if (!std::isfinite(l)) throw std::domain_error("apply_evidence_fn: non-finite logit");
    out.push_back(f(l));
  }
  return out;
}

}  // namespace redl
