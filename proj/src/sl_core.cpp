#include "redl/sl_core.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "redl/error.hpp"

namespace redl {
namespace {

void check_base_rate(const std::vector<double>& a) {
  if (a.empty()) throw InvalidParametersError("base rate must have at least one class");
  double sum = 0.0;
  for (double v : a) {
    if (!std::isfinite(v) || v < 0.0) throw InvalidParametersError("base rate entries must be >= 0");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kAdditivityTolerance) {
    throw InvalidParametersError("base rate must sum to 1, sums to " + std::to_string(sum));
  }
}

void check_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionMismatchError(std::string(what) + ": size " + std::to_string(a) + " vs " +
                                 std::to_string(b));
  }
}

}  // namespace

std::vector<double> uniform_base_rate(std::size_t num_classes) {
  if (num_classes == 0) throw InvalidParametersError("num_classes must be positive");
  return std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes));
}

DomainConfig::DomainConfig(std::size_t num_classes, double lambda)
    : DomainConfig(uniform_base_rate(num_classes), lambda) {}

DomainConfig::DomainConfig(std::vector<double> base_rate, double lambda)
    : base_rate_(std::move(base_rate)), lambda_(lambda) {
  check_base_rate(base_rate_);
  if (!std::isfinite(lambda_) || lambda_ <= 0.0) {
    throw InvalidParametersError("lambda must be finite and > 0");
  }
}

EvidenceVector::EvidenceVector(std::vector<double> e) : e_(std::move(e)) {
  for (double v : e_) {
    if (!std::isfinite(v) || v < 0.0) throw InvalidParametersError("evidence must be finite and >= 0");
  }
}

double EvidenceVector::total() const { return std::accumulate(e_.begin(), e_.end(), 0.0); }

Opinion::Opinion(std::vector<double> belief, double uncertainty, std::vector<double> base_rate)
    : belief_(std::move(belief)), uncertainty_(uncertainty), base_rate_(std::move(base_rate)) {
  check_same_size(belief_.size(), base_rate_.size(), "opinion belief/base rate");
  check_base_rate(base_rate_);
  if (!std::isfinite(uncertainty_) || uncertainty_ < 0.0 || uncertainty_ > 1.0) {
    throw InvalidParametersError("uncertainty mass must lie in [0, 1]");
  }
  double sum = uncertainty_;
  for (double b : belief_) {
    if (!std::isfinite(b) || b < 0.0) throw InvalidParametersError("belief mass must be >= 0");
    sum += b;
  }
  if (std::abs(sum - 1.0) > kAdditivityTolerance) {
    throw InvalidParametersError("belief + uncertainty must sum to 1, sums to " + std::to_string(sum));
  }
}

Opinion Opinion::vacuous(std::vector<double> base_rate) {
  std::vector<double> zero(base_rate.size(), 0.0);
  return Opinion(std::move(zero), 1.0, std::move(base_rate));
}

DirichletParams::DirichletParams(std::vector<double> alpha) : alpha_(std::move(alpha)), strength_(0.0) {
  if (alpha_.empty()) throw InvalidParametersError("Dirichlet needs at least one class");
  for (double a : alpha_) {
    if (!std::isfinite(a) || a <= 0.0) {
      throw InvalidParametersError("Dirichlet concentration must be finite and > 0, got " +
                                   std::to_string(a));
    }
    strength_ += a;
  }
}

Opinion opinion_from_evidence(const EvidenceVector& e, const DomainConfig& cfg) {
  check_same_size(e.size(), cfg.num_classes(), "opinion_from_evidence");
  const double w = cfg.prior_weight();
  const double s = e.total() + w;
  std::vector<double> b(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) b[i] = e[i] / s;
  return Opinion(std::move(b), w / s, cfg.base_rate());
}

std::vector<double> projected_probability(const Opinion& op) {
  std::vector<double> p(op.num_classes());
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = op.belief()[i] + op.base_rate()[i] * op.uncertainty();
  }
  return p;
}

std::vector<double> projected_probability(const EvidenceVector& e, double lambda) {
  if (!(lambda > 0.0)) throw InvalidParametersError("lambda must be > 0; use evidence_proportion for 0");
  const double s = e.total() + lambda * static_cast<double>(e.size());
  std::vector<double> p(e.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = (e[i] + lambda) / s;
  return p;
}

std::vector<double> evidence_proportion(const EvidenceVector& e) {
  const double total = e.total();
  if (!(total > 0.0)) throw InvalidParametersError("evidence_proportion: total evidence is zero");
  std::vector<double> p(e.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = e[i] / total;
  return p;
}

DirichletParams opinion_to_dirichlet(const Opinion& op, double prior_weight) {
  if (!std::isfinite(prior_weight) || prior_weight <= 0.0) {
    throw InvalidParametersError("prior weight must be finite and > 0");
  }
  if (op.uncertainty() <= 0.0) {
    throw DegenerateOpinionError("opinion with u = 0 has no finite Dirichlet image");
  }
  const double scale = prior_weight / op.uncertainty();
  std::vector<double> alpha(op.num_classes());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    alpha[i] = op.belief()[i] * scale + op.base_rate()[i] * prior_weight;
  }
  return DirichletParams(std::move(alpha));
}

Opinion dirichlet_to_opinion(const DirichletParams& d, double prior_weight,
                             std::span<const double> base_rate) {
  check_same_size(d.size(), base_rate.size(), "dirichlet_to_opinion");
  if (!std::isfinite(prior_weight) || prior_weight <= 0.0) {
    throw InvalidParametersError("prior weight must be finite and > 0");
  }
  const double s = d.strength();
  std::vector<double> b(d.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    double excess = d[i] - base_rate[i] * prior_weight;
    // Rounding on the forward map can leave -1 ulp where the belief was exactly zero.
    if (excess < 0.0 && excess >= -kAdditivityTolerance * s) excess = 0.0;
    if (excess < 0.0) {
      throw InvalidParametersError("alpha(" + std::to_string(i) + ") < a(x) W: belief would be negative");
    }
    b[i] = excess / s;
  }
  return Opinion(std::move(b), prior_weight / s, {base_rate.begin(), base_rate.end()});
}

DirichletParams dirichlet_from_evidence(const EvidenceVector& e, double lambda) {
  std::vector<double> alpha(e.values());
  for (double& a : alpha) a += lambda;
  return DirichletParams(std::move(alpha));
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace redl
