#pragma once

// Per-sample loss family over a logit vector and a one-hot target, with analytic gradients.
//
// Evidential forms map logits l through the evidence function f and use alpha = f(l) + lambda.
// Softmax forms ignore lambda and the evidence function.

#include <span>
#include <string_view>
#include <vector>

#include "redl/numerics.hpp"
#include "redl/sl_core.hpp"

namespace redl {

enum class LossForm { edl_mse, re_edl_mse, ce_projected, softmax_mse, softmax_ce };
enum class KlSchedule { annealed, constant };

std::string_view to_string(LossForm form);
LossForm loss_form_from_string(std::string_view name);
std::string_view to_string(KlSchedule schedule);
KlSchedule kl_schedule_from_string(std::string_view name);

struct LossConfig {
  LossForm form = LossForm::re_edl_mse;
  double lambda = 1.0;
  /// Adds sum Var[p(x)] to edl_mse. Only meaningful for that form.
  bool use_variance_term = false;
  /// mu; the regularizer weight at epoch t is mu * min(1, t / anneal_horizon) when annealed.
  double kl_coefficient = 0.0;
  KlSchedule kl_schedule = KlSchedule::annealed;
  double anneal_horizon = 10.0;
  EvidenceFunction evidence_fn = EvidenceFunction::softplus();

  bool is_evidential() const;
  double kl_weight(int epoch) const;
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// alpha = f(logits) + lambda.
DirichletParams alpha_from_logits(std::span<const double> logits, const LossConfig& cfg);

/// sum (y - alpha/S)^2 [+ sum Var[p] when cfg.use_variance_term].
double edl_empirical_risk(std::span<const double> logits, std::span<const double> y,
                          const LossConfig& cfg);

/// sum (y - P)^2 with P the projected probability.
double re_edl_empirical_risk(std::span<const double> logits, std::span<const double> y,
                             const LossConfig& cfg);

/// (S^2 - sum alpha^2) / (S^2 (S + 1)).
double variance_term(const DirichletParams& alpha);

/// mu_t * KL(Dir(alpha_tilde) || Dir(lambda 1)), exact mode so it is zero at the prior, where alpha_tilde replaces
/// the target entry with lambda.
double kl_regularizer(std::span<const double> logits, std::span<const double> y, int epoch,
                      const LossConfig& cfg);

/// -sum y ln P.
double ce_projected_risk(std::span<const double> logits, std::span<const double> y,
                         const LossConfig& cfg);

double softmax_mse_risk(std::span<const double> logits, std::span<const double> y);
double softmax_ce_risk(std::span<const double> logits, std::span<const double> y);

/// Risk selected by cfg.form (no regularizer).
double empirical_risk(std::span<const double> logits, std::span<const double> y,
                      const LossConfig& cfg);

/// Empirical risk plus the KL regularizer for evidential forms.
double total_loss(std::span<const double> logits, std::span<const double> y, int epoch,
                  const LossConfig& cfg);

/// d total_loss / d logits.
std::vector<double> loss_gradient(std::span<const double> logits, std::span<const double> y,
                                  int epoch, const LossConfig& cfg);

/// Class probabilities the form predicts with: projected probability or softmax.
std::vector<double> predictive_probability(std::span<const double> logits, const LossConfig& cfg);

std::vector<double> softmax(std::span<const double> logits);

}  // namespace redl
