#pragma once

// Ranking and calibration metrics. Confidence convention everywhere: higher means more
// in-distribution (OOD detection) or more likely correct (misclassification detection).

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "redl/sl_core.hpp"

namespace redl {

struct ScoredSample {
  double confidence = 0.0;
  bool is_positive = false;  ///< ID = 1 / OOD = 0, or correct = 1 / wrong = 0
};

std::vector<ScoredSample> make_scored(std::span<const double> positives,
                                      std::span<const double> negatives);

/// P(random positive outscores random negative), ties counted 1/2. Throws
/// UndefinedMetricError without at least one positive and one negative.
double auroc(std::span<const ScoredSample> samples);

/// Average precision with tied scores handled as one block. Throws UndefinedMetricError
/// without positives.
double aupr(std::span<const ScoredSample> samples);

/// Expected calibration error over equal-width bins on [0, 1].
double ece(std::span<const double> confidences, std::span<const bool> correct, int bins = 15);

/// Mean over rows of sum_x (y_x - P_x)^2.
double brier(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& one_hot);

enum class UncertaintyMeasure { mp, um, de, mi };
std::string_view to_string(UncertaintyMeasure m);
UncertaintyMeasure uncertainty_measure_from_string(std::string_view name);
inline constexpr UncertaintyMeasure kAllMeasures[] = {UncertaintyMeasure::mp, UncertaintyMeasure::um,
                                                      UncertaintyMeasure::de, UncertaintyMeasure::mi};

/// Raw uncertainty per sample (larger = more uncertain). For mp this is 1 - max P.
std::vector<double> uncertainty_values(std::span<const DirichletParams> params,
                                       UncertaintyMeasure measure, double lambda);

/// Order-preserving confidence: max P for mp, minus the uncertainty otherwise.
std::vector<double> uncertainty_scores(std::span<const DirichletParams> params,
                                       UncertaintyMeasure measure, double lambda);

/// (v - min) / (max - min); a constant list maps to all zeros.
std::vector<double> min_max_normalize(std::span<const double> values);

struct CurvePoint {
  double threshold;
  double x;  ///< recall (PR) or false-positive rate (ROC)
  double y;  ///< precision (PR) or true-positive rate (ROC)
};

/// One point per distinct threshold, scores descending; "predict positive if score >= threshold".
std::vector<CurvePoint> pr_curve(std::span<const ScoredSample> samples);
std::vector<CurvePoint> roc_curve(std::span<const ScoredSample> samples);

/// Header threshold,precision,recall.
void write_pr_csv(std::span<const CurvePoint> pr, const std::filesystem::path& path);
/// Header threshold,fpr,tpr.
void write_roc_csv(std::span<const CurvePoint> roc, const std::filesystem::path& path);

}  // namespace redl
