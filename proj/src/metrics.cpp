#include "redl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "redl/csv.hpp"
#include "redl/dirichlet.hpp"
#include "redl/error.hpp"

namespace redl {
namespace {

struct Block {
  double threshold;
  std::size_t positives;
  std::size_t negatives;
};

/// Tie blocks in descending score order.
std::vector<Block> descending_blocks(std::span<const ScoredSample> samples) {
  std::vector<ScoredSample> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredSample& a, const ScoredSample& b) { return a.confidence > b.confidence; });
  std::vector<Block> blocks;
  for (const auto& s : sorted) {
    if (!std::isfinite(s.confidence)) throw InvalidParametersError("metric: non-finite confidence");
    if (blocks.empty() || blocks.back().threshold != s.confidence) blocks.push_back({s.confidence, 0, 0});
    (s.is_positive ? blocks.back().positives : blocks.back().negatives) += 1;
  }
  return blocks;
}

std::pair<std::size_t, std::size_t> class_counts(std::span<const ScoredSample> samples) {
  std::size_t pos = 0;
  for (const auto& s : samples) pos += s.is_positive ? 1 : 0;
  return {pos, samples.size() - pos};
}

}  // namespace

std::vector<ScoredSample> make_scored(std::span<const double> positives,
                                      std::span<const double> negatives) {
  std::vector<ScoredSample> out;
  out.reserve(positives.size() + negatives.size());
  for (double c : positives) out.push_back({c, true});
  for (double c : negatives) out.push_back({c, false});
  return out;
}

double auroc(std::span<const ScoredSample> samples) {
  const auto [pos, neg] = class_counts(samples);
  if (pos == 0 || neg == 0) throw UndefinedMetricError("auroc needs both positives and negatives");
  // Trapezoids over the ROC staircase; a tie block contributes a diagonal segment, i.e. 1/2 credit.
  double area = 0.0;
  std::size_t tp = 0;
  for (const auto& b : descending_blocks(samples)) {
    area += static_cast<double>(b.negatives) * (static_cast<double>(tp) + 0.5 * static_cast<double>(b.positives));
    tp += b.positives;
  }
  return area / (static_cast<double>(pos) * static_cast<double>(neg));
}

double aupr(std::span<const ScoredSample> samples) {
  const auto [pos, neg] = class_counts(samples);
  if (pos == 0) throw UndefinedMetricError("aupr needs at least one positive");
  double ap = 0.0;
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (const auto& b : descending_blocks(samples)) {
    tp += b.positives;
    seen += b.positives + b.negatives;
    if (b.positives == 0) continue;
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += precision * static_cast<double>(b.positives) / static_cast<double>(pos);
  }
  return ap;
}

double ece(std::span<const double> confidences, std::span<const bool> correct, int bins) {
  if (confidences.size() != correct.size()) throw DimensionMismatchError("ece: size mismatch");
  if (bins <= 0) throw InvalidParametersError("ece: bins must be positive");
  if (confidences.empty()) return 0.0;
  std::vector<double> conf_sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<double> acc_sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) throw InvalidParametersError("ece: confidence outside [0, 1]");
    const auto b = static_cast<std::size_t>(std::min(static_cast<int>(c * bins), bins - 1));
    conf_sum[b] += c;
    acc_sum[b] += correct[i] ? 1.0 : 0.0;
    ++count[b];
  }
  double total = 0.0;
  for (std::size_t b = 0; b < count.size(); ++b) {
    if (count[b] == 0) continue;
    total += std::abs(acc_sum[b] - conf_sum[b]);  // = n_b * |acc_b - conf_b|
  }
  return total / static_cast<double>(confidences.size());
}

double brier(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& one_hot) {
  if (probs.rows() != one_hot.rows() || probs.cols() != one_hot.cols()) {
    throw DimensionMismatchError("brier: shape mismatch");
  }
  if (probs.rows() == 0) return 0.0;
  return (one_hot - probs).array().square().sum() / static_cast<double>(probs.rows());
}

std::string_view to_string(UncertaintyMeasure m) {
  switch (m) {
    case UncertaintyMeasure::mp:
      return "mp";
    case UncertaintyMeasure::um:
      return "um";
    case UncertaintyMeasure::de:
      return "de";
    case UncertaintyMeasure::mi:
      return "mi";
  }
  return "?";
}

UncertaintyMeasure uncertainty_measure_from_string(std::string_view name) {
  for (auto m : kAllMeasures) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown uncertainty measure '" + std::string(name) + "'");
}

std::vector<double> uncertainty_values(std::span<const DirichletParams> params,
                                       UncertaintyMeasure measure, double lambda) {
  std::vector<double> out;
  out.reserve(params.size());
  for (const auto& d : params) {
    switch (measure) {
      case UncertaintyMeasure::mp: {
        const auto p = expectation(d);
        out.push_back(1.0 - *std::max_element(p.begin(), p.end()));
        break;
      }
      case UncertaintyMeasure::um:
        out.push_back(lambda * static_cast<double>(d.size()) / d.strength());
        break;
      case UncertaintyMeasure::de:
        out.push_back(differential_entropy(d));
        break;
      case UncertaintyMeasure::mi:
        out.push_back(mutual_information(d));
        break;
    }
  }
  return out;
}

std::vector<double> uncertainty_scores(std::span<const DirichletParams> params,
                                       UncertaintyMeasure measure, double lambda) {
  auto values = uncertainty_values(params, measure, lambda);
  if (measure == UncertaintyMeasure::mp) {
    for (double& v : values) v = 1.0 - v;
  } else {
    for (double& v : values) v = -v;
  }
  return values;
}

std::vector<double> min_max_normalize(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  if (out.empty()) return out;
  const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  const double min = *lo;
  const double range = *hi - *lo;
  for (double& v : out) v = range > 0.0 ? (v - min) / range : 0.0;
  return out;
}

std::vector<CurvePoint> pr_curve(std::span<const ScoredSample> samples) {
  const auto [pos, neg] = class_counts(samples);
  if (pos == 0) throw UndefinedMetricError("pr_curve needs at least one positive");
  std::vector<CurvePoint> points;
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (const auto& b : descending_blocks(samples)) {
    tp += b.positives;
    seen += b.positives + b.negatives;
    points.push_back({b.threshold, static_cast<double>(tp) / static_cast<double>(pos),
                      static_cast<double>(tp) / static_cast<double>(seen)});
  }
  return points;
}

std::vector<CurvePoint> roc_curve(std::span<const ScoredSample> samples) {
  const auto [pos, neg] = class_counts(samples);
  if (pos == 0 || neg == 0) throw UndefinedMetricError("roc_curve needs both positives and negatives");
  std::vector<CurvePoint> points;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (const auto& b : descending_blocks(samples)) {
    tp += b.positives;
    fp += b.negatives;
    points.push_back({b.threshold, static_cast<double>(fp) / static_cast<double>(neg),
                      static_cast<double>(tp) / static_cast<double>(pos)});
  }
  return points;
}

void write_pr_csv(std::span<const CurvePoint> pr, const std::filesystem::path& path) {
  CsvTable table{{"threshold", "precision", "recall"}, {}};
  for (const auto& p : pr) table.add_row({format_double(p.threshold), format_double(p.y), format_double(p.x)});
  table.write(path);
}

void write_roc_csv(std::span<const CurvePoint> roc, const std::filesystem::path& path) {
  CsvTable table{{"threshold", "fpr", "tpr"}, {}};
  for (const auto& p : roc) table.add_row({format_double(p.threshold), format_double(p.x), format_double(p.y)});
  table.write(path);
}

}  // namespace redl
