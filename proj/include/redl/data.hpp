#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace redl {

enum class OriginKind { id, ood, noisy };

struct Origin {
  OriginKind kind = OriginKind::id;
  double sigma = 0.0;  ///< noise SD; only for noisy rows

  /// "id", "ood" or "noisy(<sigma>)".
  std::string to_string() const;
  static Origin parse(const std::string& text);
  bool operator==(const Origin&) const = default;
};

/// Label value carried by OOD rows; such rows never enter training.
inline constexpr int kOodLabel = -1;

struct LabeledDataset {
  Eigen::MatrixXd features;  ///< n x d, one sample per row
  std::vector<int> labels;   ///< class index, or kOodLabel
  std::vector<Origin> origin;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
  /// n x C; OOD rows are all zero.
  Eigen::MatrixXd one_hot() const;
  /// Rows at the given indices, in order.
  LabeledDataset subset(const std::vector<std::size_t>& rows) const;
  void validate() const;
};

LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b);

/// C isotropic Gaussian classes. Class c is centred at center_radius * (cos 2πc/C, sin 2πc/C, 0, ...).
LabeledDataset gaussian_blobs(std::size_t num_classes, std::size_t n_per_class, std::size_t dim,
                              double spread, std::uint64_t seed, double center_radius = 3.0);

/// Points with uniformly random direction and norm uniform in [0.9 radius, 1.1 radius].
/// num_classes only tags the dataset so it can be concatenated with ID data.
LabeledDataset ood_ring(std::size_t n, std::size_t dim, double radius, std::uint64_t seed,
                        std::size_t num_classes = 0);

/// One copy per sigma with i.i.d. N(0, sigma^2) added to every feature.
std::vector<LabeledDataset> add_noise(const LabeledDataset& ds, const std::vector<double>& sigmas,
                                      std::uint64_t seed);

/// 0.025, 0.050, ..., 0.200.
std::vector<double> default_noise_grid();

struct DataSplit {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

/// Stratified by class: each class contributes round(n_c * fraction) rows to val and test.
DataSplit stratified_split(const LabeledDataset& ds, double val_fraction, double test_fraction,
                           std::uint64_t seed);

/// Zero-mean, unit-variance scaling fitted on one dataset and applied to others.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const LabeledDataset& ds);
  LabeledDataset apply(const LabeledDataset& ds) const;
};

/// Header: f0..f{d-1},label,origin. Values are written with 17 significant digits.
void write_csv(const LabeledDataset& ds, const std::filesystem::path& path);
/// num_classes = 0 infers max(label) + 1.
LabeledDataset read_csv(const std::filesystem::path& path, std::size_t num_classes = 0);

}  // namespace redl
