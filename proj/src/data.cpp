#include "redl/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "redl/csv.hpp"
#include "redl/error.hpp"

namespace redl {
namespace {

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

std::string Origin::to_string() const {
  switch (kind) {
    case OriginKind::id:
      return "id";
    case OriginKind::ood:
      return "ood";
    case OriginKind::noisy:
      return "noisy(" + format_double(sigma) + ")";
  }
  return "?";
}

Origin Origin::parse(const std::string& text) {
  if (text == "id") return {OriginKind::id, 0.0};
  if (text == "ood") return {OriginKind::ood, 0.0};
  if (text.starts_with("noisy(") && text.ends_with(")")) {
    return {OriginKind::noisy, parse_double(std::string_view(text).substr(6, text.size() - 7))};
  }
  throw std::invalid_argument("unknown origin tag '" + text + "'");
}

Eigen::MatrixXd LabeledDataset::one_hot() const {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(size()),
                                            static_cast<Eigen::Index>(num_classes));
  for (std::size_t i = 0; i < size(); ++i) {
    if (labels[i] != kOodLabel) y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return y;
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& rows) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  out.origin.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(rows[r]));
    out.labels.push_back(labels[rows[r]]);
    out.origin.push_back(origin[rows[r]]);
  }
  return out;
}

void LabeledDataset::validate() const {
  if (static_cast<std::size_t>(features.rows()) != labels.size() || labels.size() != origin.size()) {
    throw DimensionMismatchError("dataset: features/labels/origin row counts differ");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool ood = origin[i].kind == OriginKind::ood;
    if (ood != (labels[i] == kOodLabel)) {
      throw InvalidParametersError("dataset row " + std::to_string(i) + ": OOD rows and only OOD rows carry label -1");
    }
    if (!ood && (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)) {
      throw InvalidParametersError("dataset row " + std::to_string(i) + ": label out of range");
    }
  }
}

LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.features.cols() != b.features.cols()) throw DimensionMismatchError("concat: feature widths differ");
  LabeledDataset out;
  out.num_classes = std::max(a.num_classes, b.num_classes);
  out.features.resize(a.features.rows() + b.features.rows(), a.features.cols());
  out.features << a.features, b.features;
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.origin = a.origin;
  out.origin.insert(out.origin.end(), b.origin.begin(), b.origin.end());
  return out;
}

LabeledDataset gaussian_blobs(std::size_t num_classes, std::size_t n_per_class, std::size_t dim,
                              double spread, std::uint64_t seed, double center_radius) {
  if (num_classes < 2) throw InvalidParametersError("gaussian_blobs: need at least 2 classes");
  if (dim < 2) throw InvalidParametersError("gaussian_blobs: need at least 2 dimensions");
  if (n_per_class == 0) throw InvalidParametersError("gaussian_blobs: n_per_class must be positive");
  if (!(spread >= 0.0)) throw InvalidParametersError("gaussian_blobs: spread must be >= 0");

  auto gen = make_stream(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n = num_classes * n_per_class;
  LabeledDataset ds;
  ds.num_classes = num_classes;
  ds.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  ds.labels.reserve(n);
  ds.origin.assign(n, Origin{});
  std::size_t row = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(num_classes);
    for (std::size_t k = 0; k < n_per_class; ++k, ++row) {
      for (std::size_t j = 0; j < dim; ++j) {
        ds.features(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = spread * normal(gen);
      }
      ds.features(static_cast<Eigen::Index>(row), 0) += center_radius * std::cos(angle);
      ds.features(static_cast<Eigen::Index>(row), 1) += center_radius * std::sin(angle);
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

LabeledDataset ood_ring(std::size_t n, std::size_t dim, double radius, std::uint64_t seed,
                        std::size_t num_classes) {
  if (dim < 1) throw InvalidParametersError("ood_ring: dim must be positive");
  if (!(radius > 0.0)) throw InvalidParametersError("ood_ring: radius must be > 0");
  auto gen = make_stream(seed, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> width(0.9 * radius, 1.1 * radius);
  LabeledDataset ds;
  ds.num_classes = num_classes;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  ds.labels.assign(n, kOodLabel);
  ds.origin.assign(n, Origin{OriginKind::ood, 0.0});
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::RowVectorXd dir(static_cast<Eigen::Index>(dim));
    do {
      for (Eigen::Index j = 0; j < dir.size(); ++j) dir(j) = normal(gen);
    } while (dir.norm() == 0.0);
    ds.features.row(static_cast<Eigen::Index>(i)) = dir.normalized() * width(gen);
  }
  return ds;
}

std::vector<LabeledDataset> add_noise(const LabeledDataset& ds, const std::vector<double>& sigmas,
                                      std::uint64_t seed) {
  std::vector<LabeledDataset> out;
  out.reserve(sigmas.size());
  for (std::size_t s = 0; s < sigmas.size(); ++s) {
    const double sigma = sigmas[s];
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidParametersError("add_noise: sigma must be >= 0");
    LabeledDataset noisy = ds;
    if (sigma > 0.0) {
      auto gen = make_stream(seed, 100 + s);
      std::normal_distribution<double> normal(0.0, sigma);
      for (Eigen::Index i = 0; i < noisy.features.rows(); ++i) {
        for (Eigen::Index j = 0; j < noisy.features.cols(); ++j) noisy.features(i, j) += normal(gen);
      }
    }
    for (auto& o : noisy.origin) {
      if (o.kind != OriginKind::ood) o = Origin{OriginKind::noisy, sigma};
    }
    out.push_back(std::move(noisy));
  }
  return out;
}

std::vector<double> default_noise_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 8; ++k) grid.push_back(0.025 * k);
  return grid;
}

DataSplit stratified_split(const LabeledDataset& ds, double val_fraction, double test_fraction,
                           std::uint64_t seed) {
  if (val_fraction < 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0) {
    throw InvalidParametersError("stratified_split: fractions must be >= 0 and sum below 1");
  }
  auto gen = make_stream(seed, 2);
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] != kOodLabel) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  }
  std::vector<std::size_t> train, val, test;
  for (auto& rows : by_class) {
    std::shuffle(rows.begin(), rows.end(), gen);
    const auto n = static_cast<double>(rows.size());
    const auto n_val = static_cast<std::size_t>(std::lround(n * val_fraction));
    const auto n_test = static_cast<std::size_t>(std::lround(n * test_fraction));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (k < n_val) {
        val.push_back(rows[k]);
      } else if (k < n_val + n_test) {
        test.push_back(rows[k]);
      } else {
        train.push_back(rows[k]);
      }
    }
  }
  for (auto* part : {&train, &val, &test}) std::sort(part->begin(), part->end());
  return {ds.subset(train), ds.subset(val), ds.subset(test)};
}

Standardizer Standardizer::fit(const LabeledDataset& ds) {
  if (ds.size() == 0) throw InvalidParametersError("Standardizer::fit: empty dataset");
  Standardizer s;
  s.mean = ds.features.colwise().mean();
  const Eigen::MatrixXd centered = ds.features.rowwise() - s.mean;
  s.scale = (centered.array().square().colwise().sum() / static_cast<double>(ds.size())).sqrt();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
    if (s.scale(j) < 1e-12) s.scale(j) = 1.0;
  }
  return s;
}

LabeledDataset Standardizer::apply(const LabeledDataset& ds) const {
  LabeledDataset out = ds;
  out.features = ((ds.features.rowwise() - mean).array().rowwise() / scale.array()).matrix();
  return out;
}

void write_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
  CsvTable table;
  for (std::size_t j = 0; j < ds.dim(); ++j) table.header.push_back("f" + std::to_string(j));
  table.header.push_back("label");
  table.header.push_back("origin");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::vector<std::string> row;
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      row.push_back(format_double(ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    }
    row.push_back(std::to_string(ds.labels[i]));
    row.push_back(ds.origin[i].to_string());
    table.add_row(std::move(row));
  }
  table.write(path);
}

LabeledDataset read_csv(const std::filesystem::path& path, std::size_t num_classes) {
  const auto table = CsvTable::read(path);
  const std::size_t label_col = table.column("label");
  const std::size_t origin_col = table.column("origin");
  const std::size_t dim = label_col;
  LabeledDataset ds;
  ds.features.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(dim));
  int max_label = -1;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    for (std::size_t j = 0; j < dim; ++j) {
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_double(row[j]);
    }
    const int label = std::stoi(row[label_col]);
    max_label = std::max(max_label, label);
    ds.labels.push_back(label);
    ds.origin.push_back(Origin::parse(row[origin_col]));
  }
  ds.num_classes = num_classes ? num_classes : static_cast<std::size_t>(max_label + 1);
  ds.validate();
  return ds;
}

}  // namespace redl
