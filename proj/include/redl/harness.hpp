#pragma once

// Experiment configuration, grid expansion, training/evaluation runs and result tables.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "redl/csv.hpp"
#include "redl/data.hpp"
#include "redl/losses.hpp"
#include "redl/metrics.hpp"
#include "redl/nn.hpp"

namespace redl {

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kSpecVersion = "1.0";
/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "REDL_OUTPUT_ROOT";

struct DataSpec {
  std::size_t num_classes = 3;
  std::size_t n_per_class = 400;
  std::size_t dim = 2;
  double spread = 1.5;
  double center_radius = 3.0;
  std::size_t ood_n = 300;
  double ood_radius = 1.5;  ///< inside the triangle of class centres, between the clusters
  double val_fraction = 0.05;
  double test_fraction = 0.3;
  std::vector<double> noise_sigmas;
};

struct ModelSpec {
  std::vector<int> hidden{64, 64};
  HiddenActivation hidden_activation = HiddenActivation::relu;
};

struct ExperimentConfig {
  DataSpec data;
  ModelSpec model;
  LossConfig loss;
  int epochs = 60;
  int batch_size = 64;
  double learning_rate = 1e-3;

  /// Grid axes; an empty axis means "use the base loss value".
  std::vector<LossForm> forms;
  std::vector<EvidenceFunction> evidence_fns;
  std::vector<double> lambda_sweep;
  std::vector<double> mu_sweep;

  /// Replace the grid with the eight lambda=1 / L_var / L_kl toggle rows.
  bool ablation = false;
  double ablation_kl_coefficient = 1.0;
  /// Choose lambda per seed by validation OOD AUROC (uncertainty mass) over lambda_candidates.
  bool tune_lambda = false;
  std::vector<double> lambda_candidates{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<UncertaintyMeasure> measures{kAllMeasures[0], kAllMeasures[1], kAllMeasures[2],
                                           kAllMeasures[3]};
  std::string output_dir;

  /// Throws ConfigError with the offending field path.
  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// "a:step:b" inclusive range or a comma list. Range values are rounded to 1e-12.
std::vector<double> parse_real_list(const std::string& text);

/// One grid point.
struct Cell {
  std::string name;
  LossConfig loss;
  bool tune_lambda = false;
};

std::vector<Cell> expand_grid(const ExperimentConfig& cfg);

/// Standardized splits for one seed. OOD sets are scaled with the ID training statistics.
struct PreparedData {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
  LabeledDataset ood_val;
  LabeledDataset ood_test;
  std::vector<LabeledDataset> noisy_test;
};

PreparedData prepare_data(const DataSpec& spec, std::uint64_t seed);

MlpSpec mlp_spec_for(const ExperimentConfig& cfg, std::uint64_t seed);

/// Ordered (name, value) pairs; the order fixes CSV column order.
using MetricRow = std::vector<std::pair<std::string, double>>;

double metric(const MetricRow& row, const std::string& name);

/// Accuracy, misclassification AUPR, ECE, Brier, OOD AUPR/AUROC per measure and evidence
/// statistics for one trained network. Measures other than mp are NaN for softmax forms.
MetricRow evaluate(const Mlp& net, const LossConfig& loss, const PreparedData& data,
                   const std::vector<UncertaintyMeasure>& measures);

/// Validation OOD AUROC by uncertainty mass (max softmax probability for softmax forms).
double validation_ood_auroc(const Mlp& net, const LossConfig& loss, const PreparedData& data);

struct RunResult {
  std::size_t cell_index = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;  ///< lambda used for the reported model
  MetricRow metrics;
  TrainLog log;
};

RunResult run_cell(const ExperimentConfig& cfg, const Cell& cell, std::size_t cell_index,
                   std::uint64_t seed, const PreparedData& data);

struct ResultTable {
  std::vector<Cell> cells;
  std::vector<RunResult> runs;  ///< cell-major, then seed order

  /// One row per cell: mean and sample SD over seeds of every metric.
  CsvTable aggregated() const;
  CsvTable per_run() const;
  CsvTable epoch_log() const;
};

/// Trains and evaluates every (cell, seed). jobs > 1 runs tasks on worker threads; output
/// does not depend on jobs.
ResultTable run_experiment(const ExperimentConfig& cfg, int jobs = 1);

/// Writes config.json, results.csv, runs.csv, epoch_log.csv and manifest.json into dir.
/// A `.partial` marker exists while writing and is removed on success.
void write_run_directory(const ExperimentConfig& cfg, const ResultTable& table,
                         const std::filesystem::path& dir, const std::string& command);

nlohmann::json make_manifest(const std::string& command, const std::vector<std::string>& files);

/// Writes `.partial` on construction; commit() removes it.
class PartialMarker {
 public:
  explicit PartialMarker(const std::filesystem::path& dir);
  void commit();

 private:
  std::filesystem::path marker_;
};

}  // namespace redl
