#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "redl/error.hpp"
#include "redl/harness.hpp"

using namespace redl;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.data.n_per_class = 40;
  cfg.data.ood_n = 30;
  cfg.data.val_fraction = 0.1;
  cfg.model.hidden = {8};
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.seeds = {0};
  cfg.lambda_candidates = {0.5, 1.0};
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("redl_test_" + name);
  fs::remove_all(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(REDL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(ParseRealList, RangeAndList) {
  const auto r = parse_real_list("0.1:0.1:1.0");
  ASSERT_EQ(r.size(), 10u);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(r[i], (static_cast<double>(i) + 1) / 10.0);
  EXPECT_EQ(parse_real_list("0.025:0.025:0.2").size(), 8u);
  EXPECT_EQ(parse_real_list("1,0.5,2"), (std::vector<double>{1, 0.5, 2}));
  EXPECT_EQ(parse_real_list("3"), (std::vector<double>{3}));
  EXPECT_THROW(parse_real_list("1:0:2"), std::invalid_argument);
  EXPECT_THROW(parse_real_list("1:2"), std::invalid_argument);
}

TEST(Config, JsonRoundTrip) {
  auto cfg = tiny_config();
  cfg.loss.form = LossForm::edl_mse;
  cfg.loss.use_variance_term = true;
  cfg.loss.evidence_fn = EvidenceFunction::clamped_exp();
  cfg.loss.evidence_fn.clamp_hi = 5;
  cfg.forms = {LossForm::re_edl_mse, LossForm::softmax_ce};
  cfg.mu_sweep = {0.0, 0.5};
  cfg.measures = {UncertaintyMeasure::um};
  const auto doc = config_to_json(cfg);
  EXPECT_EQ(doc["format_version"], kFormatVersion);
  const auto back = config_from_json(doc);
  EXPECT_EQ(config_to_json(back).dump(), doc.dump());
  EXPECT_EQ(back.loss.evidence_fn.clamp_hi, 5.0);
}

TEST(Config, DefaultsFillMissingFields) {
  const auto cfg = config_from_json(nlohmann::json::parse(R"({"loss": {"lambda": 0.3}})"));
  EXPECT_EQ(cfg.loss.lambda, 0.3);
  EXPECT_EQ(cfg.seeds.size(), 5u);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, ErrorsCarryFieldPaths) {
  auto path_of = [](const std::string& text) -> std::string {
    try {
      config_from_json(nlohmann::json::parse(text)).validate();
    } catch (const ConfigError& e) {
      return e.path();
    }
    return "<none>";
  };
  EXPECT_EQ(path_of(R"({"loss": {"lambda": -1}})"), "loss.lambda");
  EXPECT_EQ(path_of(R"({"loss": {"lambda": "big"}})"), "loss.lambda");
  EXPECT_EQ(path_of(R"({"loss": {"form": "hinge"}})"), "loss.form");
  EXPECT_EQ(path_of(R"({"seeds": [1, 2, 1]})"), "seeds[2]");
  EXPECT_EQ(path_of(R"({"seeds": []})"), "seeds");
  EXPECT_EQ(path_of(R"({"sweep": {"mu": [0.1, -2]}})"), "sweep.mu[1]");
  EXPECT_EQ(path_of(R"({"sweep": {"evidence_fns": ["relu", "cube"]}})"), "sweep.evidence_fns[1]");
  EXPECT_EQ(path_of(R"({"data": {"num_classes": 1}})"), "data.num_classes");
  EXPECT_EQ(path_of(R"({"model": {"hidden": [8, 0]}})"), "model.hidden[1]");
  EXPECT_EQ(path_of(R"({"train": {"epochs": 0}})"), "train.epochs");
  EXPECT_EQ(path_of(R"({"metrics": ["um", "xx"]})"), "metrics[1]");
  EXPECT_EQ(path_of(R"({"format_version": 9})"), "format_version");
  EXPECT_EQ(path_of(R"({"lambda_selection": {"enabled": true, "candidates": []}})"), "lambda_selection.candidates");
}

TEST(ExpandGrid, LambdaRangeGivesTenCells) {
  auto cfg = tiny_config();
  cfg.lambda_sweep = parse_real_list("0.1:0.1:1.0");
  const auto cells = expand_grid(cfg);
  ASSERT_EQ(cells.size(), 10u);
  EXPECT_EQ(cells[2].loss.lambda, 0.3);
}

TEST(ExpandGrid, CartesianProduct) {
  auto cfg = tiny_config();
  cfg.forms = {LossForm::re_edl_mse, LossForm::edl_mse, LossForm::softmax_mse};
  cfg.evidence_fns = {EvidenceFunction::relu(), EvidenceFunction::softplus()};
  cfg.mu_sweep = {0.0, 1.0};
  const auto cells = expand_grid(cfg);
  EXPECT_EQ(cells.size(), 12u);
  for (const auto& c : cells) {
    EXPECT_NO_THROW(c.loss.validate()) << c.name;
    if (!c.loss.is_evidential()) EXPECT_EQ(c.loss.kl_coefficient, 0.0);
  }
}

TEST(ExpandGrid, AblationRowsMirrorToggleTable) {
  auto cfg = tiny_config();
  cfg.ablation = true;
  cfg.ablation_kl_coefficient = 0.7;
  const auto cells = expand_grid(cfg);
  ASSERT_EQ(cells.size(), 8u);
  // First row keeps all three settings (EDL), last relaxes all three (Re-EDL).
  EXPECT_EQ(cells.front().loss.form, LossForm::edl_mse);
  EXPECT_TRUE(cells.front().loss.use_variance_term);
  EXPECT_EQ(cells.front().loss.kl_coefficient, 0.7);
  EXPECT_FALSE(cells.front().tune_lambda);
  EXPECT_EQ(cells.back().loss.form, LossForm::re_edl_mse);
  EXPECT_FALSE(cells.back().loss.use_variance_term);
  EXPECT_EQ(cells.back().loss.kl_coefficient, 0.0);
  EXPECT_TRUE(cells.back().tune_lambda);
  int tuned = 0, var = 0, kl = 0;
  for (const auto& c : cells) {
    tuned += c.tune_lambda;
    var += c.loss.use_variance_term;
    kl += c.loss.kl_coefficient > 0;
  }
  EXPECT_EQ(tuned, 4);
  EXPECT_EQ(var, 4);
  EXPECT_EQ(kl, 4);
}

TEST(RunExperiment, OneSeedOneCellGivesOneRow) {
  const auto table = run_experiment(tiny_config());
  const auto agg = table.aggregated();
  ASSERT_EQ(agg.rows.size(), 1u);
  const auto sd = agg.column("accuracy_sd");
  EXPECT_EQ(agg.rows[0][sd], "0");
  for (const char* col : {"accuracy_mean", "mis_aupr_mean", "ece_mean", "brier_mean", "ood_aupr_um_mean",
                          "ood_auroc_mi_mean", "target_evidence_mean", "nontarget_evidence_mean",
                          "ood_evidence_mean"}) {
    EXPECT_NO_THROW(agg.column(col)) << col;
  }
}

TEST(RunExperiment, SdNonNegativeAcrossSeeds) {
  auto cfg = tiny_config();
  cfg.seeds = {0, 1, 2};
  const auto agg = run_experiment(cfg).aggregated();
  for (std::size_t c = 0; c < agg.header.size(); ++c) {
    if (agg.header[c].ends_with("_sd")) {
      const double v = parse_double(agg.rows[0][c]);
      EXPECT_TRUE(std::isnan(v) || v >= 0.0) << agg.header[c];
    }
  }
}

TEST(RunExperiment, SoftmaxFormsReportNanForDirichletMeasures) {
  auto cfg = tiny_config();
  cfg.loss.form = LossForm::softmax_mse;
  const auto run = run_experiment(cfg).runs.at(0);
  EXPECT_TRUE(std::isnan(metric(run.metrics, "ood_auroc_um")));
  EXPECT_FALSE(std::isnan(metric(run.metrics, "ood_auroc_mp")));
}

TEST(RunExperiment, TunedLambdaComesFromCandidates) {
  auto cfg = tiny_config();
  cfg.tune_lambda = true;
  cfg.seeds = {0, 1};
  const auto table = run_experiment(cfg);
  for (const auto& r : table.runs) EXPECT_TRUE(r.lambda == 0.5 || r.lambda == 1.0);
}

TEST(RunExperiment, NoiseAccuracyColumns) {
  auto cfg = tiny_config();
  cfg.data.noise_sigmas = {0.05, 0.1};
  const auto run = run_experiment(cfg).runs.at(0);
  EXPECT_NO_THROW(metric(run.metrics, "accuracy_noise_0.05"));
  EXPECT_NO_THROW(metric(run.metrics, "accuracy_noise_0.1"));
}

TEST(RunExperiment, ResultsIndependentOfJobs) {
  auto cfg = tiny_config();
  cfg.seeds = {0, 1};
  cfg.mu_sweep = {0.0, 0.5};
  const auto a = run_experiment(cfg, 1);
  const auto b = run_experiment(cfg, 3);
  EXPECT_EQ(a.aggregated().to_string(), b.aggregated().to_string());
  EXPECT_EQ(a.epoch_log().to_string(), b.epoch_log().to_string());
}

TEST(RunDirectory, ByteIdenticalOnRerunAndNoPartialMarker) {
  auto cfg = tiny_config();
  cfg.seeds = {3, 4};
  const auto d1 = scratch("run1");
  const auto d2 = scratch("run2");
  write_run_directory(cfg, run_experiment(cfg), d1, "test");
  write_run_directory(cfg, run_experiment(cfg), d2, "test");
  for (const char* f : {"config.json", "results.csv", "runs.csv", "epoch_log.csv", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(d1 / f)) << f;
    EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
  }
  EXPECT_FALSE(fs::exists(d1 / ".partial"));
  const auto manifest = nlohmann::json::parse(slurp(d1 / "manifest.json"));
  EXPECT_EQ(manifest["format_version"], kFormatVersion);
  EXPECT_TRUE(manifest.contains("git_hash"));
  EXPECT_EQ(manifest["spec_version"], kSpecVersion);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(PartialMarker, PresentUntilCommit) {
  const auto dir = scratch("partial");
  {
    PartialMarker m(dir);
    EXPECT_TRUE(fs::exists(dir / ".partial"));
    m.commit();
  }
  EXPECT_FALSE(fs::exists(dir / ".partial"));
  fs::remove_all(dir);
}

TEST(Cli, SelftestExitsZero) {
  const auto dir = scratch("cli_selftest");
  EXPECT_EQ(run_cli("selftest --mc-samples 20000 --out " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "selftest.csv"));
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
  EXPECT_FALSE(fs::exists(dir / ".partial"));
  fs::remove_all(dir);
}

TEST(Cli, SweepLambdaRangeGivesTenCells) {
  const auto dir = scratch("cli_sweep");
  EXPECT_EQ(run_cli("sweep --lambda 0.1:0.1:1.0 --epochs 1 --n-per-class 20 --hidden 4 --seeds 0 --out " +
                    dir.string()),
            0);
  EXPECT_EQ(CsvTable::read(dir / "results.csv").rows.size(), 10u);
  fs::remove_all(dir);
}

TEST(Cli, TrainEvalCurves) {
  const auto dir = scratch("cli_train");
  ASSERT_EQ(run_cli("train --epochs 2 --n-per-class 30 --hidden 8 --out " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "model.json"));
  ASSERT_EQ(run_cli("eval --run " + dir.string()), 0);
  const auto metrics = CsvTable::read(dir / "eval" / "metrics.csv");
  const auto trained = CsvTable::read(dir / "metrics.csv");
  EXPECT_EQ(metrics.to_string(), trained.to_string());
  ASSERT_EQ(run_cli("curves --run " + dir.string()), 0);
  for (const char* m : {"mp", "um", "de", "mi"}) {
    const auto pr = CsvTable::read(dir / "curves" / (std::string("ood_pr_") + m + ".csv"));
    EXPECT_EQ(pr.header, (std::vector<std::string>{"threshold", "precision", "recall"}));
    for (const auto& row : pr.rows) {
      for (const auto& cell : row) EXPECT_TRUE(std::isfinite(parse_double(cell)));
    }
    const auto roc = CsvTable::read(dir / "curves" / (std::string("ood_roc_") + m + ".csv"));
    EXPECT_EQ(roc.header, (std::vector<std::string>{"threshold", "fpr", "tpr"}));
  }
  fs::remove_all(dir);
}

TEST(Cli, GenDataWritesSplits) {
  const auto dir = scratch("cli_gen");
  ASSERT_EQ(run_cli("gen-data --seeds 2 --n-per-class 10 --noise 0.1 --out " + dir.string()), 0);
  for (const char* f : {"seed2_train.csv", "seed2_ood_test.csv", "seed2_test_noise_0.1.csv", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  fs::remove_all(dir);
}

TEST(Cli, UsageAndConfigErrorsFail) {
  EXPECT_NE(run_cli(""), 0);
  EXPECT_NE(run_cli("frobnicate"), 0);
  EXPECT_NE(run_cli("sweep --epochs notanumber"), 0);
  EXPECT_NE(run_cli("train --lambda -1 --out " + scratch("cli_bad").string()), 0);
  EXPECT_FALSE(fs::exists(scratch("cli_bad") / "model.json"));
}

TEST(Cli, OutputRootFromEnvironment) {
  const auto root = scratch("cli_env");
  const std::string cmd = "REDL_OUTPUT_ROOT=" + root.string() + " " + REDL_CLI_PATH +
                          " sweep --epochs 1 --n-per-class 20 --hidden 4 --seeds 0 > /dev/null 2>&1";
  EXPECT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(root / "sweep" / "results.csv"));
  fs::remove_all(root);
}
