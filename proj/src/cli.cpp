#include "redl/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "redl/error.hpp"
#include "redl/harness.hpp"
#include "redl/selftest.hpp"

namespace redl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Flags shared by the experiment subcommands. Unset flags leave the config value alone.
struct Overrides {
  std::string config_path;
  std::optional<std::size_t> num_classes, n_per_class, dim, ood_n;
  std::optional<double> spread, ood_radius;
  std::optional<std::string> hidden, activation;
  std::optional<std::string> form, evidence, kl_schedule;
  std::optional<double> lambda, mu;
  bool variance = false;
  std::optional<int> epochs, batch_size;
  std::optional<double> learning_rate;
  std::optional<std::string> seeds;
  std::optional<std::size_t> num_seeds;
  std::optional<std::string> noise;

  void attach(CLI::App* app, bool single_loss) {
    app->add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
    app->add_option("--classes", num_classes, "number of classes");
    app->add_option("--n-per-class", n_per_class, "samples per class before splitting");
    app->add_option("--dim", dim, "feature dimension");
    app->add_option("--spread", spread, "class standard deviation");
    app->add_option("--ood-n", ood_n, "OOD test samples");
    app->add_option("--ood-radius", ood_radius, "OOD ring radius");
    app->add_option("--noise", noise, "noise sigmas for robustness accuracy, e.g. 0.025:0.025:0.2");
    app->add_option("--hidden", hidden, "hidden widths, e.g. 64,64");
    app->add_option("--activation", activation, "hidden activation: relu or tanh");
    app->add_option("--form", form, "loss form: edl_mse, re_edl_mse, ce_projected, softmax_mse, softmax_ce");
    app->add_option("--evidence", evidence, "evidence function: relu, softplus, clamped_exp");
    app->add_option("--kl-schedule", kl_schedule, "annealed or constant");
    if (single_loss) {
      app->add_option("--lambda", lambda, "prior weight per class");
      app->add_option("--mu", mu, "KL regularizer coefficient");
    }
    app->add_flag("--var", variance, "add the variance term (edl_mse only)");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--batch-size", batch_size, "mini-batch size");
    app->add_option("--lr", learning_rate, "Adam learning rate");
    app->add_option("--seeds", seeds, "comma list of seeds");
    app->add_option("--num-seeds", num_seeds, "use seeds 0..N-1");
  }

  ExperimentConfig build() const {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    if (num_classes) cfg.data.num_classes = *num_classes;
    if (n_per_class) cfg.data.n_per_class = *n_per_class;
    if (dim) cfg.data.dim = *dim;
    if (ood_n) cfg.data.ood_n = *ood_n;
    if (spread) cfg.data.spread = *spread;
    if (ood_radius) cfg.data.ood_radius = *ood_radius;
    if (noise) cfg.data.noise_sigmas = parse_real_list(*noise);
    if (hidden) {
      cfg.model.hidden.clear();
      for (double w : parse_real_list(*hidden)) cfg.model.hidden.push_back(static_cast<int>(w));
    }
    if (activation) cfg.model.hidden_activation = hidden_activation_from_string(*activation);
    if (form) cfg.loss.form = loss_form_from_string(*form);
    if (evidence) cfg.loss.evidence_fn = EvidenceFunction{evidence_kind_from_string(*evidence)};
    if (kl_schedule) cfg.loss.kl_schedule = kl_schedule_from_string(*kl_schedule);
    if (lambda) cfg.loss.lambda = *lambda;
    if (mu) cfg.loss.kl_coefficient = *mu;
    if (variance) cfg.loss.use_variance_term = true;
    if (epochs) cfg.epochs = *epochs;
    if (batch_size) cfg.batch_size = *batch_size;
    if (learning_rate) cfg.learning_rate = *learning_rate;
    if (seeds) {
      cfg.seeds.clear();
      for (double s : parse_real_list(*seeds)) cfg.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    if (num_seeds) {
      cfg.seeds.clear();
      for (std::size_t s = 0; s < *num_seeds; ++s) cfg.seeds.push_back(s);
    }
    return cfg;
  }
};

fs::path output_dir(const std::string& flag, const ExperimentConfig* cfg, const std::string& command) {
  if (!flag.empty()) return flag;
  if (cfg && !cfg->output_dir.empty()) return cfg->output_dir;
  const char* root = std::getenv(kOutputRootEnv);
  return fs::path(root && *root ? root : "runs") / command;
}

std::string command_line(int argc, char** argv) {
  std::string out = "redl";
  for (int i = 1; i < argc; ++i) out += std::string(" ") + argv[i];
  return out;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream(path, std::ios::binary) << doc.dump(2) << '\n';
}

json metrics_json(const MetricRow& row) {
  json j = json::object();
  for (const auto& [k, v] : row) j[k] = std::isfinite(v) ? json(v) : json(nullptr);
  return j;
}

CsvTable metrics_table(const MetricRow& row) {
  CsvTable t{{"metric", "value"}, {}};
  for (const auto& [k, v] : row) t.add_row({k, format_double(v)});
  return t;
}

/// Loads config.json and model.json written by `train`.
std::pair<ExperimentConfig, Mlp> load_run(const fs::path& run) {
  auto cfg = load_config(run / "config.json");
  return {cfg, load_checkpoint(run / "model.json")};
}

int cmd_gen_data(const Overrides& ov, const std::string& out_flag, const std::string& command) {
  const auto cfg = ov.build();
  cfg.validate();
  const auto dir = output_dir(out_flag, &cfg, "gen-data");
  PartialMarker marker(dir);
  std::vector<std::string> files;
  for (auto seed : cfg.seeds) {
    const auto data = prepare_data(cfg.data, seed);
    const std::string tag = "seed" + std::to_string(seed) + "_";
    const std::pair<const char*, const LabeledDataset*> parts[] = {
        {"train", &data.train}, {"val", &data.val}, {"test", &data.test}, {"ood_val", &data.ood_val},
        {"ood_test", &data.ood_test}};
    for (const auto& [name, ds] : parts) {
      write_csv(*ds, dir / (tag + name + ".csv"));
      files.push_back(tag + name + ".csv");
    }
    for (const auto& noisy : data.noisy_test) {
      const auto name = tag + "test_noise_" + format_double(noisy.origin.front().sigma) + ".csv";
      write_csv(noisy, dir / name);
      files.push_back(name);
    }
  }
  write_json(dir / "config.json", config_to_json(cfg));
  write_json(dir / "manifest.json", make_manifest(command, files));
  marker.commit();
  std::cout << "wrote " << files.size() << " dataset files to " << dir.string() << "\n";
  return 0;
}

int cmd_train(const Overrides& ov, const std::string& out_flag, const std::string& command) {
  auto cfg = ov.build();
  cfg.seeds.resize(1);
  cfg.validate();
  const auto dir = output_dir(out_flag, &cfg, "train");
  const auto seed = cfg.seeds.front();
  const auto data = prepare_data(cfg.data, seed);
  Mlp net(mlp_spec_for(cfg, seed));
  const auto log = train(net, data.train, cfg.loss, {cfg.epochs, cfg.batch_size, seed, cfg.learning_rate});
  const auto metrics = evaluate(net, cfg.loss, data, cfg.measures);

  PartialMarker marker(dir);
  write_json(dir / "config.json", config_to_json(cfg));
  save_checkpoint(net, dir / "model.json");
  ResultTable table{{Cell{"train", cfg.loss, false}}, {RunResult{0, seed, cfg.loss.lambda, metrics, log}}};
  table.epoch_log().write(dir / "epoch_log.csv");
  metrics_table(metrics).write(dir / "metrics.csv");
  write_json(dir / "summary.json", {{"format_version", kFormatVersion}, {"seed", seed}, {"metrics", metrics_json(metrics)}});
  write_json(dir / "manifest.json",
             make_manifest(command, {"config.json", "model.json", "epoch_log.csv", "metrics.csv", "summary.json"}));
  marker.commit();
  std::cout << "accuracy " << format_double(metric(metrics, "accuracy")) << ", model in " << dir.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& run, const std::string& out_flag, const std::string& command) {
  auto [cfg, net] = load_run(run);
  const auto dir = out_flag.empty() ? fs::path(run) / "eval" : fs::path(out_flag);
  const auto data = prepare_data(cfg.data, cfg.seeds.front());
  const auto metrics = evaluate(net, cfg.loss, data, cfg.measures);
  PartialMarker marker(dir);
  metrics_table(metrics).write(dir / "metrics.csv");
  write_json(dir / "summary.json", {{"format_version", kFormatVersion}, {"run", run}, {"metrics", metrics_json(metrics)}});
  write_json(dir / "manifest.json", make_manifest(command, {"metrics.csv", "summary.json"}));
  marker.commit();
  for (const auto& [k, v] : metrics) std::cout << k << " " << format_double(v) << "\n";
  return 0;
}

int cmd_curves(const std::string& run, const std::string& out_flag, const std::string& command) {
  auto [cfg, net] = load_run(run);
  const auto dir = out_flag.empty() ? fs::path(run) / "curves" : fs::path(out_flag);
  const auto data = prepare_data(cfg.data, cfg.seeds.front());
  const Eigen::MatrixXd id_logits = net.forward(data.test.features);
  const Eigen::MatrixXd ood_logits = net.forward(data.ood_test.features);

  auto confidences = [&](const Eigen::MatrixXd& logits, UncertaintyMeasure m) {
    std::vector<double> out;
    std::vector<DirichletParams> ds;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      std::vector<double> l(static_cast<std::size_t>(logits.cols()));
      for (Eigen::Index k = 0; k < logits.cols(); ++k) l[static_cast<std::size_t>(k)] = logits(i, k);
      if (m == UncertaintyMeasure::mp) {
        const auto p = predictive_probability(l, cfg.loss);
        out.push_back(*std::max_element(p.begin(), p.end()));
      } else {
        ds.push_back(alpha_from_logits(l, cfg.loss));
      }
    }
    return m == UncertaintyMeasure::mp ? out : uncertainty_scores(ds, m, cfg.loss.lambda);
  };

  PartialMarker marker(dir);
  std::vector<std::string> files;
  for (auto m : cfg.measures) {
    if (m != UncertaintyMeasure::mp && !cfg.loss.is_evidential()) continue;
    const auto scored = make_scored(confidences(id_logits, m), confidences(ood_logits, m));
    const std::string name(to_string(m));
    write_pr_csv(pr_curve(scored), dir / ("ood_pr_" + name + ".csv"));
    write_roc_csv(roc_curve(scored), dir / ("ood_roc_" + name + ".csv"));
    files.push_back("ood_pr_" + name + ".csv");
    files.push_back("ood_roc_" + name + ".csv");
  }
  write_json(dir / "manifest.json", make_manifest(command, files));
  marker.commit();
  std::cout << "wrote " << files.size() << " curve files to " << dir.string() << "\n";
  return 0;
}

int cmd_sweep(Overrides ov, const std::string& lambdas, const std::string& mus, const std::string& forms,
              const std::string& evidence_fns, bool ablation, bool tune, const std::string& candidates,
              int jobs, const std::string& out_flag, const std::string& command) {
  auto cfg = ov.build();
  if (!lambdas.empty()) cfg.lambda_sweep = parse_real_list(lambdas);
  if (!mus.empty()) cfg.mu_sweep = parse_real_list(mus);
  if (!forms.empty()) {
    cfg.forms.clear();
    for (const auto& f : split_csv_line(forms)) cfg.forms.push_back(loss_form_from_string(f));
  }
  if (!evidence_fns.empty()) {
    cfg.evidence_fns.clear();
    for (const auto& f : split_csv_line(evidence_fns)) cfg.evidence_fns.push_back({evidence_kind_from_string(f)});
  }
  if (ablation) cfg.ablation = true;
  if (tune) cfg.tune_lambda = true;
  if (!candidates.empty()) cfg.lambda_candidates = parse_real_list(candidates);
  cfg.validate();
  const auto dir = output_dir(out_flag, &cfg, "sweep");
  const auto table = run_experiment(cfg, jobs);
  write_run_directory(cfg, table, dir, command);
  std::cout << table.cells.size() << " cells x " << cfg.seeds.size() << " seeds, results in " << dir.string()
            << "\n";
  return 0;
}

int cmd_selftest(std::uint64_t seed, std::size_t mc_samples, const std::string& out_flag,
                 const std::string& command) {
  const auto dir = output_dir(out_flag, nullptr, "selftest");
  const auto results = run_selftest({seed, mc_samples});
  std::size_t failed = 0;
  json checks = json::array();
  for (const auto& r : results) {
    failed += r.passed ? 0 : 1;
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.group << "/" << r.name << " observed=" << format_double(r.observed)
              << " tol=" << format_double(r.tolerance) << (r.detail.empty() ? "" : " (" + r.detail + ")") << "\n";
    checks.push_back({{"group", r.group}, {"name", r.name}, {"passed", r.passed}});
  }
  PartialMarker marker(dir);
  selftest_table(results).write(dir / "selftest.csv");
  write_json(dir / "summary.json", {{"format_version", kFormatVersion},
                                    {"checks", results.size()},
                                    {"failed", failed},
                                    {"results", checks}});
  write_json(dir / "manifest.json", make_manifest(command, {"selftest.csv", "summary.json"}));
  marker.commit();
  std::cout << results.size() - failed << "/" << results.size() << " checks passed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Evidential classification experiments on synthetic data"};
  app.require_subcommand(1);
  std::string out;
  app.add_option("--out", out, "output directory (default $REDL_OUTPUT_ROOT/<command> or runs/<command>)");

  Overrides gen_ov;
  auto* gen = app.add_subcommand("gen-data", "write standardized train/val/test/OOD splits as CSV");
  gen_ov.attach(gen, true);

  Overrides train_ov;
  auto* tr = app.add_subcommand("train", "train one model on the first seed and save a checkpoint");
  train_ov.attach(tr, true);

  std::string run;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint written by train");
  ev->add_option("--run", run, "train output directory")->required()->check(CLI::ExistingDirectory);

  std::string curve_run;
  auto* cu = app.add_subcommand("curves", "write OOD PR and ROC points for a trained model");
  cu->add_option("--run", curve_run, "train output directory")->required()->check(CLI::ExistingDirectory);

  Overrides sweep_ov;
  std::string lambdas, mus, forms, fns, candidates;
  bool ablation = false;
  bool tune = false;
  int jobs = 1;
  auto* sw = app.add_subcommand("sweep", "train and evaluate a grid of loss settings over seeds");
  sweep_ov.attach(sw, false);
  sw->add_option("--lambda", lambdas, "lambda values: list or start:step:stop");
  sw->add_option("--mu", mus, "KL coefficients: list or start:step:stop");
  sw->add_option("--forms", forms, "comma list of loss forms");
  sw->add_option("--evidence-fns", fns, "comma list of evidence functions");
  sw->add_flag("--ablation", ablation, "eight-row lambda/variance/KL toggle table");
  sw->add_flag("--tune-lambda", tune, "select lambda per seed on validation OOD AUROC");
  sw->add_option("--lambda-candidates", candidates, "candidates for --tune-lambda");
  sw->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  std::uint64_t self_seed = SelftestOptions{}.seed;
  std::size_t mc_samples = SelftestOptions{}.mc_samples;
  auto* st = app.add_subcommand("selftest", "run the oracle and invariant suite");
  st->add_option("--seed", self_seed, "suite seed");
  st->add_option("--mc-samples", mc_samples, "Monte Carlo draws per oracle")->check(CLI::PositiveNumber);

  for (auto* sub : {gen, tr, ev, cu, sw, st}) sub->add_option("--out", out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  const std::string command = command_line(argc, argv);
  try {
    if (*gen) return cmd_gen_data(gen_ov, out, command);
    if (*tr) return cmd_train(train_ov, out, command);
    if (*ev) return cmd_eval(run, out, command);
    if (*cu) return cmd_curves(curve_run, out, command);
    if (*sw) return cmd_sweep(sweep_ov, lambdas, mus, forms, fns, ablation, tune, candidates, jobs, out, command);
    if (*st) return cmd_selftest(self_seed, mc_samples, out, command);
  } catch (const ConfigError& e) {
    std::cerr << "config error at " << e.path() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace redl
