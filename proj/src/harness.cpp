#include "redl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "redl/dirichlet.hpp"
#include "redl/error.hpp"

#ifndef REDL_GIT_HASH
#define REDL_GIT_HASH "unknown"
#endif

namespace redl {
namespace {

using nlohmann::json;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename T>
T read_field(const json& obj, const char* key, const std::string& path, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + "." + key, std::string("wrong type: ") + e.what());
  }
}

const json& section(const json& doc, const char* key) {
  static const json empty = json::object();
  if (!doc.contains(key)) return empty;
  if (!doc.at(key).is_object()) throw ConfigError(key, "must be an object");
  return doc.at(key);
}

EvidenceFunction evidence_from_json(const json& j, const std::string& path) {
  try {
    if (j.is_string()) return EvidenceFunction{evidence_kind_from_string(j.get<std::string>())};
    EvidenceFunction f{evidence_kind_from_string(j.at("kind").get<std::string>())};
    f.clamp_lo = j.value("clamp_lo", f.clamp_lo);
    f.clamp_hi = j.value("clamp_hi", f.clamp_hi);
    return f;
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
}

json evidence_to_json(const EvidenceFunction& f) {
  json j{{"kind", std::string(to_string(f.kind))}};
  if (f.kind == EvidenceKind::clamped_exp) {
    j["clamp_lo"] = f.clamp_lo;
    j["clamp_hi"] = f.clamp_hi;
  }
  return j;
}

std::string evidence_label(const EvidenceFunction& f) {
  std::string s(to_string(f.kind));
  if (f.kind == EvidenceKind::clamped_exp && (f.clamp_lo != -10.0 || f.clamp_hi != 10.0)) {
    s += "[" + format_double(f.clamp_lo) + ";" + format_double(f.clamp_hi) + "]";
  }
  return s;
}

double round12(double v) { return std::round(v * 1e12) / 1e12; }

std::vector<double> row_vector(const Eigen::MatrixXd& m, Eigen::Index r) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = m(r, c);
  return v;
}

std::vector<DirichletParams> dirichlets_for(const Eigen::MatrixXd& logits, const LossConfig& loss) {
  std::vector<DirichletParams> out;
  out.reserve(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) out.push_back(alpha_from_logits(row_vector(logits, i), loss));
  return out;
}

std::vector<double> max_probability(const Eigen::MatrixXd& logits, const LossConfig& loss) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto p = predictive_probability(row_vector(logits, i), loss);
    out.push_back(*std::max_element(p.begin(), p.end()));
  }
  return out;
}

std::vector<double> ood_confidence(const Eigen::MatrixXd& logits, const LossConfig& loss,
                                   UncertaintyMeasure measure) {
  if (measure == UncertaintyMeasure::mp) return max_probability(logits, loss);
  const auto ds = dirichlets_for(logits, loss);
  return uncertainty_scores(ds, measure, loss.lambda);
}

double safe_metric(auto&& fn) {
  try {
    return fn();
  } catch (const UndefinedMetricError&) {
    return kNaN;
  }
}

double sample_sd(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string cell_name(const LossConfig& loss, bool tuned) {
  std::ostringstream out;
  out << to_string(loss.form) << "|" << evidence_label(loss.evidence_fn) << "|lambda="
      << (tuned ? std::string("tuned") : format_double(loss.lambda));
  if (loss.use_variance_term) out << "|var";
  if (loss.kl_coefficient > 0.0) {
    out << "|mu=" << format_double(loss.kl_coefficient) << "(" << to_string(loss.kl_schedule) << ")";
  }
  return out.str();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (data.num_classes < 2) throw ConfigError("data.num_classes", "must be >= 2");
  if (data.n_per_class == 0) throw ConfigError("data.n_per_class", "must be positive");
  if (data.dim < 2) throw ConfigError("data.dim", "must be >= 2");
  if (!(data.spread >= 0.0)) throw ConfigError("data.spread", "must be >= 0");
  if (data.ood_n == 0) throw ConfigError("data.ood_n", "must be positive");
  if (!(data.ood_radius > 0.0)) throw ConfigError("data.ood_radius", "must be > 0");
  if (!(data.val_fraction > 0.0) || !(data.test_fraction > 0.0) ||
      data.val_fraction + data.test_fraction >= 1.0) {
    throw ConfigError("data.val_fraction", "val and test fractions must be > 0 and sum below 1");
  }
  for (std::size_t i = 0; i < data.noise_sigmas.size(); ++i) {
    if (!(data.noise_sigmas[i] >= 0.0)) {
      throw ConfigError("data.noise_sigmas[" + std::to_string(i) + "]", "must be >= 0");
    }
  }
  if (model.hidden.empty()) throw ConfigError("model.hidden", "need at least one hidden layer");
  for (std::size_t i = 0; i < model.hidden.size(); ++i) {
    if (model.hidden[i] <= 0) throw ConfigError("model.hidden[" + std::to_string(i) + "]", "must be positive");
  }
  loss.validate();
  if (epochs <= 0) throw ConfigError("train.epochs", "must be positive");
  if (batch_size <= 0) throw ConfigError("train.batch_size", "must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate", "must be > 0");
  for (std::size_t i = 0; i < lambda_sweep.size(); ++i) {
    if (!(lambda_sweep[i] > 0.0)) throw ConfigError("sweep.lambda[" + std::to_string(i) + "]", "must be > 0");
  }
  for (std::size_t i = 0; i < mu_sweep.size(); ++i) {
    if (!(mu_sweep[i] >= 0.0)) throw ConfigError("sweep.mu[" + std::to_string(i) + "]", "must be >= 0");
  }
  if (tune_lambda || ablation) {
    if (lambda_candidates.empty()) throw ConfigError("lambda_selection.candidates", "must be non-empty");
    for (std::size_t i = 0; i < lambda_candidates.size(); ++i) {
      if (!(lambda_candidates[i] > 0.0)) {
        throw ConfigError("lambda_selection.candidates[" + std::to_string(i) + "]", "must be > 0");
      }
    }
  }
  if (!(ablation_kl_coefficient >= 0.0)) throw ConfigError("sweep.ablation_kl_coefficient", "must be >= 0");
  if (seeds.empty()) throw ConfigError("seeds", "must be non-empty");
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (seeds[i] == seeds[j]) throw ConfigError("seeds[" + std::to_string(i) + "]", "duplicate seed");
    }
  }
  if (measures.empty()) throw ConfigError("metrics", "must be non-empty");
  for (const auto& cell : expand_grid(*this)) {
    try {
      cell.loss.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("sweep(" + cell.name + ")." + e.path(), e.what());
    }
  }
}

ExperimentConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("$", "config must be a JSON object");
  ExperimentConfig cfg;
  const int version = read_field<int>(doc, "format_version", "$", kFormatVersion);
  if (version != kFormatVersion) throw ConfigError("format_version", "unsupported version " + std::to_string(version));

  const auto& d = section(doc, "data");
  cfg.data.num_classes = read_field(d, "num_classes", "data", cfg.data.num_classes);
  cfg.data.n_per_class = read_field(d, "n_per_class", "data", cfg.data.n_per_class);
  cfg.data.dim = read_field(d, "dim", "data", cfg.data.dim);
  cfg.data.spread = read_field(d, "spread", "data", cfg.data.spread);
  cfg.data.center_radius = read_field(d, "center_radius", "data", cfg.data.center_radius);
  cfg.data.ood_n = read_field(d, "ood_n", "data", cfg.data.ood_n);
  cfg.data.ood_radius = read_field(d, "ood_radius", "data", cfg.data.ood_radius);
  cfg.data.val_fraction = read_field(d, "val_fraction", "data", cfg.data.val_fraction);
  cfg.data.test_fraction = read_field(d, "test_fraction", "data", cfg.data.test_fraction);
  cfg.data.noise_sigmas = read_field(d, "noise_sigmas", "data", cfg.data.noise_sigmas);

  const auto& m = section(doc, "model");
  cfg.model.hidden = read_field(m, "hidden", "model", cfg.model.hidden);
  try {
    cfg.model.hidden_activation = hidden_activation_from_string(
        read_field<std::string>(m, "hidden_activation", "model", "relu"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("model.hidden_activation", e.what());
  }

  const auto& l = section(doc, "loss");
  try {
    cfg.loss.form = loss_form_from_string(read_field<std::string>(l, "form", "loss", "re_edl_mse"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("loss.form", e.what());
  }
  cfg.loss.lambda = read_field(l, "lambda", "loss", cfg.loss.lambda);
  cfg.loss.use_variance_term = read_field(l, "use_variance_term", "loss", cfg.loss.use_variance_term);
  cfg.loss.kl_coefficient = read_field(l, "kl_coefficient", "loss", cfg.loss.kl_coefficient);
  try {
    cfg.loss.kl_schedule = kl_schedule_from_string(read_field<std::string>(l, "kl_schedule", "loss", "annealed"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("loss.kl_schedule", e.what());
  }
  cfg.loss.anneal_horizon = read_field(l, "anneal_horizon", "loss", cfg.loss.anneal_horizon);
  if (l.contains("evidence_fn")) cfg.loss.evidence_fn = evidence_from_json(l.at("evidence_fn"), "loss.evidence_fn");

  const auto& t = section(doc, "train");
  cfg.epochs = read_field(t, "epochs", "train", cfg.epochs);
  cfg.batch_size = read_field(t, "batch_size", "train", cfg.batch_size);
  cfg.learning_rate = read_field(t, "learning_rate", "train", cfg.learning_rate);

  const auto& s = section(doc, "sweep");
  if (s.contains("forms")) {
    const auto names = read_field<std::vector<std::string>>(s, "forms", "sweep", {});
    for (std::size_t i = 0; i < names.size(); ++i) {
      try {
        cfg.forms.push_back(loss_form_from_string(names[i]));
      } catch (const std::invalid_argument& e) {
        throw ConfigError("sweep.forms[" + std::to_string(i) + "]", e.what());
      }
    }
  }
  if (s.contains("evidence_fns")) {
    const auto& arr = s.at("evidence_fns");
    if (!arr.is_array()) throw ConfigError("sweep.evidence_fns", "must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      cfg.evidence_fns.push_back(evidence_from_json(arr[i], "sweep.evidence_fns[" + std::to_string(i) + "]"));
    }
  }
  cfg.lambda_sweep = read_field(s, "lambda", "sweep", cfg.lambda_sweep);
  cfg.mu_sweep = read_field(s, "mu", "sweep", cfg.mu_sweep);
  cfg.ablation = read_field(s, "ablation", "sweep", cfg.ablation);
  cfg.ablation_kl_coefficient = read_field(s, "ablation_kl_coefficient", "sweep", cfg.ablation_kl_coefficient);

  const auto& sel = section(doc, "lambda_selection");
  cfg.tune_lambda = read_field(sel, "enabled", "lambda_selection", cfg.tune_lambda);
  cfg.lambda_candidates = read_field(sel, "candidates", "lambda_selection", cfg.lambda_candidates);

  cfg.seeds = read_field(doc, "seeds", "$", cfg.seeds);
  if (doc.contains("metrics")) {
    cfg.measures.clear();
    const auto names = read_field<std::vector<std::string>>(doc, "metrics", "$", {});
    for (std::size_t i = 0; i < names.size(); ++i) {
      try {
        cfg.measures.push_back(uncertainty_measure_from_string(names[i]));
      } catch (const std::invalid_argument& e) {
        throw ConfigError("metrics[" + std::to_string(i) + "]", e.what());
      }
    }
  }
  cfg.output_dir = read_field<std::string>(doc, "output_dir", "$", "");
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json doc;
  doc["format_version"] = kFormatVersion;
  doc["data"] = {{"num_classes", cfg.data.num_classes},   {"n_per_class", cfg.data.n_per_class},
                 {"dim", cfg.data.dim},                   {"spread", cfg.data.spread},
                 {"center_radius", cfg.data.center_radius}, {"ood_n", cfg.data.ood_n},
                 {"ood_radius", cfg.data.ood_radius},     {"val_fraction", cfg.data.val_fraction},
                 {"test_fraction", cfg.data.test_fraction}, {"noise_sigmas", cfg.data.noise_sigmas}};
  doc["model"] = {{"hidden", cfg.model.hidden},
                  {"hidden_activation", std::string(to_string(cfg.model.hidden_activation))}};
  doc["loss"] = {{"form", std::string(to_string(cfg.loss.form))},
                 {"lambda", cfg.loss.lambda},
                 {"use_variance_term", cfg.loss.use_variance_term},
                 {"kl_coefficient", cfg.loss.kl_coefficient},
                 {"kl_schedule", std::string(to_string(cfg.loss.kl_schedule))},
                 {"anneal_horizon", cfg.loss.anneal_horizon},
                 {"evidence_fn", evidence_to_json(cfg.loss.evidence_fn)}};
  doc["train"] = {{"epochs", cfg.epochs}, {"batch_size", cfg.batch_size}, {"learning_rate", cfg.learning_rate}};
  json forms = json::array();
  for (auto f : cfg.forms) forms.push_back(std::string(to_string(f)));
  json fns = json::array();
  for (const auto& f : cfg.evidence_fns) fns.push_back(evidence_to_json(f));
  doc["sweep"] = {{"forms", forms},
                  {"evidence_fns", fns},
                  {"lambda", cfg.lambda_sweep},
                  {"mu", cfg.mu_sweep},
                  {"ablation", cfg.ablation},
                  {"ablation_kl_coefficient", cfg.ablation_kl_coefficient}};
  doc["lambda_selection"] = {{"enabled", cfg.tune_lambda}, {"candidates", cfg.lambda_candidates}};
  doc["seeds"] = cfg.seeds;
  json measures = json::array();
  for (auto m : cfg.measures) measures.push_back(std::string(to_string(m)));
  doc["metrics"] = measures;
  doc["output_dir"] = cfg.output_dir;
  return doc;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("$", "cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("$", std::string("invalid JSON: ") + e.what());
  }
  return config_from_json(doc);
}

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    const auto parts = split_csv_line([&] {
      std::string t = text;
      std::replace(t.begin(), t.end(), ':', ',');
      return t;
    }());
    if (parts.size() != 3) throw std::invalid_argument("range must be start:step:stop, got '" + text + "'");
    const double lo = parse_double(parts[0]);
    const double step = parse_double(parts[1]);
    const double hi = parse_double(parts[2]);
    if (!(step > 0.0) || hi < lo) throw std::invalid_argument("range needs step > 0 and stop >= start");
    const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9)) + 1;
    for (long k = 0; k < count; ++k) out.push_back(round12(lo + static_cast<double>(k) * step));
    return out;
  }
  for (const auto& cell : split_csv_line(text)) {
    if (!cell.empty()) out.push_back(parse_double(cell));
  }
  return out;
}

std::vector<Cell> expand_grid(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  if (cfg.ablation) {
    // (lambda fixed to 1, variance term, KL term), EDL first and Re-EDL last.
    constexpr bool rows[8][3] = {{true, true, true},   {false, true, true}, {true, false, true},
                                 {true, true, false},  {false, false, true}, {false, true, false},
                                 {true, false, false}, {false, false, false}};
    for (const auto& r : rows) {
      LossConfig loss = cfg.loss;
      loss.lambda = 1.0;
      loss.form = r[1] ? LossForm::edl_mse : LossForm::re_edl_mse;
      loss.use_variance_term = r[1];
      loss.kl_coefficient = r[2] ? cfg.ablation_kl_coefficient : 0.0;
      std::string name = std::string("lambda=") + (r[0] ? "1" : "tuned") + "|var=" + (r[1] ? "on" : "off") +
                         "|kl=" + (r[2] ? "on" : "off");
      cells.push_back({std::move(name), loss, !r[0]});
    }
    return cells;
  }
  const std::vector<LossForm> forms = cfg.forms.empty() ? std::vector{cfg.loss.form} : cfg.forms;
  const auto fns = cfg.evidence_fns.empty() ? std::vector{cfg.loss.evidence_fn} : cfg.evidence_fns;
  const auto lambdas = cfg.lambda_sweep.empty() ? std::vector{cfg.loss.lambda} : cfg.lambda_sweep;
  const auto mus = cfg.mu_sweep.empty() ? std::vector{cfg.loss.kl_coefficient} : cfg.mu_sweep;
  for (auto form : forms) {
    for (const auto& fn : fns) {
      for (double lambda : lambdas) {
        for (double mu : mus) {
          LossConfig loss = cfg.loss;
          loss.form = form;
          loss.evidence_fn = fn;
          loss.lambda = lambda;
          loss.kl_coefficient = mu;
          if (form != LossForm::edl_mse) loss.use_variance_term = false;
          if (!loss.is_evidential()) loss.kl_coefficient = 0.0;
          const bool tuned = cfg.tune_lambda && loss.is_evidential();
          cells.push_back({cell_name(loss, tuned), loss, tuned});
        }
      }
    }
  }
  return cells;
}

PreparedData prepare_data(const DataSpec& spec, std::uint64_t seed) {
  const auto id = gaussian_blobs(spec.num_classes, spec.n_per_class, spec.dim, spec.spread, 3 * seed,
                                 spec.center_radius);
  const auto split = stratified_split(id, spec.val_fraction, spec.test_fraction, 3 * seed);
  const auto ood_val_n = std::max<std::size_t>(1, split.val.size());
  const auto ood_val = ood_ring(ood_val_n, spec.dim, spec.ood_radius, 3 * seed + 1, spec.num_classes);
  const auto ood_test = ood_ring(spec.ood_n, spec.dim, spec.ood_radius, 3 * seed + 2, spec.num_classes);

  const auto scaler = Standardizer::fit(split.train);
  PreparedData out{scaler.apply(split.train), scaler.apply(split.val), scaler.apply(split.test),
                   scaler.apply(ood_val), scaler.apply(ood_test), {}};
  for (const auto& noisy : add_noise(split.test, spec.noise_sigmas, 3 * seed)) {
    out.noisy_test.push_back(scaler.apply(noisy));
  }
  return out;
}

MlpSpec mlp_spec_for(const ExperimentConfig& cfg, std::uint64_t seed) {
  MlpSpec spec;
  spec.layer_widths.clear();
  spec.layer_widths.push_back(static_cast<int>(cfg.data.dim));
  spec.layer_widths.insert(spec.layer_widths.end(), cfg.model.hidden.begin(), cfg.model.hidden.end());
  spec.layer_widths.push_back(static_cast<int>(cfg.data.num_classes));
  spec.hidden_activation = cfg.model.hidden_activation;
  spec.init_seed = seed;
  return spec;
}

double metric(const MetricRow& row, const std::string& name) {
  for (const auto& [k, v] : row) {
    if (k == name) return v;
  }
  throw std::out_of_range("no metric named '" + name + "'");
}

double validation_ood_auroc(const Mlp& net, const LossConfig& loss, const PreparedData& data) {
  const auto measure = loss.is_evidential() ? UncertaintyMeasure::um : UncertaintyMeasure::mp;
  const auto pos = ood_confidence(net.forward(data.val.features), loss, measure);
  const auto neg = ood_confidence(net.forward(data.ood_val.features), loss, measure);
  const auto scored = make_scored(pos, neg);
  return safe_metric([&] { return auroc(scored); });
}

MetricRow evaluate(const Mlp& net, const LossConfig& loss, const PreparedData& data,
                   const std::vector<UncertaintyMeasure>& measures) {
  MetricRow row;
  const Eigen::MatrixXd logits = net.forward(data.test.features);
  const Eigen::MatrixXd ood_logits = net.forward(data.ood_test.features);
  const auto n = static_cast<std::size_t>(logits.rows());

  Eigen::MatrixXd probs(logits.rows(), logits.cols());
  std::vector<double> conf(n);
  std::unique_ptr<bool[]> correct_buf(new bool[n]);
  std::span<bool> correct(correct_buf.get(), n);
  std::vector<ScoredSample> mis;
  std::size_t n_correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = predictive_probability(row_vector(logits, static_cast<Eigen::Index>(i)), loss);
    for (std::size_t k = 0; k < p.size(); ++k) probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = p[k];
    const std::size_t pred = argmax(p);
    correct[i] = static_cast<int>(pred) == data.test.labels[i];
    conf[i] = p[pred];
    n_correct += correct[i] ? 1 : 0;
    mis.push_back({conf[i], correct[i]});
  }
  row.emplace_back("accuracy", n ? static_cast<double>(n_correct) / static_cast<double>(n) : kNaN);
  row.emplace_back("mis_aupr", safe_metric([&] { return aupr(mis); }));
  row.emplace_back("ece", ece(conf, std::span<const bool>(correct.data(), n)));
  row.emplace_back("brier", brier(probs, data.test.one_hot()));

  for (auto m : measures) {
    double pr = kNaN;
    double roc = kNaN;
    if (loss.is_evidential() || m == UncertaintyMeasure::mp) {
      const auto scored = make_scored(ood_confidence(logits, loss, m), ood_confidence(ood_logits, loss, m));
      pr = safe_metric([&] { return aupr(scored); });
      roc = safe_metric([&] { return auroc(scored); });
    }
    row.emplace_back("ood_aupr_" + std::string(to_string(m)), pr);
    row.emplace_back("ood_auroc_" + std::string(to_string(m)), roc);
  }

  const Eigen::MatrixXd ev = evidence_from_logits(logits, loss);
  double target = 0.0;
  double nontarget = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = ev(static_cast<Eigen::Index>(i), data.test.labels[i]);
    target += t;
    nontarget += ev.row(static_cast<Eigen::Index>(i)).sum() - t;
  }
  target /= static_cast<double>(n);
  nontarget /= static_cast<double>(n);
  row.emplace_back("target_evidence", target);
  row.emplace_back("nontarget_evidence", nontarget);
  row.emplace_back("target_ratio", target / (target + nontarget));
  row.emplace_back("ood_evidence", evidence_from_logits(ood_logits, loss).rowwise().sum().mean());

  for (const auto& noisy : data.noisy_test) {
    const Eigen::MatrixXd nl = net.forward(noisy.features);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      const auto p = predictive_probability(row_vector(nl, static_cast<Eigen::Index>(i)), loss);
      ok += static_cast<int>(argmax(p)) == noisy.labels[i] ? 1 : 0;
    }
    row.emplace_back("accuracy_noise_" + format_double(noisy.origin.front().sigma),
                     static_cast<double>(ok) / static_cast<double>(noisy.size()));
  }
  return row;
}

RunResult run_cell(const ExperimentConfig& cfg, const Cell& cell, std::size_t cell_index,
                   std::uint64_t seed, const PreparedData& data) {
  const TrainOptions options{cfg.epochs, cfg.batch_size, seed, cfg.learning_rate};
  const std::vector<double> lambdas = cell.tune_lambda ? cfg.lambda_candidates : std::vector{cell.loss.lambda};

  RunResult best;
  double best_score = -std::numeric_limits<double>::infinity();
  std::optional<Mlp> best_net;
  LossConfig best_loss = cell.loss;
  for (double lambda : lambdas) {
    LossConfig loss = cell.loss;
    loss.lambda = lambda;
    Mlp net(mlp_spec_for(cfg, seed));
    auto log = train(net, data.train, loss, options);
    const double score = lambdas.size() > 1 ? validation_ood_auroc(net, loss, data) : 0.0;
    if (!best_net || score > best_score) {
      best_score = score;
      best_net.emplace(std::move(net));
      best.log = std::move(log);
      best_loss = loss;
    }
  }
  best.cell_index = cell_index;
  best.seed = seed;
  best.lambda = best_loss.lambda;
  best.metrics = evaluate(*best_net, best_loss, data, cfg.measures);
  return best;
}

CsvTable ResultTable::per_run() const {
  CsvTable table;
  table.header = {"cell", "seed", "lambda"};
  if (runs.empty()) return table;
  for (const auto& [k, v] : runs.front().metrics) table.header.push_back(k);
  for (const auto& r : runs) {
    std::vector<std::string> row{cells[r.cell_index].name, std::to_string(r.seed), format_double(r.lambda)};
    for (const auto& [k, v] : r.metrics) row.push_back(format_double(v));
    table.add_row(std::move(row));
  }
  return table;
}

CsvTable ResultTable::aggregated() const {
  CsvTable table;
  table.header = {"cell", "form", "evidence_fn", "lambda", "use_variance_term", "kl_coefficient",
                  "kl_schedule", "n_seeds", "lambda_selected_mean"};
  if (runs.empty()) return table;
  std::vector<std::string> names;
  for (const auto& [k, v] : runs.front().metrics) {
    names.push_back(k);
    table.header.push_back(k + "_mean");
    table.header.push_back(k + "_sd");
  }
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<const RunResult*> mine;
    for (const auto& r : runs) {
      if (r.cell_index == c) mine.push_back(&r);
    }
    if (mine.empty()) continue;
    const auto& loss = cells[c].loss;
    double lambda_mean = 0.0;
    for (const auto* r : mine) lambda_mean += r->lambda;
    lambda_mean /= static_cast<double>(mine.size());
    std::vector<std::string> row{cells[c].name,
                                 std::string(to_string(loss.form)),
                                 evidence_label(loss.evidence_fn),
                                 cells[c].tune_lambda ? "tuned" : format_double(loss.lambda),
                                 loss.use_variance_term ? "1" : "0",
                                 format_double(loss.kl_coefficient),
                                 std::string(to_string(loss.kl_schedule)),
                                 std::to_string(mine.size()),
                                 format_double(lambda_mean)};
    for (const auto& name : names) {
      std::vector<double> values;
      for (const auto* r : mine) values.push_back(metric(r->metrics, name));
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(values.size());
      row.push_back(format_double(mean));
      row.push_back(format_double(sample_sd(values, mean)));
    }
    table.add_row(std::move(row));
  }
  return table;
}

CsvTable ResultTable::epoch_log() const {
  CsvTable table;
  table.header = {"cell", "seed", "lambda", "epoch", "loss", "accuracy", "target_evidence", "nontarget_evidence"};
  for (const auto& r : runs) {
    for (const auto& e : r.log.epochs) {
      table.add_row({cells[r.cell_index].name, std::to_string(r.seed), format_double(r.lambda),
                     std::to_string(e.epoch), format_double(e.loss), format_double(e.accuracy),
                     format_double(e.mean_target_evidence), format_double(e.mean_nontarget_evidence)});
    }
  }
  return table;
}

ResultTable run_experiment(const ExperimentConfig& cfg, int jobs) {
  cfg.validate();
  ResultTable table;
  table.cells = expand_grid(cfg);

  std::vector<PreparedData> data;
  data.reserve(cfg.seeds.size());
  for (auto seed : cfg.seeds) data.push_back(prepare_data(cfg.data, seed));

  const std::size_t n_tasks = table.cells.size() * cfg.seeds.size();
  table.runs.resize(n_tasks);
  auto run_task = [&](std::size_t t) {
    const std::size_t c = t / cfg.seeds.size();
    const std::size_t s = t % cfg.seeds.size();
    table.runs[t] = run_cell(cfg, table.cells[c], c, cfg.seeds[s], data[s]);
  };

  if (jobs <= 1) {
    for (std::size_t t = 0; t < n_tasks; ++t) run_task(t);
    return table;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t t = next++; t < n_tasks; t = next++) {
        try {
          run_task(t);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
  return table;
}

PartialMarker::PartialMarker(const std::filesystem::path& dir) : marker_(dir / ".partial") {
  std::filesystem::create_directories(dir);
  std::ofstream(marker_) << "incomplete\n";
}

void PartialMarker::commit() { std::filesystem::remove(marker_); }

json make_manifest(const std::string& command, const std::vector<std::string>& files) {
  return json{{"format_version", kFormatVersion},
              {"spec_version", kSpecVersion},
              {"git_hash", REDL_GIT_HASH},
              {"command", command},
              {"files", files}};
}

void write_run_directory(const ExperimentConfig& cfg, const ResultTable& table,
                         const std::filesystem::path& dir, const std::string& command) {
  PartialMarker marker(dir);
  std::ofstream(dir / "config.json", std::ios::binary) << config_to_json(cfg).dump(2) << '\n';
  table.aggregated().write(dir / "results.csv");
  table.per_run().write(dir / "runs.csv");
  table.epoch_log().write(dir / "epoch_log.csv");
  std::ofstream(dir / "manifest.json", std::ios::binary)
      << make_manifest(command, {"config.json", "results.csv", "runs.csv", "epoch_log.csv"}).dump(2) << '\n';
  marker.commit();
}

}  // namespace redl
