#include "redl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include <json.hpp>

#include "redl/error.hpp"

namespace redl {
namespace {

using Index = Eigen::Index;

Eigen::MatrixXd activate(HiddenActivation act, const Eigen::MatrixXd& z) {
  if (act == HiddenActivation::relu) return z.cwiseMax(0.0);
  return z.array().tanh().matrix();
}

Eigen::MatrixXd activation_derivative(HiddenActivation act, const Eigen::MatrixXd& z) {
  if (act == HiddenActivation::relu) return (z.array() > 0.0).cast<double>().matrix();
  return (1.0 - z.array().tanh().square()).matrix();
}

std::vector<double> row_of(const Eigen::MatrixXd& m, Index r) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = m(r, c);
  return v;
}

}  // namespace

std::string_view to_string(HiddenActivation act) {
  return act == HiddenActivation::relu ? "relu" : "tanh";
}

HiddenActivation hidden_activation_from_string(std::string_view name) {
  if (name == "relu") return HiddenActivation::relu;
  if (name == "tanh") return HiddenActivation::tanh;
  throw std::invalid_argument("unknown hidden activation '" + std::string(name) + "'");
}

void MlpSpec::validate() const {
  if (layer_widths.size() < 3) throw ConfigError("model.layer_widths", "need input, >= 1 hidden, output");
  for (std::size_t i = 0; i < layer_widths.size(); ++i) {
    if (layer_widths[i] <= 0) {
      throw ConfigError("model.layer_widths[" + std::to_string(i) + "]", "must be positive");
    }
  }
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::mt19937_64 gen(spec_.init_seed);
  for (std::size_t l = 0; l + 1 < spec_.layer_widths.size(); ++l) {
    const int fan_in = spec_.layer_widths[l];
    const int fan_out = spec_.layer_widths[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> init(-bound, bound);
    DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
    for (Index c = 0; c < layer.weight.cols(); ++c) {
      for (Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = init(gen);
    }
    layers_.push_back(std::move(layer));
  }
}

ForwardCache Mlp::forward_cached(const Eigen::MatrixXd& x) const {
  if (x.cols() != spec_.layer_widths.front()) {
    throw DimensionMismatchError("forward: input width " + std::to_string(x.cols()) + ", expected " +
                                 std::to_string(spec_.layer_widths.front()));
  }
  ForwardCache cache;
  cache.post.push_back(x);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = cache.post.back() * layers_[l].weight.transpose();
    z.rowwise() += layers_[l].bias.transpose();
    if (l + 1 < layers_.size()) cache.post.push_back(activate(spec_.hidden_activation, z));
    cache.pre.push_back(std::move(z));
  }
  return cache;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const { return forward_cached(x).logits(); }

Eigen::VectorXd Mlp::backward(const ForwardCache& cache, const Eigen::MatrixXd& upstream) const {
  if (upstream.rows() != cache.logits().rows() || upstream.cols() != cache.logits().cols()) {
    throw DimensionMismatchError("backward: upstream gradient shape does not match logits");
  }
  Eigen::VectorXd grad(static_cast<Index>(parameter_count()));
  std::vector<Index> offsets(layers_.size());
  Index offset = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    offsets[l] = offset;
    offset += layers_[l].weight.size() + layers_[l].bias.size();
  }

  Eigen::MatrixXd delta = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Eigen::MatrixXd dw = delta.transpose() * cache.post[l];
    const Eigen::VectorXd db = delta.colwise().sum().transpose();
    grad.segment(offsets[l], dw.size()) = Eigen::Map<const Eigen::VectorXd>(dw.data(), dw.size());
    grad.segment(offsets[l] + dw.size(), db.size()) = db;
    if (l > 0) {
      delta = (delta * layers_[l].weight).cwiseProduct(
          activation_derivative(spec_.hidden_activation, cache.pre[l - 1]));
    }
  }
  return grad;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return n;
}

Eigen::VectorXd Mlp::parameters() const {
  Eigen::VectorXd flat(static_cast<Index>(parameter_count()));
  Index offset = 0;
  for (const auto& layer : layers_) {
    flat.segment(offset, layer.weight.size()) =
        Eigen::Map<const Eigen::VectorXd>(layer.weight.data(), layer.weight.size());
    offset += layer.weight.size();
    flat.segment(offset, layer.bias.size()) = layer.bias;
    offset += layer.bias.size();
  }
  return flat;
}

void Mlp::set_parameters(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw DimensionMismatchError("set_parameters: expected " + std::to_string(parameter_count()) + " values");
  }
  Index offset = 0;
  for (auto& layer : layers_) {
    Eigen::Map<Eigen::VectorXd>(layer.weight.data(), layer.weight.size()) =
        flat.segment(offset, layer.weight.size());
    offset += layer.weight.size();
    layer.bias = flat.segment(offset, layer.bias.size());
    offset += layer.bias.size();
  }
}

void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads) {
  if (params.size() != grads.size()) throw DimensionMismatchError("adam_step: params/grads size differ");
  if (state.m.size() == 0) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
  }
  if (state.m.size() != params.size()) throw DimensionMismatchError("adam_step: moment size differs");
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= state.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

Eigen::MatrixXd evidence_from_logits(const Eigen::MatrixXd& logits, const LossConfig& cfg) {
  if (!cfg.is_evidential()) {
    const auto clamp = EvidenceFunction::clamped_exp();
    return logits.unaryExpr([&clamp](double l) { return clamp(l); });
  }
  return logits.unaryExpr([&cfg](double l) { return cfg.evidence_fn(l); });
}

double batch_loss(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& targets, int epoch,
                  const LossConfig& cfg, Eigen::MatrixXd* grad) {
  const Index n = logits.rows();
  if (targets.rows() != n || targets.cols() != logits.cols()) {
    throw DimensionMismatchError("batch_loss: targets shape does not match logits");
  }
  if (grad) *grad = Eigen::MatrixXd::Zero(n, logits.cols());
  if (n == 0) return 0.0;
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const auto l = row_of(logits, i);
    const auto y = row_of(targets, i);
    total += total_loss(l, y, epoch, cfg);
    if (grad) {
      const auto g = loss_gradient(l, y, epoch, cfg);
      for (Index k = 0; k < logits.cols(); ++k) (*grad)(i, k) = g[static_cast<std::size_t>(k)] / static_cast<double>(n);
    }
  }
  return total / static_cast<double>(n);
}

TrainLog train(Mlp& net, const LabeledDataset& train_set, const LossConfig& cfg,
               const TrainOptions& options) {
  cfg.validate();
  if (options.epochs <= 0) throw ConfigError("train.epochs", "must be positive");
  if (options.batch_size <= 0) throw ConfigError("train.batch_size", "must be positive");
  if (train_set.num_classes != net.num_classes()) {
    throw DimensionMismatchError("train: dataset has " + std::to_string(train_set.num_classes) +
                                 " classes, network outputs " + std::to_string(net.num_classes()));
  }

  std::vector<std::size_t> id_rows;
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    if (train_set.labels[i] != kOodLabel) id_rows.push_back(i);
  }
  if (id_rows.empty()) throw InvalidParametersError("train: dataset has no in-distribution rows");
  const LabeledDataset data = train_set.subset(id_rows);
  const Eigen::MatrixXd targets = data.one_hot();
  const auto n = static_cast<Index>(data.size());

  std::mt19937_64 shuffle_gen(options.seed);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  AdamState adam;
  adam.lr = options.learning_rate;
  Eigen::VectorXd params = net.parameters();

  TrainLog log;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_gen);
    for (Index start = 0; start < n; start += options.batch_size) {
      const Index count = std::min<Index>(options.batch_size, n - start);
      Eigen::MatrixXd xb(count, data.features.cols());
      Eigen::MatrixXd yb(count, targets.cols());
      for (Index r = 0; r < count; ++r) {
        xb.row(r) = data.features.row(order[static_cast<std::size_t>(start + r)]);
        yb.row(r) = targets.row(order[static_cast<std::size_t>(start + r)]);
      }
      const auto cache = net.forward_cached(xb);
      Eigen::MatrixXd upstream;
      batch_loss(cache.logits(), yb, epoch, cfg, &upstream);
      adam_step(adam, params, net.backward(cache, upstream));
      net.set_parameters(params);
    }

    const Eigen::MatrixXd logits = net.forward(data.features);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = batch_loss(logits, targets, epoch, cfg);
    const Eigen::MatrixXd evidence = evidence_from_logits(logits, cfg);
    std::size_t correct = 0;
    for (Index i = 0; i < n; ++i) {
      Index pred = 0;
      logits.row(i).maxCoeff(&pred);
      const int label = data.labels[static_cast<std::size_t>(i)];
      if (pred == label) ++correct;
      const double target_ev = evidence(i, label);
      rec.mean_target_evidence += target_ev;
      rec.mean_nontarget_evidence += evidence.row(i).sum() - target_ev;
    }
    rec.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    rec.mean_target_evidence /= static_cast<double>(n);
    rec.mean_nontarget_evidence /= static_cast<double>(n);
    log.epochs.push_back(rec);
  }
  return log;
}

void save_checkpoint(const Mlp& net, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["format_version"] = 1;
  doc["layer_widths"] = net.spec().layer_widths;
  doc["hidden_activation"] = std::string(to_string(net.spec().hidden_activation));
  doc["init_seed"] = net.spec().init_seed;
  const Eigen::VectorXd flat = net.parameters();
  doc["parameters"] = std::vector<double>(flat.data(), flat.data() + flat.size());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

Mlp load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const auto doc = nlohmann::json::parse(in);
  if (doc.at("format_version").get<int>() != 1) throw std::runtime_error("unsupported checkpoint version");
  MlpSpec spec;
  spec.layer_widths = doc.at("layer_widths").get<std::vector<int>>();
  spec.hidden_activation = hidden_activation_from_string(doc.at("hidden_activation").get<std::string>());
  spec.init_seed = doc.at("init_seed").get<std::uint64_t>();
  Mlp net(spec);
  const auto values = doc.at("parameters").get<std::vector<double>>();
  net.set_parameters(Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Index>(values.size())));
  return net;
}

}  // namespace redl
