#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "redl/data.hpp"
#include "redl/losses.hpp"

namespace redl {

enum class HiddenActivation { relu, tanh };

std::string_view to_string(HiddenActivation act);
HiddenActivation hidden_activation_from_string(std::string_view name);

struct MlpSpec {
  /// input width, hidden widths..., number of classes
  std::vector<int> layer_widths{2, 64, 64, 3};
  HiddenActivation hidden_activation = HiddenActivation::relu;
  std::uint64_t init_seed = 0;

  void validate() const;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  ///< out x in
  Eigen::VectorXd bias;
};

/// Activations kept from a forward pass for backward().
struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;   ///< per layer, n x out
  std::vector<Eigen::MatrixXd> post;  ///< post[0] is the input; post[l+1] = act(pre[l])
  const Eigen::MatrixXd& logits() const { return pre.back(); }
};

/// Fully connected classifier with a linear output layer.
class Mlp {
 public:
  /// Glorot-uniform weights, zero biases.
  explicit Mlp(MlpSpec spec);

  const MlpSpec& spec() const { return spec_; }
  std::size_t num_classes() const { return static_cast<std::size_t>(spec_.layer_widths.back()); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Rows of x are samples; returns n x C logits.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  ForwardCache forward_cached(const Eigen::MatrixXd& x) const;

  /// Gradient of sum_{i,k} upstream(i,k) * logits(i,k) with respect to every parameter,
  /// flattened in parameter order.
  Eigen::VectorXd backward(const ForwardCache& cache, const Eigen::MatrixXd& upstream) const;

  std::size_t parameter_count() const;
  /// Layer by layer: weight (column-major), then bias.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);

 private:
  MlpSpec spec_;
  std::vector<DenseLayer> layers_;
};

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
};

/// One bias-corrected Adam update, in place. Moments are sized on first use.
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grads);

struct TrainOptions {
  int epochs = 100;
  int batch_size = 64;
  std::uint64_t seed = 0;
  double learning_rate = 1e-3;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double mean_target_evidence = 0.0;
  double mean_nontarget_evidence = 0.0;  ///< summed over non-target classes, averaged over samples
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

/// Per-sample class evidence implied by logits: f(l) for evidential forms, exp(clamp(l)) for
/// softmax forms.
Eigen::MatrixXd evidence_from_logits(const Eigen::MatrixXd& logits, const LossConfig& cfg);

/// Mean loss over rows (ID rows only) and its gradient with respect to the logits.
double batch_loss(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& targets, int epoch,
                  const LossConfig& cfg, Eigen::MatrixXd* grad = nullptr);

/// Mini-batch Adam on the ID rows of `train`. Shuffle order comes from options.seed; the last
/// partial batch is kept. Epoch t (0-based) sets the KL anneal weight.
TrainLog train(Mlp& net, const LabeledDataset& train, const LossConfig& cfg,
               const TrainOptions& options);

/// JSON document: format_version, layer_widths, hidden_activation, init_seed, parameters.
void save_checkpoint(const Mlp& net, const std::filesystem::path& path);
Mlp load_checkpoint(const std::filesystem::path& path);

}  // namespace redl
