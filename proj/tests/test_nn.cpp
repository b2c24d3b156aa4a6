#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "redl/data.hpp"
#include "redl/error.hpp"
#include "redl/nn.hpp"
#include "redl/selftest.hpp"

using namespace redl;

namespace {

Eigen::MatrixXd random_batch(std::mt19937_64& gen, int n, int d) {
  std::normal_distribution<double> z;
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = z(gen);
  return x;
}

Eigen::MatrixXd one_hot_targets(int n, int c) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, c);
  for (int i = 0; i < n; ++i) y(i, i % c) = 1.0;
  return y;
}

}  // namespace

TEST(Forward, ZeroWeightsGiveBias) {
  Mlp net(MlpSpec{{3, 5, 4}, HiddenActivation::relu, 1});
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.parameter_count()));
  net.set_parameters(theta);
  net.layers().back().bias << 0.1, -0.2, 0.3, 0.4;
  const Eigen::MatrixXd out = net.forward(Eigen::MatrixXd::Random(6, 3));
  for (int i = 0; i < 6; ++i) EXPECT_EQ(out.row(i), net.layers().back().bias.transpose());
}

TEST(Forward, IdentityLayersPassPositiveInputThrough) {
  Mlp net(MlpSpec{{2, 2, 2}, HiddenActivation::relu, 1});
  for (auto& layer : net.layers()) {
    layer.weight = Eigen::MatrixXd::Identity(2, 2);
    layer.bias.setZero();
  }
  Eigen::MatrixXd x(2, 2);
  x << 0.5, 2.0, 3.0, 0.25;
  EXPECT_EQ(net.forward(x), x);
}

TEST(Forward, DeterministicAndShapeChecked) {
  Mlp net(MlpSpec{{2, 16, 16, 3}, HiddenActivation::tanh, 7});
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(10, 2);
  EXPECT_EQ(net.forward(x), net.forward(x));
  EXPECT_EQ(Mlp(MlpSpec{{2, 16, 16, 3}, HiddenActivation::tanh, 7}).parameters(), net.parameters());
  EXPECT_THROW(net.forward(Eigen::MatrixXd::Random(4, 3)), DimensionMismatchError);
}

TEST(MlpSpec, Validation) {
  EXPECT_THROW(Mlp(MlpSpec{{2, 3}, HiddenActivation::relu, 0}), ConfigError);
  EXPECT_THROW(Mlp(MlpSpec{{2, 0, 3}, HiddenActivation::relu, 0}), ConfigError);
}

TEST(Init, GlorotUniformBounds) {
  Mlp net(MlpSpec{{4, 50, 3}, HiddenActivation::relu, 3});
  for (const auto& layer : net.layers()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
    EXPECT_LE(layer.weight.cwiseAbs().maxCoeff(), bound);
    EXPECT_GT(layer.weight.cwiseAbs().maxCoeff(), 0.8 * bound);
    EXPECT_EQ(layer.bias.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Parameters, RoundTrip) {
  Mlp net(MlpSpec{{2, 8, 8, 3}, HiddenActivation::tanh, 4});
  EXPECT_EQ(net.parameter_count(), static_cast<std::size_t>(2 * 8 + 8 + 8 * 8 + 8 + 8 * 3 + 3));
  Eigen::VectorXd theta = net.parameters();
  theta.array() += 0.5;
  net.set_parameters(theta);
  EXPECT_EQ(net.parameters(), theta);
  EXPECT_THROW(net.set_parameters(Eigen::VectorXd::Zero(3)), DimensionMismatchError);
}

TEST(Backward, ZeroUpstreamGivesZeroGradient) {
  Mlp net(MlpSpec{{2, 8, 3}, HiddenActivation::relu, 5});
  const auto cache = net.forward_cached(Eigen::MatrixXd::Random(5, 2));
  EXPECT_EQ(net.backward(cache, Eigen::MatrixXd::Zero(5, 3)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, BatchGradientIsMeanOfPerSampleGradients) {
  std::mt19937_64 gen(40);
  Mlp net(MlpSpec{{2, 8, 8, 3}, HiddenActivation::tanh, 6});
  const Eigen::MatrixXd x = random_batch(gen, 6, 2);
  const Eigen::MatrixXd y = one_hot_targets(6, 3);
  LossConfig cfg;
  cfg.kl_coefficient = 0.3;
  Eigen::MatrixXd grad;
  const auto cache = net.forward_cached(x);
  batch_loss(cache.logits(), y, 4, cfg, &grad);
  const Eigen::VectorXd batch = net.backward(cache, grad);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(batch.size());
  for (int i = 0; i < 6; ++i) {
    const auto c1 = net.forward_cached(x.row(i));
    Eigen::MatrixXd g1;
    batch_loss(c1.logits(), y.row(i), 4, cfg, &g1);
    mean += net.backward(c1, g1) / 6.0;
  }
  EXPECT_LE((batch - mean).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Backward, MatchesFiniteDifferencesForEveryLoss) {
  constexpr double h = 1e-5;
  std::mt19937_64 gen(41);
  for (auto form : {LossForm::edl_mse, LossForm::re_edl_mse, LossForm::ce_projected, LossForm::softmax_mse,
                    LossForm::softmax_ce}) {
    for (auto fn : {EvidenceFunction::relu(), EvidenceFunction::softplus(), EvidenceFunction::clamped_exp()}) {
      LossConfig cfg;
      cfg.form = form;
      cfg.evidence_fn = fn;
      cfg.lambda = 0.7;
      cfg.use_variance_term = form == LossForm::edl_mse;
      cfg.kl_coefficient = cfg.is_evidential() ? 0.5 : 0.0;
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Mlp net(MlpSpec{{2, 8, 8, 3}, HiddenActivation::tanh, seed});
        Eigen::VectorXd theta = net.parameters();
        for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += 0.3 * std::normal_distribution<double>()(gen);
        net.set_parameters(theta);
        const Eigen::MatrixXd x = random_batch(gen, 4, 2);
        const Eigen::MatrixXd y = one_hot_targets(4, 3);
        const auto cache = net.forward_cached(x);
        if ((cache.logits().array().abs() < 1e-3).any()) continue;  // relu kink
        Eigen::MatrixXd grad;
        batch_loss(cache.logits(), y, 6, cfg, &grad);
        const Eigen::VectorXd analytic = net.backward(cache, grad);
        double worst = 0.0;
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
          const double keep = theta[i];
          theta[i] = keep + h;
          net.set_parameters(theta);
          const double up = batch_loss(net.forward(x), y, 6, cfg);
          theta[i] = keep - h;
          net.set_parameters(theta);
          const double down = batch_loss(net.forward(x), y, 6, cfg);
          theta[i] = keep;
          worst = std::max(worst, relative_error(analytic[i], (up - down) / (2 * h)));
        }
        net.set_parameters(theta);
        EXPECT_LE(worst, 1e-4) << to_string(form) << "/" << to_string(fn.kind) << " seed " << seed;
      }
    }
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  AdamState state;
  Eigen::VectorXd p(3);
  p << 1, -2, 3;
  const Eigen::VectorXd before = p;
  for (int i = 0; i < 5; ++i) adam_step(state, p, Eigen::VectorXd::Zero(3));
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.step, 5);
}

TEST(Adam, ConstantGradientStepIsLearningRate) {
  AdamState state;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd g(3);
  g << 0.5, -2.0, 0.01;
  for (int i = 0; i < 200; ++i) {
    const Eigen::VectorXd before = p;
    adam_step(state, p, g);
    const Eigen::VectorXd step = p - before;
    for (int k = 0; k < 3; ++k) {
      EXPECT_NEAR(std::abs(step[k]), state.lr, 1e-5 * state.lr) << "step " << i;
      EXPECT_EQ(std::signbit(step[k]), !std::signbit(g[k]));
    }
  }
}

TEST(Adam, ShapeChecked) {
  AdamState state;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(adam_step(state, p, Eigen::VectorXd::Zero(2)), DimensionMismatchError);
}

TEST(Train, SeparableBlobsReachHighAccuracy) {
  auto ds = gaussian_blobs(2, 100, 2, 0.3, 42);
  for (auto form : {LossForm::edl_mse, LossForm::re_edl_mse, LossForm::ce_projected, LossForm::softmax_mse,
                    LossForm::softmax_ce}) {
    LossConfig cfg;
    cfg.form = form;
    Mlp net(MlpSpec{{2, 16, 2}, HiddenActivation::relu, 1});
    const auto log = train(net, ds, cfg, {100, 32, 1, 1e-2});
    ASSERT_EQ(log.epochs.size(), 100u);
    EXPECT_GE(log.epochs.back().accuracy, 0.99) << to_string(form);
  }
}

TEST(Train, KlRegularizerSuppressesNonTargetEvidence) {
  auto ds = gaussian_blobs(3, 100, 2, 1.2, 43);
  auto run = [&](double mu) {
    LossConfig cfg;
    cfg.kl_coefficient = mu;
    cfg.kl_schedule = KlSchedule::constant;
    Mlp net(MlpSpec{{2, 32, 32, 3}, HiddenActivation::relu, 2});
    return train(net, ds, cfg, {30, 32, 2, 1e-3}).epochs.back();
  };
  EXPECT_LT(run(1.0).mean_nontarget_evidence, run(0.0).mean_nontarget_evidence);
}

TEST(Train, BitReproducibleAndSeedSensitive) {
  auto ds = gaussian_blobs(3, 40, 2, 1.0, 44);
  LossConfig cfg;
  auto run = [&](std::uint64_t shuffle_seed) {
    Mlp net(MlpSpec{{2, 8, 3}, HiddenActivation::relu, 3});
    const auto log = train(net, ds, cfg, {5, 16, shuffle_seed, 1e-3});
    return std::make_pair(net.parameters(), log.epochs.back().loss);
  };
  EXPECT_EQ(run(1), run(1));
  EXPECT_NE(run(1).first, run(2).first);
}

TEST(Train, IgnoresOodRowsAndRejectsEmptyData) {
  auto id = gaussian_blobs(3, 20, 2, 1.0, 45);
  auto mixed = concat(id, ood_ring(30, 2, 5.0, 46, 3));
  LossConfig cfg;
  Mlp a(MlpSpec{{2, 8, 3}, HiddenActivation::relu, 3});
  Mlp b(MlpSpec{{2, 8, 3}, HiddenActivation::relu, 3});
  train(a, id, cfg, {3, 16, 1, 1e-3});
  train(b, mixed, cfg, {3, 16, 1, 1e-3});
  EXPECT_EQ(a.parameters(), b.parameters());
  Mlp c(MlpSpec{{2, 8, 3}, HiddenActivation::relu, 3});
  EXPECT_THROW(train(c, ood_ring(10, 2, 5.0, 1, 3), cfg, {3, 16, 1, 1e-3}), InvalidParametersError);
}

TEST(Checkpoint, RoundTripsExactly) {
  Mlp net(MlpSpec{{3, 7, 5, 4}, HiddenActivation::tanh, 9});
  Eigen::VectorXd theta = net.parameters();
  theta[0] = 1.0 / 3.0;
  net.set_parameters(theta);
  const auto path = std::filesystem::temp_directory_path() / "redl_test_checkpoint.json";
  save_checkpoint(net, path);
  const Mlp back = load_checkpoint(path);
  EXPECT_EQ(back.parameters(), net.parameters());
  EXPECT_EQ(back.spec().layer_widths, net.spec().layer_widths);
  EXPECT_EQ(back.spec().hidden_activation, HiddenActivation::tanh);
  std::filesystem::remove(path);
}

TEST(EvidenceFromLogits, SoftmaxFormsUseClampedExp) {
  Eigen::MatrixXd l(1, 2);
  l << 12.0, -1.0;
  LossConfig cfg;
  cfg.form = LossForm::softmax_ce;
  cfg.evidence_fn = EvidenceFunction::relu();
  const auto e = evidence_from_logits(l, cfg);
  EXPECT_NEAR(e(0, 0), std::exp(10.0), 1e-9);
  EXPECT_NEAR(e(0, 1), std::exp(-1.0), 1e-15);
}
