#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "redl/csv.hpp"
#include "redl/dirichlet.hpp"
#include "redl/error.hpp"
#include "redl/metrics.hpp"

using namespace redl;

namespace {

std::vector<ScoredSample> scored(std::vector<double> pos, std::vector<double> neg) { return make_scored(pos, neg); }

double pair_count_auroc(const std::vector<ScoredSample>& s) {
  double wins = 0, pairs = 0;
  for (const auto& p : s)
    for (const auto& n : s)
      if (p.is_positive && !n.is_positive) {
        pairs += 1;
        wins += p.confidence > n.confidence ? 1.0 : p.confidence == n.confidence ? 0.5 : 0.0;
      }
  return wins / pairs;
}

double step_through_ap(const std::vector<ScoredSample>& s) {
  double total = 0;
  int positives = 0;
  for (const auto& p : s) {
    if (!p.is_positive) continue;
    ++positives;
    double at_least = 0, pos_at_least = 0;
    for (const auto& q : s)
      if (q.confidence >= p.confidence) {
        at_least += 1;
        pos_at_least += q.is_positive;
      }
    total += pos_at_least / at_least;
  }
  return total / positives;
}

std::vector<ScoredSample> random_instance(std::mt19937_64& gen, int max_n, int levels) {
  std::uniform_int_distribution<int> size(2, max_n);
  std::uniform_int_distribution<int> level(0, levels);
  std::bernoulli_distribution coin(0.4);
  std::vector<ScoredSample> s(static_cast<std::size_t>(size(gen)));
  for (auto& x : s) x = {level(gen) / static_cast<double>(levels), coin(gen)};
  s[0].is_positive = true;
  s[1].is_positive = false;
  return s;
}

}  // namespace

TEST(Auroc, ReferenceExamples) {
  EXPECT_EQ(auroc(scored({0.9, 0.8}, {0.1, 0.2})), 1.0);
  EXPECT_EQ(auroc(scored({0.3, 0.3}, {0.3, 0.3, 0.3})), 0.5);
  EXPECT_EQ(auroc(scored({0.8, 0.2}, {0.5})), 0.5);
}

TEST(Auroc, SingleClassIsUndefined) {
  EXPECT_THROW(auroc(scored({0.1, 0.2}, {})), UndefinedMetricError);
  EXPECT_THROW(auroc(scored({}, {0.1})), UndefinedMetricError);
  EXPECT_THROW(aupr(scored({}, {0.1})), UndefinedMetricError);
}

TEST(Auroc, MatchesPairCounting) {
  std::mt19937_64 gen(50);
  for (int t = 0; t < 100; ++t) {
    const auto s = random_instance(gen, 200, t % 2 ? 10 : 100000);
    EXPECT_NEAR(auroc(s), pair_count_auroc(s), 1e-12);
  }
}

TEST(Aupr, ReferenceExamples) {
  EXPECT_EQ(aupr(scored({0.9, 0.8}, {0.1, 0.2})), 1.0);
  EXPECT_NEAR(aupr(scored({0.5, 0.5}, {0.5, 0.5, 0.5})), 0.4, 1e-15);
  EXPECT_NEAR(aupr(scored({0.9, 0.4}, {0.5})), 0.5 + (2.0 / 3.0) * 0.5, 1e-15);
}

TEST(Aupr, MatchesStepThrough) {
  std::mt19937_64 gen(51);
  for (int t = 0; t < 25; ++t) {
    const auto s = random_instance(gen, 12, 4);
    EXPECT_NEAR(aupr(s), step_through_ap(s), 1e-12);
  }
}

TEST(RankingMetrics, InvariantUnderMonotoneTransform) {
  std::mt19937_64 gen(52);
  for (int t = 0; t < 50; ++t) {
    auto s = random_instance(gen, 100, 20);
    const double roc = auroc(s);
    const double pr = aupr(s);
    for (auto& x : s) x.confidence = std::exp(3.0 * x.confidence) - 7.0;
    EXPECT_NEAR(auroc(s), roc, 1e-12);
    EXPECT_NEAR(aupr(s), pr, 1e-12);
  }
}

TEST(Ece, ReferenceExamples) {
  const double one[] = {1.0};
  const bool yes[] = {true};
  EXPECT_EQ(ece(one, yes), 0.0);
  const double two[] = {0.8, 0.8};
  const bool half[] = {true, false};
  EXPECT_NEAR(ece(two, half), 0.3, 1e-15);
}

TEST(Ece, CalibratedStreamIsSmall) {
  std::mt19937_64 gen(53);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 400000;
  std::vector<double> conf(n);
  std::unique_ptr<bool[]> correct(new bool[n]);
  for (std::size_t i = 0; i < n; ++i) {
    conf[i] = u(gen);
    correct[i] = u(gen) < conf[i];
  }
  EXPECT_LE(ece(conf, std::span<const bool>(correct.get(), n)), 1.0 / 30.0);
}

TEST(Ece, RejectsBadInput) {
  const double c[] = {1.2};
  const bool y[] = {true};
  EXPECT_THROW(ece(c, y), InvalidParametersError);
  const double c2[] = {0.5, 0.5};
  EXPECT_THROW(ece(c2, y), DimensionMismatchError);
}

TEST(Brier, ReferenceExamples) {
  Eigen::MatrixXd y(2, 3);
  y << 1, 0, 0, 0, 0, 1;
  EXPECT_EQ(brier(y, y), 0.0);
  for (int c : {2, 3, 10}) {
    Eigen::MatrixXd p = Eigen::MatrixXd::Constant(4, c, 1.0 / c);
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(4, c);
    for (int i = 0; i < 4; ++i) t(i, i % c) = 1.0;
    EXPECT_NEAR(brier(p, t), (c - 1.0) / c, 1e-15);
  }
}

TEST(UncertaintyScores, ReferenceExamples) {
  const std::vector<DirichletParams> vac{DirichletParams({0.4, 0.4, 0.4})};
  EXPECT_NEAR(uncertainty_values(vac, UncertaintyMeasure::um, 0.4)[0], 1.0, 1e-15);

  const std::vector<double> raw{3.0, -1.0, 7.5, 0.0};
  const auto norm = min_max_normalize(raw);
  EXPECT_EQ(*std::min_element(norm.begin(), norm.end()), 0.0);
  EXPECT_EQ(*std::max_element(norm.begin(), norm.end()), 1.0);
  const std::vector<double> flat{2.0, 2.0};
  EXPECT_EQ(min_max_normalize(flat), (std::vector<double>{0.0, 0.0}));
}

TEST(UncertaintyScores, UncertaintyMassRanksLikeStrength) {
  std::mt19937_64 gen(54);
  std::exponential_distribution<double> ev(0.1);
  const double lambda = 0.6;
  std::vector<DirichletParams> id, ood;
  std::vector<double> id_s, ood_s;
  for (int i = 0; i < 300; ++i) {
    auto& group = i % 3 ? id : ood;
    auto& strength = i % 3 ? id_s : ood_s;
    std::vector<double> a(4);
    for (auto& x : a) x = ev(gen) * (i % 3 ? 2.0 : 1.0) + lambda;
    group.emplace_back(a);
    strength.push_back(group.back().strength());
  }
  const auto by_um = make_scored(uncertainty_scores(id, UncertaintyMeasure::um, lambda),
                                 uncertainty_scores(ood, UncertaintyMeasure::um, lambda));
  const auto by_s = make_scored(id_s, ood_s);
  EXPECT_EQ(auroc(by_um), auroc(by_s));
  for (auto m : kAllMeasures) {
    const double roc = auroc(make_scored(uncertainty_scores(id, m, lambda), uncertainty_scores(ood, m, lambda)));
    EXPECT_GE(roc, 0.0);
    EXPECT_LE(roc, 1.0);
  }
}

TEST(UncertaintyScores, MaxProbabilityIsConfidence) {
  const std::vector<DirichletParams> d{DirichletParams({3, 1})};
  EXPECT_NEAR(uncertainty_values(d, UncertaintyMeasure::mp, 1.0)[0], 0.25, 1e-15);
  EXPECT_NEAR(uncertainty_scores(d, UncertaintyMeasure::mp, 1.0)[0], 0.75, 1e-15);
  EXPECT_NEAR(uncertainty_scores(d, UncertaintyMeasure::mi, 1.0)[0], -mutual_information(d[0]), 1e-15);
}

TEST(Curves, EndpointsAndExport) {
  const auto s = scored({0.9, 0.7, 0.4}, {0.8, 0.3});
  const auto roc = roc_curve(s);
  ASSERT_EQ(roc.size(), 5u);
  EXPECT_EQ(roc.back().x, 1.0);
  EXPECT_EQ(roc.back().y, 1.0);
  const auto pr = pr_curve(s);
  EXPECT_EQ(pr.front().y, 1.0);
  EXPECT_EQ(pr.back().x, 1.0);
  EXPECT_NEAR(pr.back().y, 0.6, 1e-15);

  const auto dir = std::filesystem::temp_directory_path() / "redl_test_curves";
  std::filesystem::create_directories(dir);
  write_pr_csv(pr, dir / "pr.csv");
  write_roc_csv(roc, dir / "roc.csv");
  const auto pr_t = CsvTable::read(dir / "pr.csv");
  EXPECT_EQ(pr_t.header, (std::vector<std::string>{"threshold", "precision", "recall"}));
  EXPECT_EQ(pr_t.rows.size(), pr.size());
  const auto roc_t = CsvTable::read(dir / "roc.csv");
  EXPECT_EQ(roc_t.header, (std::vector<std::string>{"threshold", "fpr", "tpr"}));
  EXPECT_EQ(parse_double(roc_t.rows.back()[2]), 1.0);
  std::filesystem::remove_all(dir);
}

TEST(MeasureNames, RoundTrip) {
  for (auto m : kAllMeasures) EXPECT_EQ(uncertainty_measure_from_string(to_string(m)), m);
  EXPECT_THROW(uncertainty_measure_from_string("entropy"), std::invalid_argument);
}
