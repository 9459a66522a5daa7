#include "cltr/click_sim.hpp"
#include "cltr/deep_propdcg.hpp"
#include "cltr/linear_ccp.hpp"
#include "cltr/synthetic.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

namespace cltr {
namespace {

MatrixXd random_features(Rng& rng, Eigen::Index m, Eigen::Index dim) {
  MatrixXd x(m, dim);
  for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = rng.normal();
  return x;
}

// One hidden unit reading feature 0 with output weight 10: score ~ 10 * sigmoid(x0).
MlpModel steep_model(std::size_t input_dim) {
  MlpModel m(input_dim, 1);
  m.w1(0, 0) = 1.0;
  m.w2[0] = 10.0;
  return m;
}

TEST(MlpForward, Examples) {
  Rng rng(1);
  const MlpModel zero(4, 6);
  const VectorXd x = random_features(rng, 1, 4).row(0).transpose();
  EXPECT_EQ(mlp_forward(zero, x), 0.0);

  MlpModel bias_only(4, 6);
  bias_only.b2 = -2.5;
  EXPECT_EQ(mlp_forward(bias_only, x), -2.5);

  MlpModel m = MlpModel::glorot(4, 6, 3);
  m.b1.setConstant(0.3);
  m.b2 = 0.7;
  const VectorXd other = random_features(rng, 1, 4).row(0).transpose();
  const VectorXd zx = 0.0 * x, zo = 0.0 * other;
  EXPECT_EQ(mlp_forward(m, zx), mlp_forward(m, zo));

  const VectorXd short_input = VectorXd::Zero(3);
  EXPECT_THROW(mlp_forward(m, short_input), std::invalid_argument);
}

TEST(MlpForward, MatchesHandComputation) {
  Rng rng(2);
  const MlpModel m = MlpModel::glorot(3, 4, 5);
  const VectorXd x = random_features(rng, 1, 3).row(0).transpose();
  double expected = m.b2;
  for (Eigen::Index h = 0; h < 4; ++h) {
    const double z = m.w1.row(h).dot(x) + m.b1[h];
    expected += m.w2[h] / (1.0 + std::exp(-z));
  }
  EXPECT_NEAR(mlp_forward(m, x), expected, 1e-14);
}

TEST(MlpModel, GlorotRangeAndPacking) {
  const MlpModel m = MlpModel::glorot(5, 7, 9);
  const double a1 = std::sqrt(6.0 / 12.0);
  EXPECT_LE(m.w1.cwiseAbs().maxCoeff(), a1);
  EXPECT_LE(m.w2.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 8.0));
  EXPECT_TRUE(m.b1.isZero());
  EXPECT_EQ(m.num_params(), 5u * 7 + 7 + 7 + 1);
  MlpModel back(5, 7);
  back.unpack(m.pack());
  EXPECT_EQ(back.pack(), m.pack());
  EXPECT_THROW(back.unpack(VectorXd::Zero(3)), std::invalid_argument);
  EXPECT_EQ(MlpModel::glorot(5, 7, 9).pack(), m.pack());
}

TEST(QueryLoss, Examples) {
  const MlpModel steep = steep_model(1);
  const MatrixXd separated{{10.0}, {-10.0}, {-10.0}};
  EXPECT_NEAR(query_loss<double>(steep, separated, 0, 1.0, RankWeighting::dcg()), -1.0 / std::log(2.0), 1e-12);
  EXPECT_NEAR(-1.0 / std::log(2.0), -1.4427, 1e-4);

  const MlpModel flat(1, 3);
  const MatrixXd three{{0.1}, {0.2}, {0.3}};
  EXPECT_NEAR(query_loss<double>(flat, three, 1, 0.5, RankWeighting::dcg()), -2.0 / std::log(4.0), 1e-12);
  for (int m = 1; m < 6; ++m) {
    const MatrixXd x = MatrixXd::Zero(m + 1, 1);
    EXPECT_NEAR(query_loss<double>(flat, x, 0, 0.25, RankWeighting::avg_rank()), (1.0 + m) / 0.25, 1e-12);
  }
  EXPECT_THROW(query_loss<double>(flat, three, 0, 0.0, RankWeighting::dcg()), std::invalid_argument);
  EXPECT_THROW(query_loss<double>(flat, three, 3, 1.0, RankWeighting::dcg()), std::out_of_range);
}

TEST(QueryLoss, UpperBoundsTrueRankLoss) {
  Rng rng(3);
  for (int t = 0; t < 300; ++t) {
    const MlpModel m = MlpModel::glorot(4, 5, rng.below(1000000));
    const auto rows = static_cast<Eigen::Index>(1 + rng.below(10));
    const QueryInstance q{"q", 3.0 * random_features(rng, rows, 4), std::nullopt};
    const std::size_t c = rng.below(static_cast<std::uint64_t>(rows));
    const double p = rng.uniform(0.05, 1.0);
    const double rank = static_cast<double>(mlp_system(m)(q).rank_of(c));
    for (const auto& l : {RankWeighting::dcg(), RankWeighting::avg_rank(), RankWeighting::rbp(0.5)}) {
      ASSERT_LE(l(rank) / p, query_loss(m, q, c, p, l) + 1e-12);
    }
  }
}

TEST(QueryLossGradient, ZeroWhenHingesInactive) {
  const MlpModel steep = steep_model(2);
  const MatrixXd x{{10.0, 1.0}, {-10.0, 2.0}, {-9.0, -1.0}};
  const MlpModel g = query_loss_gradient<double>(steep, x, 0, 0.3, RankWeighting::dcg());
  EXPECT_TRUE(g.pack().isZero());
}

TEST(QueryLossGradient, WeightingNodeSlope) {
  EXPECT_NEAR(RankWeighting::dcg().derivative(1.0), 1.0 / (2.0 * std::pow(std::log(2.0), 2)), 1e-15);
  EXPECT_NEAR(RankWeighting::dcg().derivative(1.0), 1.0407, 1e-4);
}

double relative_error(const VectorXd& a, const VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

TEST(QueryLossGradient, MatchesFiniteDifferences) {
  Rng rng(4);
  int checked = 0;
  while (checked < 100) {
    const MlpModel m = MlpModel::glorot(5, 7, rng.below(1u << 30));
    MlpModel shifted = m;
    for (auto& b : shifted.b1) b = rng.normal() * 0.5;
    shifted.b2 = rng.normal();
    const auto rows = static_cast<Eigen::Index>(2 + rng.below(8));
    const QueryInstance q{"q", 2.0 * random_features(rng, rows, 5), std::nullopt};
    const std::size_t c = rng.below(static_cast<std::uint64_t>(rows));
    if (min_kink_distance(shifted, q, c) <= 1e-3) continue;
    const double p = rng.uniform(0.05, 1.0);
    for (const auto& l : {RankWeighting::dcg(), RankWeighting::avg_rank(), RankWeighting::rbp(0.8)}) {
      const VectorXd analytic = query_loss_gradient(shifted, q, c, p, l).pack();
      const VectorXd numeric = finite_difference_gradient<double>(shifted, q.features, c, p, l, 1e-5);
      ASSERT_LT(relative_error(analytic, numeric), 1e-4) << l.name();
    }
    ++checked;
  }
}

TEST(QueryLoss, FrozenHiddenLayerMatchesLinearObjective) {
  Rng rng(5);
  for (int t = 0; t < 30; ++t) {
    MlpModel m = MlpModel::glorot(4, 6, rng.below(1u << 30));
    m.b2 = rng.normal();
    const auto rows = static_cast<Eigen::Index>(2 + rng.below(6));
    const MatrixXd x = random_features(rng, rows, 4);
    const std::size_t c = rng.below(static_cast<std::uint64_t>(rows));
    const double p = rng.uniform(0.1, 1.0);

    Dataset hidden;
    hidden.feature_dim = 6;
    hidden.queries.push_back({"h", hidden_activations<double>(m, x), std::nullopt});
    ClickLog log;
    std::vector<std::size_t> order(static_cast<std::size_t>(rows));
    std::iota(order.begin(), order.end(), 0);
    log.records.push_back({0, c, Ranking(order), p});
    const LinearModel head(m.w2);
    for (const auto& l : {RankWeighting::dcg(), RankWeighting::avg_rank()}) {
      const double linear_term = propdcg_objective(head, log, hidden, 1.0, l) - 0.5 * m.w2.squaredNorm();
      EXPECT_NEAR(query_loss<double>(m, x, c, p, l), linear_term, 1e-9);
    }
  }
}

TEST(Adam, ZeroRateLeavesParameters) {
  SgdConfig cfg;
  VectorXd theta{{1.0, -2.0, 3.0}};
  const VectorXd start = theta;
  AdamState st;
  adam_step(theta, VectorXd{{0.5, 0.1, -4.0}}, st, 0.0, cfg);
  EXPECT_EQ(theta, start);
}

TEST(Adam, PureDecayShrinksGeometrically) {
  SgdConfig cfg;
  cfg.weight_decay = 0.1;
  const double lr = 0.5;
  VectorXd theta{{1.0, -2.0, 3.0}};
  const VectorXd start = theta;
  AdamState st;
  for (int k = 1; k <= 10; ++k) {
    adam_step(theta, VectorXd::Zero(3), st, lr, cfg);
    EXPECT_LT((theta - start * std::pow(1.0 - lr * cfg.weight_decay, k)).norm(), 1e-14);
  }
}

TEST(Adam, FirstStepMovesByRate) {
  SgdConfig cfg;
  cfg.weight_decay = 0.0;
  VectorXd theta{{0.0, 0.0}};
  AdamState st;
  adam_step(theta, VectorXd{{3.0, -0.01}}, st, 0.1, cfg);
  EXPECT_NEAR(theta[0], -0.1, 1e-8);
  EXPECT_NEAR(theta[1], 0.1, 1e-5);
}

TEST(SgdConfig, ScheduleAndValidation) {
  SgdConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.rate_at(1), 1e-6);
  EXPECT_DOUBLE_EQ(cfg.rate_at(300), 1e-6);
  EXPECT_NEAR(cfg.rate_at(301), 1e-7, 1e-22);
  EXPECT_NEAR(cfg.rate_at(500), 1e-7, 1e-22);
  EXPECT_NEAR(cfg.rate_at(501), 1e-8, 1e-23);
  EXPECT_NEAR(cfg.rate_at(750), 1e-8, 1e-23);
  EXPECT_NO_THROW(cfg.validate());
  cfg.hidden = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.beta2 = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

struct SmallTask {
  SyntheticSplits splits;
  ClickLog log;
};

SmallTask small_task(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_queries = 60;
  spec.feature_dim = 5;
  spec.seed = seed;
  SmallTask t{generate_synthetic(spec), {}};
  SimulationConfig sim;
  sim.passes = 3;
  sim.seed = seed;
  t.log = simulate_clicks(t.splits.train, train_production_ranker(t.splits.train, 0.1, seed), sim);
  return t;
}

SgdConfig quick_sgd(std::uint64_t seed) {
  SgdConfig cfg;
  cfg.epochs = 25;
  cfg.hidden = 16;
  cfg.minibatch_docs = 100;
  cfg.learning_rate = 1e-2;
  cfg.decay_epochs = {15, 20};
  cfg.seed = seed;
  return cfg;
}

TEST(TrainDeep, ZeroEpochsReturnsInitialModel) {
  const SmallTask t = small_task(1);
  SgdConfig cfg = quick_sgd(1);
  cfg.epochs = 0;
  const MlpModel init = MlpModel::glorot(5, 16, 77);
  const DeepResult r = train_deep(t.log, t.splits.train, cfg, init);
  EXPECT_EQ(r.model.pack(), init.pack());
  EXPECT_TRUE(r.trace.empty());
}

TEST(TrainDeep, DeterministicGivenSeed) {
  const SmallTask t = small_task(2);
  const SgdConfig cfg = quick_sgd(5);
  const DeepResult a = train_deep(t.log, t.splits.train, cfg);
  const DeepResult b = train_deep(t.log, t.splits.train, cfg);
  EXPECT_EQ(a.model.pack(), b.model.pack());
  ASSERT_EQ(a.trace.size(), 25u);
  std::ostringstream ca, cb;
  write_deep_trace_csv(a.trace, ca);
  write_deep_trace_csv(b.trace, cb);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(ca.str().rfind("epoch,train_ips_dcg,grad_norm\n", 0), 0u);
}

TEST(TrainDeep, TrainingEstimateDecreases) {
  std::vector<double> change;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const SmallTask t = small_task(10 + seed);
    const SgdConfig cfg = quick_sgd(seed);
    const MlpModel init = MlpModel::glorot(5, cfg.hidden, derive_seed(cfg.seed, {1}));
    const double before = ips_risk(t.log, t.splits.train, mlp_system(init), cfg.train_weighting);
    const DeepResult r = train_deep(t.log, t.splits.train, cfg);
    change.push_back(r.trace.back().train_ips_dcg - before);
  }
  std::sort(change.begin(), change.end());
  EXPECT_LT(change[1], 0.0);
}

TEST(TrainDeep, DivergenceNamesEpoch) {
  const SmallTask t = small_task(3);
  SgdConfig cfg = quick_sgd(1);
  cfg.learning_rate = 1e305;
  cfg.decay_epochs = {};
  try {
    train_deep(t.log, t.splits.train, cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos) << e.what();
  }
}

TEST(MlpFile, RoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "cltr_mlp_rt.txt";
  const MlpModel m = MlpModel::glorot(3, 4, 8);
  save_mlp_model(m, path.string());
  EXPECT_EQ(load_mlp_model(path.string()).pack(), m.pack());
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace cltr
