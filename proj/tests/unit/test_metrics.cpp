#include "cltr/metrics.hpp"
#include "cltr/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

namespace cltr {
namespace {

const std::vector<RankWeighting> kWeightings{RankWeighting::avg_rank(), RankWeighting::dcg(), RankWeighting::dcg(2.0),
                                             RankWeighting::prec_at(3), RankWeighting::rbp(0.8)};

Ranking random_ranking(std::size_t m, Rng& rng) {
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  return Ranking(order);
}

ClickRecord click(std::size_t query, std::size_t clicked, Ranking presented, double q) {
  return ClickRecord{query, clicked, std::move(presented), q};
}

TEST(Weight, TableValues) {
  EXPECT_DOUBLE_EQ(weight(RankWeighting::avg_rank(), 5), 5.0);
  EXPECT_DOUBLE_EQ(weight(RankWeighting::dcg(2.0), 1), -1.0);
  EXPECT_DOUBLE_EQ(weight(RankWeighting::prec_at(3), 2), -1.0 / 3.0);
  EXPECT_DOUBLE_EQ(weight(RankWeighting::prec_at(3), 4), 0.0);
  EXPECT_DOUBLE_EQ(weight(RankWeighting::rbp(0.5), 1), -0.25);
  EXPECT_NEAR(weight(RankWeighting::dcg(), 2), -1.0 / std::log(3.0), 1e-15);
  EXPECT_THROW(weight(RankWeighting::avg_rank(), 0), std::invalid_argument);
}

TEST(Weight, MonotoneNonDecreasing) {
  for (const auto& w : kWeightings) {
    for (long r = 1; r < 100; ++r) {
      ASSERT_LE(weight(w, r), weight(w, r + 1)) << w.name() << " r=" << r;
      ASSERT_TRUE(std::isfinite(weight(w, r)));
    }
  }
}

TEST(Weight, DerivativeMatchesCentralDifference) {
  for (const auto& w : kWeightings) {
    if (w.kind == RankWeighting::Kind::PrecAtK) continue;
    for (double r = 1.0; r < 30.0; r += 0.37) {
      const double h = 1e-6;
      const double fd = (w(r + h) - w(r - h)) / (2 * h);
      EXPECT_NEAR(w.derivative(r), fd, 1e-6 * std::max(1.0, std::abs(fd))) << w.name() << " r=" << r;
    }
  }
}

TEST(Weight, ParseRoundTrip) {
  EXPECT_EQ(parse_weighting("avgrank").kind, RankWeighting::Kind::AvgRank);
  EXPECT_DOUBLE_EQ(parse_weighting("dcg2").log_base, 2.0);
  EXPECT_EQ(parse_weighting("prec@5").k, 5);
  EXPECT_DOUBLE_EQ(parse_weighting("rbp0.7").p, 0.7);
  for (const auto& w : kWeightings) EXPECT_EQ(parse_weighting(w.name()).name(), w.name());
  EXPECT_THROW(parse_weighting("ndcg"), std::invalid_argument);
  EXPECT_THROW(parse_weighting("rbp1.5"), std::invalid_argument);
}

TEST(FullInfoLoss, Examples) {
  const Ranking r({1, 2, 0});
  EXPECT_DOUBLE_EQ(full_info_loss(r, std::vector<int>{0, 0, 0}, RankWeighting::dcg()), 0.0);
  // Relevant candidates 0 and 1 sit at ranks 3 and 1.
  const std::vector<int> rel{1, 1, 0};
  EXPECT_DOUBLE_EQ(full_info_loss(r, rel, RankWeighting::avg_rank()), 4.0);
  EXPECT_DOUBLE_EQ(full_info_loss(r, rel, RankWeighting::dcg(2.0)), -1.5);
  // Relevant candidates 0 and 2 sit at ranks 3 and 2.
  const std::vector<int> rel02{1, 0, 1};
  EXPECT_DOUBLE_EQ(full_info_loss(r, rel02, RankWeighting::avg_rank()), 5.0);
  EXPECT_DOUBLE_EQ(full_info_loss(r, rel02, RankWeighting::dcg(2.0)), -0.5 - 1.0 / std::log2(3.0));
}

TEST(IpsLoss, Examples) {
  const Ranking r({1, 2, 0});
  const std::vector<ClickRecord> one{click(0, 2, Ranking({0, 1, 2}), 0.5)};
  EXPECT_DOUBLE_EQ(ips_loss(r, one, RankWeighting::avg_rank()), 4.0);
  EXPECT_DOUBLE_EQ(ips_loss(r, {}, RankWeighting::avg_rank()), 0.0);
  const std::vector<ClickRecord> bad{click(0, 2, Ranking({0, 1, 2}), 0.0)};
  EXPECT_THROW(ips_loss(r, bad, RankWeighting::avg_rank()), std::invalid_argument);

  // q = 1 everywhere: plain sum over clicked docs.
  const std::vector<ClickRecord> full{click(0, 0, r, 1.0), click(0, 1, r, 1.0)};
  EXPECT_DOUBLE_EQ(ips_loss(r, full, RankWeighting::dcg(2.0)),
                   full_info_loss(r, std::vector<int>{1, 1, 0}, RankWeighting::dcg(2.0)));
}

TEST(IpsLoss, LinearInInversePropensity) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const Ranking r = random_ranking(6, rng);
    std::vector<ClickRecord> clicks, doubled;
    for (int c = 0; c < 3; ++c) {
      const double q = rng.uniform(0.05, 0.5);
      const std::size_t y = rng.below(6);
      clicks.push_back(click(0, y, r, q));
      doubled.push_back(click(0, y, r, 2 * q));
    }
    for (const auto& w : kWeightings) {
      EXPECT_NEAR(ips_loss(r, doubled, w), 0.5 * ips_loss(r, clicks, w), 1e-12);
    }
  }
}

Dataset two_query_dataset() {
  Dataset d;
  d.feature_dim = 1;
  d.queries.push_back({"a", MatrixXd{{3.0}, {1.0}, {2.0}}, std::vector<int>{1, 0, 1}});
  d.queries.push_back({"b", MatrixXd{{0.0}, {5.0}}, std::vector<int>{0, 1}});
  return d;
}

TEST(IpsRisk, Examples) {
  const Dataset d = two_query_dataset();
  const RankingSystem sys = linear_system(LinearModel(VectorXd{{1.0}}));
  ClickLog log;
  log.records.push_back(click(0, 0, Ranking({0, 1, 2}), 0.25));
  EXPECT_DOUBLE_EQ(ips_risk(log, d, sys, RankWeighting::dcg(2.0)), -4.0);

  ClickLog dup = log;
  dup.records.push_back(log.records[0]);
  EXPECT_DOUBLE_EQ(ips_risk(dup, d, sys, RankWeighting::dcg(2.0)), -4.0);

  // q = 1, one click per query: mean of per-query losses on clicked docs.
  ClickLog full;
  full.records.push_back(click(0, 2, Ranking({0, 1, 2}), 1.0));
  full.records.push_back(click(1, 1, Ranking({1, 0}), 1.0));
  EXPECT_DOUBLE_EQ(ips_risk(full, d, sys, RankWeighting::avg_rank()), (2.0 + 1.0) / 2.0);

  EXPECT_THROW(ips_risk(ClickLog{}, d, sys, RankWeighting::dcg()), std::invalid_argument);
  EXPECT_THROW(snips_risk(ClickLog{}, d, sys, RankWeighting::dcg()), std::invalid_argument);
}

TEST(SnipsRisk, Examples) {
  const Dataset d = two_query_dataset();
  const RankingSystem sys = linear_system(LinearModel(VectorXd{{1.0}}));
  // ranks under sys: query a -> candidate 0 rank 1, candidate 2 rank 2, candidate 1 rank 3.
  ClickLog log;
  log.records.push_back(click(0, 2, Ranking({0, 1, 2}), 0.5));  // lambda = 2
  log.records.push_back(click(0, 1, Ranking({0, 1, 2}), 1.0));  // lambda = 3
  const double expected = (2.0 / 0.5 + 3.0 / 1.0) / (1.0 / 0.5 + 1.0);
  EXPECT_DOUBLE_EQ(snips_risk(log, d, sys, RankWeighting::avg_rank()), expected);

  ClickLog single;
  single.records.push_back(click(0, 1, Ranking({0, 1, 2}), 0.13));
  EXPECT_NEAR(snips_risk(single, d, sys, RankWeighting::avg_rank()), 3.0, 1e-12);

  ClickLog equal_q = log;
  for (auto& r : equal_q.records) r.propensity = 1.0;
  EXPECT_NEAR(snips_risk(equal_q, d, sys, RankWeighting::dcg()), ips_risk(equal_q, d, sys, RankWeighting::dcg()),
              1e-12);
  for (auto& r : equal_q.records) r.propensity = 0.4;
  EXPECT_NEAR(snips_risk(equal_q, d, sys, RankWeighting::dcg()), 0.4 * ips_risk(equal_q, d, sys, RankWeighting::dcg()),
              1e-12);
}

// Two clicks with q = {0.5, 1} and AvgRank values {2, 4}: (2/0.5 + 4/1) / (2 + 1).
TEST(SnipsRisk, HandEvaluatedTwoClicks) {
  Dataset d;
  d.feature_dim = 1;
  d.queries.push_back({"a", MatrixXd{{4.0}, {3.0}, {2.0}, {1.0}}, std::vector<int>{0, 1, 0, 1}});
  const RankingSystem sys = linear_system(LinearModel(VectorXd{{1.0}}));
  ClickLog log;
  log.records.push_back(click(0, 1, Ranking({0, 1, 2, 3}), 0.5));
  log.records.push_back(click(0, 3, Ranking({0, 1, 2, 3}), 1.0));
  EXPECT_NEAR(snips_risk(log, d, sys, RankWeighting::avg_rank()), 8.0 / 3.0, 1e-15);
}

TEST(SnipsRisk, InvariantToPropensityScale) {
  Rng rng(8);
  const Dataset d = two_query_dataset();
  const RankingSystem sys = linear_system(LinearModel(VectorXd{{-0.5}}));
  for (int t = 0; t < 30; ++t) {
    ClickLog log;
    for (int c = 0; c < 5; ++c) {
      const std::size_t qi = rng.below(2);
      log.records.push_back(click(qi, rng.below(d.queries[qi].num_candidates()),
                                  Ranking(qi == 0 ? std::vector<std::size_t>{0, 1, 2} : std::vector<std::size_t>{0, 1}),
                                  rng.uniform(0.1, 1.0)));
    }
    const double scale = rng.uniform(0.05, 1.0);
    ClickLog scaled = log;
    for (auto& r : scaled.records) r.propensity *= scale;
    for (const auto& w : kWeightings) {
      EXPECT_NEAR(snips_risk(scaled, d, sys, w), snips_risk(log, d, sys, w), 1e-12);
    }
  }
}

// Independent oracle: enumerate observation vectors directly and average the IPS loss.
double enumerate_expected_ips(const std::vector<int>& rel, const Ranking& presented, const Ranking& eval,
                              const RankWeighting& lambda) {
  const std::size_t m = rel.size();
  double total = 0.0;
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    double prob = 1.0;
    std::vector<ClickRecord> clicks;
    for (std::size_t y = 0; y < m; ++y) {
      const double p = 1.0 / static_cast<double>(presented.rank_of(y));
      const bool seen = (mask >> y) & 1u;
      prob *= seen ? p : 1.0 - p;
      if (seen && rel[y] == 1) clicks.push_back(click(0, y, presented, p));
    }
    if (prob > 0.0) total += prob * ips_loss(eval, clicks, lambda);
  }
  return total;
}

TEST(ExpectedIpsOracle, ThreeCandidateEnumeration) {
  QueryInstance q{"a", MatrixXd::Zero(3, 1), std::vector<int>{1, 0, 1}};
  const Ranking presented({0, 1, 2});
  const auto p = [](std::size_t r) { return 1.0 / static_cast<double>(r); };
  Rng rng(2);
  for (int t = 0; t < 6; ++t) {
    const Ranking eval = random_ranking(3, rng);
    const double oracle = expected_ips_oracle(q, presented, eval, p, RankWeighting::avg_rank());
    EXPECT_NEAR(oracle, enumerate_expected_ips(*q.relevances, presented, eval, RankWeighting::avg_rank()), 1e-12);
    EXPECT_NEAR(oracle, full_info_loss(eval, *q.relevances, RankWeighting::avg_rank()), 1e-12);
  }
}

TEST(ExpectedIpsOracle, TrivialCases) {
  QueryInstance q{"a", MatrixXd::Zero(4, 1), std::vector<int>{0, 1, 1, 0}};
  const Ranking presented({3, 2, 1, 0});
  const Ranking eval({0, 2, 1, 3});
  const auto one = [](std::size_t) { return 1.0; };
  EXPECT_DOUBLE_EQ(expected_ips_oracle(q, presented, eval, one, RankWeighting::dcg()),
                   full_info_loss(eval, *q.relevances, RankWeighting::dcg()));
  q.relevances = std::vector<int>{0, 0, 0, 0};
  EXPECT_DOUBLE_EQ(expected_ips_oracle(q, presented, eval, one, RankWeighting::dcg()), 0.0);
  QueryInstance big{"b", MatrixXd::Zero(13, 1), std::vector<int>(13, 0)};
  std::vector<std::size_t> id(13);
  std::iota(id.begin(), id.end(), 0);
  EXPECT_THROW(expected_ips_oracle(big, Ranking(id), Ranking(id), one, RankWeighting::dcg()), std::invalid_argument);
}

TEST(ExpectedIpsOracle, UnbiasedOnRandomInstances) {
  Rng rng(17);
  for (int t = 0; t < 100; ++t) {
    const std::size_t m = 1 + rng.below(10);
    QueryInstance q{"r", MatrixXd::Zero(static_cast<Eigen::Index>(m), 1), std::vector<int>(m)};
    for (auto& r : *q.relevances) r = rng.bernoulli(0.5) ? 1 : 0;
    std::vector<double> prop(m);
    for (auto& p : prop) p = rng.uniform(0.05, 1.0);
    const auto fn = [&](std::size_t r) { return prop[r - 1]; };
    const Ranking presented = random_ranking(m, rng);
    const Ranking eval = random_ranking(m, rng);
    for (const auto& w : kWeightings) {
      ASSERT_NEAR(expected_ips_oracle(q, presented, eval, fn, w), full_info_loss(eval, *q.relevances, w), 1e-9)
          << w.name() << " m=" << m;
    }
  }
}

TEST(ClickLog, ValidateAndClip) {
  const Dataset d = two_query_dataset();
  ClickLog log;
  log.records.push_back(click(0, 1, Ranking({0, 1, 2}), 0.004));
  EXPECT_NO_THROW(validate_log(log, d));
  const ClickLog clipped = clip_propensities(log, 0.01);
  EXPECT_DOUBLE_EQ(clipped.records[0].propensity, 0.01);
  log.records.push_back(click(5, 0, Ranking({0}), 1.0));
  EXPECT_THROW(validate_log(log, d), DataError);
  ClickLog bad_q;
  bad_q.records.push_back(click(1, 0, Ranking({0, 1}), 1.5));
  EXPECT_THROW(validate_log(bad_q, d), DataError);
  ClickLog bad_presented;
  bad_presented.records.push_back(click(1, 0, Ranking({0, 1, 2}), 1.0));
  EXPECT_THROW(validate_log(bad_presented, d), DataError);
}

}  // namespace
}  // namespace cltr
