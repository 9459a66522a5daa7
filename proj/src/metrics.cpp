#include "cltr/metrics.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

namespace cltr {

void RankWeighting::validate() const {
  switch (kind) {
    case Kind::AvgRank:
      break;
    case Kind::DCG:
      if (!(log_base > 1.0) || !std::isfinite(log_base)) {
        throw std::invalid_argument("DCG log base must be > 1");
      }
      break;
    case Kind::PrecAtK:
      if (k < 1) throw std::invalid_argument("Prec@k needs k >= 1");
      break;
    case Kind::RBP:
      if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("RBP needs p in (0,1)");
      break;
  }
}

std::string RankWeighting::name() const {
  std::ostringstream out;
  switch (kind) {
    case Kind::AvgRank:
      out << "avgrank";
      break;
    case Kind::DCG:
      out << "dcg";
      if (log_base != std::numbers::e) out << log_base;
      break;
    case Kind::PrecAtK:
      out << "prec@" << k;
      break;
    case Kind::RBP:
      out << "rbp" << p;
      break;
  }
  return out.str();
}

RankWeighting parse_weighting(const std::string& spec) {
  RankWeighting w;
  auto number_after = [&](std::size_t prefix) {
    const std::string tail = spec.substr(prefix);
    char* end = nullptr;
    const double v = std::strtod(tail.c_str(), &end);
    if (tail.empty() || *end != '\0') throw std::invalid_argument("bad weighting '" + spec + "'");
    return v;
  };
  if (spec == "avgrank") {
    w = RankWeighting::avg_rank();
  } else if (spec == "dcg") {
    w = RankWeighting::dcg();
  } else if (spec.rfind("dcg", 0) == 0) {
    w = RankWeighting::dcg(number_after(3));
  } else if (spec.rfind("prec@", 0) == 0) {
    w = RankWeighting::prec_at(static_cast<int>(number_after(5)));
  } else if (spec.rfind("rbp", 0) == 0) {
    w = RankWeighting::rbp(number_after(3));
  } else {
    throw std::invalid_argument("unknown weighting '" + spec + "'");
  }
  w.validate();
  return w;
}

double weight(const RankWeighting& lambda, long rank) {
  if (rank < 1) throw std::invalid_argument("weight: rank must be >= 1, got " + std::to_string(rank));
  return lambda(static_cast<double>(rank));
}

void validate_log(const ClickLog& log, const Dataset& data) {
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    const auto& r = log.records[i];
    const std::string where = "click " + std::to_string(i) + ": ";
    if (r.query >= data.size()) throw DataError(where + "query index out of range");
    const auto& q = data.queries[r.query];
    if (r.clicked >= q.num_candidates()) throw DataError(where + "clicked candidate out of range");
    if (r.presented.size() != q.num_candidates()) {
      throw DataError(where + "presented ranking size does not match candidate set");
    }
    if (!(r.propensity > 0.0 && r.propensity <= 1.0)) {
      throw DataError(where + "propensity must be in (0,1]");
    }
  }
}

ClickLog clip_propensities(ClickLog log, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("clip threshold must be in (0,1]");
  for (auto& r : log.records) r.propensity = std::max(r.propensity, tau);
  return log;
}

RankingSystem linear_system(const LinearModel& model) {
  return [model](const QueryInstance& q) { return rank_by_scores(score_query(model, q), q.query_id); };
}

double full_info_loss(const Ranking& ranking, std::span<const int> relevances, const RankWeighting& lambda) {
  if (relevances.size() != ranking.size()) {
    throw std::invalid_argument("full_info_loss: ranking and relevance sizes differ");
  }
  double loss = 0.0;
  for (std::size_t y = 0; y < relevances.size(); ++y) {
    if (relevances[y]) loss += weight(lambda, static_cast<long>(ranking.rank_of(y)));
  }
  return loss;
}

double ips_loss(const Ranking& ranking, std::span<const ClickRecord> clicks, const RankWeighting& lambda) {
  double loss = 0.0;
  for (const auto& c : clicks) {
    if (!(c.propensity > 0.0)) throw std::invalid_argument("ips_loss: propensity must be > 0");
    loss += weight(lambda, static_cast<long>(ranking.rank_of(c.clicked))) / c.propensity;
  }
  return loss;
}

namespace {

// Returns {sum lambda/q, sum 1/q}; rankings are computed once per distinct query.
std::pair<double, double> ips_sums(const ClickLog& log, const Dataset& data, const RankingSystem& system,
                                   const RankWeighting& lambda) {
  std::vector<std::optional<Ranking>> cache(data.size());
  double numerator = 0.0;
  double normalizer = 0.0;
  for (const auto& c : log.records) {
    if (c.query >= data.size()) throw DataError("click references unknown query");
    if (!(c.propensity > 0.0)) throw std::invalid_argument("propensity must be > 0");
    auto& ranking = cache[c.query];
    if (!ranking) ranking = system(data.queries[c.query]);
    numerator += weight(lambda, static_cast<long>(ranking->rank_of(c.clicked))) / c.propensity;
    normalizer += 1.0 / c.propensity;
  }
  return {numerator, normalizer};
}

}  // namespace

double ips_risk(const ClickLog& log, const Dataset& data, const RankingSystem& system, const RankWeighting& lambda) {
  if (log.empty()) throw std::invalid_argument("ips_risk: empty click log");
  return ips_sums(log, data, system, lambda).first / static_cast<double>(log.size());
}

double snips_risk(const ClickLog& log, const Dataset& data, const RankingSystem& system,
                  const RankWeighting& lambda) {
  if (log.empty()) throw std::invalid_argument("snips_risk: empty click log");
  const auto [numerator, normalizer] = ips_sums(log, data, system, lambda);
  return numerator / normalizer;
}

double expected_ips_oracle(const QueryInstance& query, const Ranking& presented, const Ranking& eval_ranking,
                           const std::function<double(std::size_t)>& propensity_fn,
                           const RankWeighting& lambda) {
  const std::size_t m = query.num_candidates();
  if (m > 12) throw std::invalid_argument("expected_ips_oracle: at most 12 candidates");
  if (!query.relevances) throw std::invalid_argument("expected_ips_oracle: relevances required");
  if (presented.size() != m || eval_ranking.size() != m) {
    throw std::invalid_argument("expected_ips_oracle: ranking size mismatch");
  }
  const auto& rel = *query.relevances;
  std::vector<double> q(m);
  for (std::size_t y = 0; y < m; ++y) q[y] = propensity_fn(presented.rank_of(y));

  double expectation = 0.0;
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    double prob = 1.0;
    std::vector<ClickRecord> clicks;
    for (std::size_t y = 0; y < m; ++y) {
      const bool observed = (mask >> y) & 1u;
      prob *= observed ? q[y] : 1.0 - q[y];
      if (observed && rel[y]) clicks.push_back({0, y, presented, q[y]});
    }
    if (prob == 0.0) continue;
    expectation += prob * ips_loss(eval_ranking, clicks, lambda);
  }
  return expectation;
}

double mean_full_info_loss(const Dataset& data, const RankingSystem& system, const RankWeighting& lambda) {
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& q : data.queries) {
    if (!q.relevances) continue;
    total += full_info_loss(system(q), *q.relevances, lambda);
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("mean_full_info_loss: no labelled queries");
  return total / static_cast<double>(counted);
}

}  // namespace cltr
