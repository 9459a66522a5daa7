#ifndef CLTR_METRICS_HPP
#define CLTR_METRICS_HPP

#include "cltr/core.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

namespace cltr {

// Per-rank weighting lambda(r) of an additive rank metric, expressed as a loss
// (lower is better): AvgRank r, DCG -1/log_b(1+r), Prec@k -1[r<=k]/k, RBP -(1-p)p^r.
struct RankWeighting {
  enum class Kind { AvgRank, DCG, PrecAtK, RBP };

  Kind kind = Kind::AvgRank;
  int k = 10;                           // PrecAtK
  double p = 0.8;                       // RBP
  double log_base = std::numbers::e;    // DCG

  static RankWeighting avg_rank() { return {}; }
  static RankWeighting dcg(double base = std::numbers::e) {
    RankWeighting w;
    w.kind = Kind::DCG;
    w.log_base = base;
    return w;
  }
  static RankWeighting prec_at(int k) {
    RankWeighting w;
    w.kind = Kind::PrecAtK;
    w.k = k;
    return w;
  }
  static RankWeighting rbp(double p) {
    RankWeighting w;
    w.kind = Kind::RBP;
    w.p = p;
    return w;
  }

  // Throws std::invalid_argument on bad parameters.
  void validate() const;
  std::string name() const;

  // lambda at a real-valued rank r >= 1 (the hinge bound evaluates it off the integers).
  template <typename Scalar>
  Scalar operator()(Scalar r) const {
    using std::log;
    using std::pow;
    switch (kind) {
      case Kind::AvgRank:
        return r;
      case Kind::DCG:
        return -Scalar(log(Scalar(log_base))) / log(Scalar(1) + r);
      case Kind::PrecAtK:
        return r <= Scalar(k) ? Scalar(-1) / Scalar(k) : Scalar(0);
      case Kind::RBP:
        return -Scalar(1 - p) * pow(Scalar(p), r);
    }
    return Scalar(0);
  }

  // d lambda / d r. PrecAtK is piecewise constant, so 0.
  template <typename Scalar>
  Scalar derivative(Scalar r) const {
    using std::log;
    using std::pow;
    switch (kind) {
      case Kind::AvgRank:
        return Scalar(1);
      case Kind::DCG: {
        const Scalar l = log(Scalar(1) + r);
        return Scalar(log(Scalar(log_base))) / ((Scalar(1) + r) * l * l);
      }
      case Kind::PrecAtK:
        return Scalar(0);
      case Kind::RBP:
        return -Scalar(1 - p) * pow(Scalar(p), r) * Scalar(log(Scalar(p)));
    }
    return Scalar(0);
  }
};

// lambda(rank) for an integer rank; rank < 1 is an error.
double weight(const RankWeighting& lambda, long rank);

// Parses "avgrank", "dcg", "dcg2", "prec@5", "rbp0.8".
RankWeighting parse_weighting(const std::string& spec);

// One logged click: the query (index into the dataset), the clicked candidate,
// the ranking it was presented in, and the recorded propensity.
struct ClickRecord {
  std::size_t query = 0;
  std::size_t clicked = 0;
  Ranking presented;
  double propensity = 1.0;

  friend bool operator==(const ClickRecord&, const ClickRecord&) = default;
};

struct ClickLog {
  std::vector<ClickRecord> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

// Throws DataError if a record does not resolve against `data` or has q outside (0,1].
void validate_log(const ClickLog& log, const Dataset& data);

// Floors every propensity at tau.
ClickLog clip_propensities(ClickLog log, double tau);

// Any ranker: maps a query to a ranking.
using RankingSystem = std::function<Ranking(const QueryInstance&)>;
RankingSystem linear_system(const LinearModel& model);

// sum_y lambda(rank(y)) * rel(y).
double full_info_loss(const Ranking& ranking, std::span<const int> relevances, const RankWeighting& lambda);

// sum over clicks of lambda(rank of clicked doc in `ranking`) / q.
// All clicks must belong to the same query.
double ips_loss(const Ranking& ranking, std::span<const ClickRecord> clicks, const RankWeighting& lambda);

// (1/n) sum_i lambda(rank(y_i | S(x_i))) / q_i, one term per click.
double ips_risk(const ClickLog& log, const Dataset& data, const RankingSystem& system,
                const RankWeighting& lambda);

// Self-normalized variant: divides by sum_i 1/q_i instead of n.
double snips_risk(const ClickLog& log, const Dataset& data, const RankingSystem& system,
                  const RankWeighting& lambda);

// Exact expectation of the IPS loss over all 2^|Y| observation vectors, where
// candidate y is observed with probability propensity_fn(rank of y in `presented`)
// and relevance is revealed exactly on observation. Test-scale oracle: |Y| <= 12.
double expected_ips_oracle(const QueryInstance& query, const Ranking& presented, const Ranking& eval_ranking,
                           const std::function<double(std::size_t)>& propensity_fn,
                           const RankWeighting& lambda);

// Average full-information loss of `system` over queries that have relevances.
double mean_full_info_loss(const Dataset& data, const RankingSystem& system, const RankWeighting& lambda);

}  // namespace cltr

#endif  // CLTR_METRICS_HPP
