#include "cltr/linear_ccp.hpp"

#include "cltr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace cltr {

void TrainConfig::validate() const {
  if (!(C > 0.0)) throw std::invalid_argument("C must be > 0");
  if (max_ccp_iters < 1) throw std::invalid_argument("max_ccp_iters must be >= 1");
  if (!(ccp_tol > 0.0)) throw std::invalid_argument("ccp_tol must be > 0");
  if (inner.max_epochs < 1 || !(inner.tol > 0.0)) throw std::invalid_argument("bad inner solver budget");
  if (train_weighting.kind == RankWeighting::Kind::PrecAtK) {
    throw std::invalid_argument("Prec@k has no usable derivative for training");
  }
  train_weighting.validate();
  if (propensity_clip && !(*propensity_clip > 0.0 && *propensity_clip <= 1.0)) {
    throw std::invalid_argument("propensity clip must be in (0,1]");
  }
}

std::vector<double> hinge_slacks(const LinearModel& model, const QueryInstance& query, std::size_t clicked) {
  if (clicked >= query.num_candidates()) throw std::out_of_range("hinge_slacks: clicked index out of range");
  const VectorXd scores = score_query(model, query);
  std::vector<double> xi;
  xi.reserve(query.num_candidates() - 1);
  for (std::size_t y = 0; y < query.num_candidates(); ++y) {
    if (y == clicked) continue;
    const auto yi = static_cast<Eigen::Index>(y);
    const auto ci = static_cast<Eigen::Index>(clicked);
    xi.push_back(std::max(1.0 - (scores[ci] - scores[yi]), 0.0));
  }
  return xi;
}

HingeProblem::HingeProblem(const ClickLog& log, const Dataset& data) : dim_(data.feature_dim) {
  validate_log(log, data);
  std::size_t total_pairs = 0;
  for (const auto& r : log.records) total_pairs += data.queries[r.query].num_candidates() - 1;
  diffs_.resize(static_cast<Eigen::Index>(total_pairs), static_cast<Eigen::Index>(dim_));
  pair_click_.reserve(total_pairs);
  pair_sqnorm_.reserve(total_pairs);
  clicks_.reserve(log.size());
  for (const auto& r : log.records) {
    const QueryInstance& q = data.queries[r.query];
    clicks_.push_back({&q, r.clicked, pair_click_.size(), q.num_candidates() - 1});
    const auto xc = q.features.row(static_cast<Eigen::Index>(r.clicked));
    for (std::size_t y = 0; y < q.num_candidates(); ++y) {
      if (y == r.clicked) continue;
      const auto j = static_cast<Eigen::Index>(pair_click_.size());
      diffs_.row(j) = xc - q.features.row(static_cast<Eigen::Index>(y));
      pair_sqnorm_.push_back(diffs_.row(j).squaredNorm());
      pair_click_.push_back(clicks_.size() - 1);
    }
  }
}

std::vector<double> HingeProblem::slack_sums(const LinearModel& model) const {
  if (model.dim() != dim_) throw std::invalid_argument("slack_sums: model dimension mismatch");
  std::vector<double> sums(clicks_.size(), 0.0);
  for (std::size_t i = 0; i < clicks_.size(); ++i) {
    const Click& c = clicks_[i];
    const VectorXd scores = c.query->features * model.w;
    const double sc = scores[static_cast<Eigen::Index>(c.clicked)];
    double s = 0.0;
    for (Eigen::Index y = 0; y < scores.size(); ++y) {
      if (static_cast<std::size_t>(y) == c.clicked) continue;
      s += std::max(1.0 - (sc - scores[y]), 0.0);
    }
    sums[i] = s;
  }
  return sums;
}

namespace {

std::vector<double> propensities_of(const ClickLog& log) {
  std::vector<double> q;
  q.reserve(log.size());
  for (const auto& r : log.records) q.push_back(r.propensity);
  return q;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

double objective_from_sums(const LinearModel& model, std::span<const double> sums, std::span<const double> q,
                           double C, const RankWeighting& lambda) {
  double risk = 0.0;
  for (std::size_t i = 0; i < sums.size(); ++i) risk += lambda(1.0 + sums[i]) / q[i];
  const double n = static_cast<double>(sums.size());
  return 0.5 * model.w.squaredNorm() + (sums.empty() ? 0.0 : C / n * risk);
}

}  // namespace

double propdcg_objective(const LinearModel& model, const ClickLog& log, const Dataset& data, double C,
                         const RankWeighting& lambda) {
  const HingeProblem problem(log, data);
  return objective_from_sums(model, problem.slack_sums(model), propensities_of(log), C, lambda);
}

double ccp_surrogate_objective(const LinearModel& model, const ClickLog& log, const Dataset& data, double C,
                               std::span<const double> expansion_sums, const RankWeighting& lambda) {
  const HingeProblem problem(log, data);
  if (expansion_sums.size() != problem.num_clicks()) {
    throw std::invalid_argument("ccp_surrogate_objective: one expansion sum per click required");
  }
  const std::vector<double> sums = problem.slack_sums(model);
  double risk = 0.0;
  for (std::size_t i = 0; i < sums.size(); ++i) {
    const double s = expansion_sums[i];
    risk += (lambda(1.0 + s) + lambda.derivative(1.0 + s) * (sums[i] - s)) / log.records[i].propensity;
  }
  const double n = static_cast<double>(sums.size());
  return 0.5 * model.w.squaredNorm() + (sums.empty() ? 0.0 : C / n * risk);
}

std::vector<double> ccp_qprime(std::span<const double> xi_sums, std::span<const double> propensities) {
  if (xi_sums.size() != propensities.size()) throw std::invalid_argument("ccp_qprime: size mismatch");
  std::vector<double> out(xi_sums.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = xi_sums[i] + 2.0;
    const double l = std::log(t);
    out[i] = propensities[i] * t * l * l;
  }
  return out;
}

std::vector<double> ccp_qprime(std::span<const double> xi_sums, std::span<const double> propensities,
                               const RankWeighting& lambda) {
  if (xi_sums.size() != propensities.size()) throw std::invalid_argument("ccp_qprime: size mismatch");
  std::vector<double> out(xi_sums.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double slope = lambda.derivative(1.0 + xi_sums[i]);
    if (!(slope > 0.0)) throw NumericError("ccp_qprime: weighting is flat at slack sum " + std::to_string(xi_sums[i]));
    out[i] = propensities[i] / slope;
  }
  return out;
}

// Dual coordinate descent for min_w 1/2|w|^2 + sum_j c_j max(0, 1 - w.d_j).
class DualCoordinateSolver {
 public:
  DualCoordinateSolver(const HingeProblem& problem, std::vector<double> box)
      : problem_(problem), box_(std::move(box)) {}

  SubproblemResult solve(std::span<const double> warm, const InnerSolverConfig& config, std::uint64_t seed) {
    const std::size_t m = problem_.num_pairs();
    std::vector<double> alpha(m, 0.0);
    if (!warm.empty()) {
      if (warm.size() != m) throw std::invalid_argument("warm-start duals do not match the problem");
      for (std::size_t j = 0; j < m; ++j) alpha[j] = std::clamp(warm[j], 0.0, upper(j));
    }
    VectorXd w = VectorXd::Zero(static_cast<Eigen::Index>(problem_.dim()));
    for (std::size_t j = 0; j < m; ++j) {
      if (alpha[j] != 0.0) problem_.add_scaled(w, j, alpha[j]);
    }

    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);

    SubproblemResult result;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
      rng.shuffle(perm);
      for (std::size_t j : perm) {
        const double qjj = problem_.pair_sqnorm_[j];
        const double c = upper(j);
        if (qjj == 0.0) {
          // Identical feature vectors: the hinge is 1 for every w.
          alpha[j] = c;
          continue;
        }
        const double grad = problem_.margin(w, j) - 1.0;
        const double next = std::clamp(alpha[j] - grad / qjj, 0.0, c);
        if (next != alpha[j]) {
          problem_.add_scaled(w, j, next - alpha[j]);
          alpha[j] = next;
        }
      }
      result.epochs = epoch;
      const auto [primal, dual] = objectives(w, alpha);
      result.objective = primal;
      result.dual_objective = dual;
      if (primal - dual <= config.tol * std::max(primal, 1e-12)) {
        result.converged = true;
        break;
      }
    }
    result.model = LinearModel(std::move(w));
    result.duals = std::move(alpha);
    return result;
  }

 private:
  double upper(std::size_t pair) const { return box_[problem_.pair_click_[pair]]; }

  std::pair<double, double> objectives(const VectorXd& w, std::span<const double> alpha) const {
    const double half_sq = 0.5 * w.squaredNorm();
    double hinge = 0.0;
    double alpha_sum = 0.0;
    for (std::size_t j = 0; j < alpha.size(); ++j) {
      hinge += upper(j) * std::max(0.0, 1.0 - problem_.margin(w, j));
      alpha_sum += alpha[j];
    }
    return {half_sq + hinge, alpha_sum - half_sq};
  }

  const HingeProblem& problem_;
  std::vector<double> box_;
};

namespace {

std::vector<double> box_constraints(const HingeProblem& problem, std::span<const double> weights, double C) {
  if (weights.size() != problem.num_clicks()) {
    throw std::invalid_argument("solve_convex_subproblem: one weight per click required");
  }
  if (!(C > 0.0)) throw std::invalid_argument("solve_convex_subproblem: C must be > 0");
  const double n = static_cast<double>(std::max<std::size_t>(problem.num_clicks(), 1));
  std::vector<double> box(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
      throw std::invalid_argument("solve_convex_subproblem: weights must be positive and finite");
    }
    box[i] = C / (n * weights[i]);
  }
  return box;
}

}  // namespace

SubproblemResult solve_convex_subproblem(const HingeProblem& problem, std::span<const double> weights, double C,
                                         std::span<const double> warm_duals, const InnerSolverConfig& config,
                                         std::uint64_t seed) {
  DualCoordinateSolver solver(problem, box_constraints(problem, weights, C));
  return solver.solve(warm_duals, config, seed);
}

SubproblemResult solve_convex_subproblem(const ClickLog& log, const Dataset& data, std::span<const double> weights,
                                         double C, const InnerSolverConfig& config, std::uint64_t seed) {
  const HingeProblem problem(log, data);
  return solve_convex_subproblem(problem, weights, C, {}, config, seed);
}

double subproblem_objective(const HingeProblem& problem, const LinearModel& model, std::span<const double> weights,
                            double C) {
  const std::vector<double> box = box_constraints(problem, weights, C);
  const std::vector<double> sums = problem.slack_sums(model);
  double hinge = 0.0;
  for (std::size_t i = 0; i < sums.size(); ++i) hinge += box[i] * sums[i];
  return 0.5 * model.w.squaredNorm() + hinge;
}

void write_ccp_trace_csv(const CcpTrace& trace, std::ostream& out) {
  out << "iteration,objective,snips_dcg,qprime_min,qprime_median,qprime_max,inner_epochs,inner_converged\n";
  std::ostringstream row;
  row.precision(17);
  row << 0 << ',' << trace.initial_objective << ',' << trace.initial_snips_dcg << ",,,,0,1\n";
  for (const auto& it : trace.iterations) {
    row << it.iteration << ',' << it.objective << ',' << it.snips_dcg << ',' << it.qprime_min << ','
        << it.qprime_median << ',' << it.qprime_max << ',' << it.inner_epochs << ','
        << (it.inner_converged ? 1 : 0) << '\n';
  }
  out << row.str();
}

PropDcgResult train_propdcg(const ClickLog& raw_log, const Dataset& data, const TrainConfig& config) {
  config.validate();
  if (raw_log.empty()) throw std::invalid_argument("train_propdcg: empty click log");
  const ClickLog log = config.propensity_clip ? clip_propensities(raw_log, *config.propensity_clip) : raw_log;
  const HingeProblem problem(log, data);
  const std::vector<double> q = propensities_of(log);
  const RankWeighting& lambda = config.train_weighting;
  const RankWeighting report_dcg = RankWeighting::dcg(2.0);

  PropDcgResult result;
  LinearModel w = LinearModel::zeros(data.feature_dim);
  std::vector<double> sums = problem.slack_sums(w);
  double objective = objective_from_sums(w, sums, q, config.C, lambda);
  result.trace.initial_objective = objective;
  result.trace.initial_snips_dcg = snips_risk(log, data, linear_system(w), report_dcg);

  std::vector<double> duals;
  for (int k = 1; k <= config.max_ccp_iters; ++k) {
    const std::vector<double> qprime = lambda.kind == RankWeighting::Kind::DCG && lambda.log_base == std::numbers::e
                                           ? ccp_qprime(sums, q)
                                           : ccp_qprime(sums, q, lambda);
    SubproblemResult sub = solve_convex_subproblem(problem, qprime, config.C, duals, config.inner,
                                                   derive_seed(config.seed, {static_cast<std::uint64_t>(k)}));
    // The inner solve is inexact; never accept a point that is worse on the
    // surrogate than the expansion point itself.
    const double at_expansion = subproblem_objective(problem, w, qprime, config.C);
    if (sub.objective > at_expansion) {
      sub.model = w;
      sub.objective = at_expansion;
    }
    duals = std::move(sub.duals);

    const std::vector<double> next_sums = problem.slack_sums(sub.model);
    const double next_objective = objective_from_sums(sub.model, next_sums, q, config.C, lambda);
    if (!std::isfinite(next_objective)) {
      throw NumericError("train_propdcg: non-finite objective at CCP iteration " + std::to_string(k));
    }
    if (next_objective > objective + 1e-9 * std::max(1.0, std::abs(objective))) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "train_propdcg: objective increased at CCP iteration " << k << " (" << objective << " -> "
          << next_objective << "); inner solver failure";
      throw NumericError(msg.str());
    }

    CcpIteration it;
    it.iteration = k;
    it.objective = next_objective;
    it.subproblem_objective = sub.objective;
    it.qprime_min = *std::min_element(qprime.begin(), qprime.end());
    it.qprime_max = *std::max_element(qprime.begin(), qprime.end());
    it.qprime_median = median_of(qprime);
    it.snips_dcg = snips_risk(log, data, linear_system(sub.model), report_dcg);
    it.inner_epochs = sub.epochs;
    it.inner_converged = sub.converged;
    result.trace.iterations.push_back(it);

    const double decrease = objective - next_objective;
    w = std::move(sub.model);
    sums = next_sums;
    const bool done = decrease <= config.ccp_tol * std::abs(objective);
    objective = next_objective;
    if (done) {
      result.trace.converged = true;
      break;
    }
  }
  result.model = std::move(w);
  return result;
}

LinearModel train_proprank(const ClickLog& raw_log, const Dataset& data, const TrainConfig& config) {
  config.validate();
  if (raw_log.empty()) throw std::invalid_argument("train_proprank: empty click log");
  const ClickLog log = config.propensity_clip ? clip_propensities(raw_log, *config.propensity_clip) : raw_log;
  const HingeProblem problem(log, data);
  const std::vector<double> q = propensities_of(log);
  return solve_convex_subproblem(problem, q, config.C, {}, config.inner, derive_seed(config.seed, {0}))
      .model;
}

ClickLog full_information_log(const Dataset& data, std::span<const std::size_t> query_subset) {
  ClickLog log;
  for (std::size_t qi : query_subset) {
    const auto& q = data.queries.at(qi);
    if (!q.relevances) throw DataError("query '" + q.query_id + "' has no relevances");
    std::vector<std::size_t> identity(q.num_candidates());
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    const Ranking presented(std::move(identity));
    for (std::size_t y = 0; y < q.num_candidates(); ++y) {
      if ((*q.relevances)[y]) log.records.push_back({qi, y, presented, 1.0});
    }
  }
  return log;
}

ClickLog full_information_log(const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return full_information_log(data, all);
}

ClickLog naive_log(ClickLog log) {
  for (auto& r : log.records) r.propensity = 1.0;
  return log;
}

}  // namespace cltr
