#ifndef CLTR_LINEAR_CCP_HPP
#define CLTR_LINEAR_CCP_HPP

#include "cltr/core.hpp"
#include "cltr/metrics.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cltr {

struct InnerSolverConfig {
  int max_epochs = 2000;
  // Stop once the duality gap is below tol * primal objective.
  double tol = 1e-6;
};

struct TrainConfig {
  double C = 1.0;
  int max_ccp_iters = 20;
  double ccp_tol = 1e-4;
  InnerSolverConfig inner;
  std::uint64_t seed = 0;
  // Weighting optimized by the CCP trainer; must be concave and increasing.
  RankWeighting train_weighting = RankWeighting::dcg();
  std::optional<double> propensity_clip;

  void validate() const;
};

// Hinge slacks xi_y = max(1 - (f(clicked) - f(y)), 0) for every y != clicked, in candidate order.
std::vector<double> hinge_slacks(const LinearModel& model, const QueryInstance& query, std::size_t clicked);

// Flattened (click, other candidate) pairs of a click log: the constraint set
// shared by every CCP subproblem.
class HingeProblem {
 public:
  HingeProblem(const ClickLog& log, const Dataset& data);

  std::size_t num_clicks() const { return clicks_.size(); }
  std::size_t num_pairs() const { return pair_click_.size(); }
  std::size_t dim() const { return dim_; }

  // Sum of hinge slacks per click at model w.
  std::vector<double> slack_sums(const LinearModel& model) const;

 private:
  friend class DualCoordinateSolver;

  struct Click {
    const QueryInstance* query;
    std::size_t clicked;
    std::size_t first_pair;
    std::size_t num_pairs;
  };

  std::vector<Click> clicks_;
  std::vector<std::size_t> pair_click_;
  MatrixXd diffs_;  // row j: phi(clicked) - phi(other) of pair j
  std::vector<double> pair_sqnorm_;
  std::size_t dim_ = 0;

  double margin(const VectorXd& w, std::size_t pair) const {
    return diffs_.row(static_cast<Eigen::Index>(pair)).dot(w);
  }
  void add_scaled(VectorXd& w, std::size_t pair, double scale) const {
    w.noalias() += scale * diffs_.row(static_cast<Eigen::Index>(pair)).transpose();
  }
};

// 1/2 |w|^2 + (C/n) sum_i (1/q_i) lambda(1 + sum_y xi_iy(w)).
double propdcg_objective(const LinearModel& model, const ClickLog& log, const Dataset& data, double C,
                         const RankWeighting& lambda = RankWeighting::dcg());

// CCP surrogate linearized at per-click slack sums `expansion_sums`:
// 1/2 |w|^2 + (C/n) sum_i (1/q_i) [lambda(1+s_i) + lambda'(1+s_i) (S_i(w) - s_i)].
// Upper-bounds propdcg_objective for concave lambda and touches it where S(w) = s.
double ccp_surrogate_objective(const LinearModel& model, const ClickLog& log, const Dataset& data, double C,
                               std::span<const double> expansion_sums,
                               const RankWeighting& lambda = RankWeighting::dcg());

// q'_i = q_i (s_i + 2) ln^2(s_i + 2), the DCG (natural log) subproblem weights.
std::vector<double> ccp_qprime(std::span<const double> xi_sums, std::span<const double> propensities);
// General form q'_i = q_i / lambda'(1 + s_i).
std::vector<double> ccp_qprime(std::span<const double> xi_sums, std::span<const double> propensities,
                               const RankWeighting& lambda);

struct SubproblemResult {
  LinearModel model;
  std::vector<double> duals;  // one per (click, other) pair
  double objective = 0.0;     // primal value
  double dual_objective = 0.0;
  int epochs = 0;
  bool converged = false;
};

// Minimizes 1/2 |w|^2 + (C/n) sum_i (1/weights_i) sum_y xi_iy(w) by dual coordinate
// descent. `warm_duals` (from a previous solve on the same log) are clipped into the
// new box constraints. If the epoch budget runs out, the last iterate is returned
// with converged = false.
SubproblemResult solve_convex_subproblem(const HingeProblem& problem, std::span<const double> weights, double C,
                                         std::span<const double> warm_duals, const InnerSolverConfig& config,
                                         std::uint64_t seed);
SubproblemResult solve_convex_subproblem(const ClickLog& log, const Dataset& data, std::span<const double> weights,
                                         double C, const InnerSolverConfig& config = {}, std::uint64_t seed = 0);

// Value of the subproblem objective at an arbitrary model.
double subproblem_objective(const HingeProblem& problem, const LinearModel& model, std::span<const double> weights,
                            double C);

struct CcpIteration {
  int iteration = 0;
  double objective = 0.0;
  double subproblem_objective = 0.0;
  double qprime_min = 0.0;
  double qprime_median = 0.0;
  double qprime_max = 0.0;
  double snips_dcg = 0.0;  // training SNIPS estimate of DCG loss (base 2)
  int inner_epochs = 0;
  bool inner_converged = true;
};

struct CcpTrace {
  double initial_objective = 0.0;
  double initial_snips_dcg = 0.0;
  std::vector<CcpIteration> iterations;
  bool converged = false;

  std::size_t num_iterations() const { return iterations.size(); }
  double final_objective() const {
    return iterations.empty() ? initial_objective : iterations.back().objective;
  }
};

void write_ccp_trace_csv(const CcpTrace& trace, std::ostream& out);

struct PropDcgResult {
  LinearModel model;
  CcpTrace trace;
};

// SVM PropDCG by the convex-concave procedure, starting from w = 0.
// Throws NumericError if the true objective increases across an iteration.
PropDcgResult train_propdcg(const ClickLog& log, const Dataset& data, const TrainConfig& config);

// SVM PropRank: one convex solve with the raw propensities as weights.
LinearModel train_proprank(const ClickLog& log, const Dataset& data, const TrainConfig& config);

// A click log with one record per relevant candidate, propensity 1 (full information).
ClickLog full_information_log(const Dataset& data);
ClickLog full_information_log(const Dataset& data, std::span<const std::size_t> query_subset);

// Same log with every propensity replaced by 1.
ClickLog naive_log(ClickLog log);

}  // namespace cltr

#endif  // CLTR_LINEAR_CCP_HPP
