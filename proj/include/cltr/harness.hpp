#ifndef CLTR_HARNESS_HPP
#define CLTR_HARNESS_HPP

#include "cltr/click_sim.hpp"
#include "cltr/deep_propdcg.hpp"
#include "cltr/linear_ccp.hpp"
#include "cltr/synthetic.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace cltr {

enum class ExperimentKind { LearningCurve, BiasSweep, NoiseSweep, MisspecificationSweep, CcpDiagnostics, DeepVsLinear };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& name);

// Linear trainers selectable by cross-validation.
enum class LinearMethod { PropRank, PropDcg, NaivePropDcg };

std::string to_string(LinearMethod method);

struct ExperimentPlan {
  ExperimentKind kind = ExperimentKind::LearningCurve;
  // Meaning depends on kind: pass multiplier (learning_curve, deep_vs_linear),
  // eta (bias_sweep), eps_minus (noise_sweep), assumed eta (misspecification_sweep),
  // C (ccp_diagnostics).
  std::vector<double> grid{1.0};
  int runs = 3;
  // Subset of {proprank, propdcg, naive_propdcg, deep_propdcg}.
  std::vector<std::string> models{"proprank", "propdcg"};
  std::vector<double> c_grid{1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
  SimulationConfig simulation;  // seed is ignored; per-run seeds are derived
  TrainConfig train;
  SgdConfig sgd;
  double production_fraction = 0.01;
  double production_c = 1.0;
  std::uint64_t master_seed = 0;
  int threads = 1;

  void validate() const;
};

struct CellResult {
  std::size_t grid_index = 0;
  double grid_value = 0.0;
  int run = 0;
  std::string model;
  bool ok = true;
  std::string error;
  std::map<std::string, double> metrics;
  double wall_time_s = 0.0;

  friend bool operator==(const CellResult&, const CellResult&) = default;
};

struct RunReport {
  std::string experiment;
  std::vector<CellResult> cells;

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

struct CvResult {
  double chosen_c = 0.0;
  std::vector<double> c_values;          // sorted, deduplicated
  std::vector<double> validation_risk;   // IPS DCG (base 2) risk per C; NaN when training failed
  LinearModel model;
  int ccp_iterations = 0;
};

// Trains one model per C on `train_log` and keeps the C with the lowest IPS
// estimate of DCG risk on `val_log`; ties go to the smaller C.
CvResult cross_validate_c(const ClickLog& train_log, const Dataset& train, const ClickLog& val_log,
                          const Dataset& validation, const std::vector<double>& c_grid, LinearMethod method,
                          const TrainConfig& base);

// Mean over labelled queries of sum_rel 1/log2(1 + rank) (higher is better).
double mean_dcg(const Dataset& data, const RankingSystem& system);
// Mean over labelled queries of the sum of relevant ranks (lower is better).
double mean_avg_rank(const Dataset& data, const RankingSystem& system);

// Runs every (grid point, run) cell; a failed cell is recorded and the rest continue.
// Besides plan.models each cell reports "production", "skyline" (full-information
// PropDCG) and "skyline_rank" (full-information PropRank).
// Data, production ranker and click draws depend on (master seed, experiment, run)
// only, so grid points within a run share random numbers.
RunReport run_experiment(const ExperimentPlan& plan, const SyntheticSpec& spec);

// Long CSV: experiment,grid_value,run,model,metric,value. Failed cells get metric "failed".
void write_report_csv(const RunReport& report, std::ostream& out);

nlohmann::json report_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);

struct SummaryCell {
  double grid_value = 0.0;
  std::string model;
  std::string metric;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single run
  std::size_t n = 0;
};

std::vector<SummaryCell> summarize(const RunReport& report);
nlohmann::json summary_to_json(const RunReport& report);

// Median over runs of one metric for (grid_value, model).
double median_metric(const RunReport& report, double grid_value, const std::string& model, const std::string& metric);

// Config sections: "synthetic", "simulation", "train", "sgd", "plan". Missing keys keep defaults.
struct ExperimentConfig {
  SyntheticSpec synthetic;
  SimulationConfig simulation;
  TrainConfig train;
  SgdConfig sgd;
  ExperimentPlan plan;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace cltr

#endif  // CLTR_HARNESS_HPP
