#include "cltr/harness.hpp"

#include "cltr/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <thread>

namespace cltr {

using nlohmann::json;

namespace {

constexpr std::pair<ExperimentKind, const char*> kKindNames[] = {
    {ExperimentKind::LearningCurve, "learning_curve"},
    {ExperimentKind::BiasSweep, "bias_sweep"},
    {ExperimentKind::NoiseSweep, "noise_sweep"},
    {ExperimentKind::MisspecificationSweep, "misspecification_sweep"},
    {ExperimentKind::CcpDiagnostics, "ccp_diagnostics"},
    {ExperimentKind::DeepVsLinear, "deep_vs_linear"},
};

const std::set<std::string> kModels{"proprank", "propdcg", "naive_propdcg", "deep_propdcg"};

}  // namespace

std::string to_string(ExperimentKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (const auto& [k, n] : kKindNames) {
    if (name == n) return k;
  }
  throw std::invalid_argument("unknown experiment kind '" + name + "'");
}

std::string to_string(LinearMethod method) {
  switch (method) {
    case LinearMethod::PropRank:
      return "proprank";
    case LinearMethod::PropDcg:
      return "propdcg";
    case LinearMethod::NaivePropDcg:
      return "naive_propdcg";
  }
  return "unknown";
}

void ExperimentPlan::validate() const {
  if (grid.empty()) throw std::invalid_argument("experiment grid is empty");
  if (models.empty()) throw std::invalid_argument("experiment model set is empty");
  for (const auto& m : models) {
    if (!kModels.count(m)) throw std::invalid_argument("unknown model '" + m + "'");
  }
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  if (c_grid.empty()) throw std::invalid_argument("C grid is empty");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  if (kind == ExperimentKind::LearningCurve || kind == ExperimentKind::DeepVsLinear) {
    for (double g : grid) {
      if (!(g > 0.0)) throw std::invalid_argument("pass multipliers must be > 0");
    }
  }
  simulation.validate();
  train.validate();
  sgd.validate();
}

double mean_dcg(const Dataset& data, const RankingSystem& system) {
  return -mean_full_info_loss(data, system, RankWeighting::dcg(2.0));
}

double mean_avg_rank(const Dataset& data, const RankingSystem& system) {
  return mean_full_info_loss(data, system, RankWeighting::avg_rank());
}

namespace {

struct TrainedLinear {
  LinearModel model;
  int ccp_iterations = 0;
};

TrainedLinear train_linear(const ClickLog& log, const Dataset& data, LinearMethod method, const TrainConfig& config) {
  switch (method) {
    case LinearMethod::PropRank:
      return {train_proprank(log, data, config), 1};
    case LinearMethod::PropDcg: {
      auto r = train_propdcg(log, data, config);
      return {std::move(r.model), static_cast<int>(r.trace.num_iterations())};
    }
    case LinearMethod::NaivePropDcg: {
      auto r = train_propdcg(naive_log(log), data, config);
      return {std::move(r.model), static_cast<int>(r.trace.num_iterations())};
    }
  }
  throw std::logic_error("unhandled method");
}

}  // namespace

CvResult cross_validate_c(const ClickLog& train_log, const Dataset& train, const ClickLog& val_log,
                          const Dataset& validation, const std::vector<double>& c_grid, LinearMethod method,
                          const TrainConfig& base) {
  if (c_grid.empty()) throw std::invalid_argument("cross_validate_c: empty C grid");
  if (val_log.empty()) throw std::invalid_argument("cross_validate_c: empty validation log");
  std::vector<double> cs(c_grid);
  std::sort(cs.begin(), cs.end());
  cs.erase(std::unique(cs.begin(), cs.end()), cs.end());

  const ClickLog scored_val = method == LinearMethod::NaivePropDcg ? naive_log(val_log) : val_log;
  CvResult result;
  result.c_values = cs;
  double best = std::numeric_limits<double>::infinity();
  std::string last_error;
  for (double c : cs) {
    TrainConfig config = base;
    config.C = c;
    double risk = std::numeric_limits<double>::quiet_NaN();
    try {
      TrainedLinear trained = train_linear(train_log, train, method, config);
      risk = ips_risk(scored_val, validation, linear_system(trained.model), RankWeighting::dcg(2.0));
      if (risk < best) {
        best = risk;
        result.chosen_c = c;
        result.model = std::move(trained.model);
        result.ccp_iterations = trained.ccp_iterations;
      }
    } catch (const std::exception& e) {
      last_error = e.what();
    }
    result.validation_risk.push_back(risk);
  }
  if (!std::isfinite(best)) throw std::runtime_error("cross_validate_c: every C failed: " + last_error);
  return result;
}

namespace {

struct CellContext {
  const ExperimentPlan& plan;
  SyntheticSplits splits;
  LinearModel production;
  ClickLog train_log;
  ClickLog val_log;
  SimulationConfig sim;
};

SimulationConfig simulation_for(const ExperimentPlan& plan, double g) {
  SimulationConfig sim = plan.simulation;
  switch (plan.kind) {
    case ExperimentKind::LearningCurve:
    case ExperimentKind::DeepVsLinear:
      sim.passes = std::max(1, static_cast<int>(std::lround(plan.simulation.passes * g)));
      break;
    case ExperimentKind::BiasSweep:
      sim.eta = g;
      sim.assumed_eta = g;
      break;
    case ExperimentKind::NoiseSweep:
      sim.eps_minus = g;
      break;
    case ExperimentKind::MisspecificationSweep:
      sim.assumed_eta = g;
      break;
    case ExperimentKind::CcpDiagnostics:
      break;
  }
  return sim;
}

void add_test_metrics(CellResult& cell, const CellContext& ctx, const RankingSystem& system) {
  cell.metrics["test_dcg"] = mean_dcg(ctx.splits.test, system);
  cell.metrics["test_avg_rank"] = mean_avg_rank(ctx.splits.test, system);
  if (!ctx.val_log.empty()) {
    cell.metrics["val_ips_dcg"] = ips_risk(ctx.val_log, ctx.splits.validation, system, RankWeighting::dcg(2.0));
  }
}

CellResult run_model(const CellContext& ctx, const std::string& model, std::uint64_t seed, double grid_value) {
  const ExperimentPlan& plan = ctx.plan;
  CellResult cell;
  cell.model = model;
  TrainConfig train = plan.train;
  train.seed = seed;

  if (model == "production") {
    add_test_metrics(cell, ctx, linear_system(ctx.production));
    return cell;
  }
  if (model == "skyline" || model == "skyline_rank") {
    const ClickLog full_train = full_information_log(ctx.splits.train);
    const ClickLog full_val = full_information_log(ctx.splits.validation);
    const CvResult cv =
        cross_validate_c(full_train, ctx.splits.train, full_val, ctx.splits.validation, plan.c_grid,
                         model == "skyline" ? LinearMethod::PropDcg : LinearMethod::PropRank, train);
    add_test_metrics(cell, ctx, linear_system(cv.model));
    cell.metrics["chosen_c"] = cv.chosen_c;
    return cell;
  }
  cell.metrics["train_clicks"] = static_cast<double>(ctx.train_log.size());
  if (ctx.train_log.empty()) throw std::runtime_error("no training clicks");
  if (model == "deep_propdcg") {
    SgdConfig sgd = plan.sgd;
    sgd.seed = seed;
    const DeepResult deep = train_deep(ctx.train_log, ctx.splits.train, sgd);
    add_test_metrics(cell, ctx, mlp_system(deep.model));
    if (!deep.trace.empty()) cell.metrics["train_ips_dcg"] = deep.trace.back().train_ips_dcg;
    return cell;
  }

  const LinearMethod method = model == "proprank"  ? LinearMethod::PropRank
                              : model == "propdcg" ? LinearMethod::PropDcg
                                                   : LinearMethod::NaivePropDcg;
  if (plan.kind == ExperimentKind::CcpDiagnostics) {
    train.C = grid_value;
    const ClickLog log = method == LinearMethod::NaivePropDcg ? naive_log(ctx.train_log) : ctx.train_log;
    if (method == LinearMethod::PropRank) {
      add_test_metrics(cell, ctx, linear_system(train_proprank(log, ctx.splits.train, train)));
      return cell;
    }
    const PropDcgResult r = train_propdcg(log, ctx.splits.train, train);
    add_test_metrics(cell, ctx, linear_system(r.model));
    cell.metrics["ccp_iterations"] = static_cast<double>(r.trace.num_iterations());
    cell.metrics["ccp_converged"] = r.trace.converged ? 1.0 : 0.0;
    cell.metrics["initial_objective"] = r.trace.initial_objective;
    cell.metrics["final_objective"] = r.trace.final_objective();
    cell.metrics["train_snips_dcg"] = r.trace.iterations.empty() ? r.trace.initial_snips_dcg
                                                                 : r.trace.iterations.back().snips_dcg;
    return cell;
  }

  const CvResult cv = cross_validate_c(ctx.train_log, ctx.splits.train, ctx.val_log, ctx.splits.validation,
                                       plan.c_grid, method, train);
  add_test_metrics(cell, ctx, linear_system(cv.model));
  cell.metrics["chosen_c"] = cv.chosen_c;
  if (method != LinearMethod::PropRank) cell.metrics["ccp_iterations"] = cv.ccp_iterations;
  return cell;
}

std::uint64_t experiment_tag(ExperimentKind kind) { return static_cast<std::uint64_t>(kind) + 1; }

// All models of one (grid point, run).
std::vector<CellResult> run_cell(const ExperimentPlan& plan, const SyntheticSpec& spec, std::size_t grid_index,
                                 int run) {
  const double g = plan.grid[grid_index];
  const auto r = static_cast<std::uint64_t>(run);
  const std::uint64_t tag = experiment_tag(plan.kind);

  std::vector<std::string> models{"production", "skyline", "skyline_rank"};
  models.insert(models.end(), plan.models.begin(), plan.models.end());

  std::vector<CellResult> out;
  auto finish = [&](CellResult cell) {
    cell.grid_index = grid_index;
    cell.grid_value = g;
    cell.run = run;
    out.push_back(std::move(cell));
  };

  std::optional<CellContext> ctx;
  try {
    SyntheticSpec run_spec = spec;
    run_spec.seed = derive_seed(plan.master_seed, {r, 0});
    CellContext c{plan, generate_synthetic(run_spec), {}, {}, {}, simulation_for(plan, g)};
    c.production =
        train_production_ranker(c.splits.train, plan.production_fraction, derive_seed(plan.master_seed, {r, 1}),
                                plan.production_c);
    SimulationConfig sim = c.sim;
    sim.seed = derive_seed(plan.master_seed, {tag, r, 2});
    c.train_log = simulate_clicks(c.splits.train, c.production, sim);
    sim.seed = derive_seed(plan.master_seed, {tag, r, 3});
    c.val_log = simulate_clicks(c.splits.validation, c.production, sim);
    ctx.emplace(std::move(c));
  } catch (const std::exception& e) {
    for (const auto& m : models) {
      CellResult cell;
      cell.model = m;
      cell.ok = false;
      cell.error = std::string("setup: ") + e.what();
      finish(std::move(cell));
    }
    return out;
  }

  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    const auto start = std::chrono::steady_clock::now();
    CellResult cell;
    try {
      cell = run_model(*ctx, models[mi], derive_seed(plan.master_seed, {tag, r, 4, mi}), g);
    } catch (const std::exception& e) {
      cell = CellResult{};
      cell.model = models[mi];
      cell.ok = false;
      cell.error = e.what();
    }
    cell.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    finish(std::move(cell));
  }
  return out;
}

}  // namespace

RunReport run_experiment(const ExperimentPlan& plan, const SyntheticSpec& spec) {
  plan.validate();
  spec.validate();
  const std::size_t num_cells = plan.grid.size() * static_cast<std::size_t>(plan.runs);
  std::vector<std::vector<CellResult>> slots(num_cells);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < num_cells; i = next++) {
      slots[i] = run_cell(plan, spec, i / static_cast<std::size_t>(plan.runs),
                          static_cast<int>(i % static_cast<std::size_t>(plan.runs)));
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(plan.threads), num_cells);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  }

  RunReport report;
  report.experiment = to_string(plan.kind);
  for (auto& slot : slots) {
    for (auto& cell : slot) report.cells.push_back(std::move(cell));
  }
  return report;
}

}  // namespace cltr
