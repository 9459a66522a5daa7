// Command-line driver: data generation, click simulation, training, evaluation,
// experiment sweeps, gradient checks and report aggregation.

#include "cltr/click_sim.hpp"
#include "cltr/deep_propdcg.hpp"
#include "cltr/harness.hpp"
#include "cltr/linear_ccp.hpp"
#include "cltr/metrics.hpp"
#include "cltr/svmlight.hpp"
#include "cltr/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  int threads = 1;
};

cltr::ExperimentConfig load_config(const GlobalOptions& g) {
  cltr::ExperimentConfig cfg = g.config_path.empty() ? cltr::parse_experiment_config(json::object())
                                                     : cltr::load_experiment_config(g.config_path);
  if (g.seed) {
    cfg.synthetic.seed = *g.seed;
    cfg.simulation.seed = *g.seed;
    cfg.train.seed = *g.seed;
    cfg.sgd.seed = *g.seed;
    cfg.plan.master_seed = *g.seed;
  }
  cfg.plan.threads = g.threads;
  cfg.plan.simulation = cfg.simulation;
  cfg.plan.train = cfg.train;
  cfg.plan.sgd = cfg.sgd;
  return cfg;
}

fs::path out_path(const GlobalOptions& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / name;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

bool is_mlp_file(const std::string& path) {
  std::ifstream in(path);
  std::string tag;
  in >> tag;
  return tag == "mlp";
}

cltr::RankingSystem load_system(const std::string& path) {
  if (is_mlp_file(path)) return cltr::mlp_system(cltr::load_mlp_model(path));
  return cltr::linear_system(cltr::load_linear_model(path));
}

int cmd_gen_data(const GlobalOptions& g) {
  const auto cfg = load_config(g);
  const auto splits = cltr::generate_synthetic(cfg.synthetic);
  cltr::save_svmlight(splits.train, out_path(g, "train.svmlight").string());
  cltr::save_svmlight(splits.validation, out_path(g, "validation.svmlight").string());
  cltr::save_svmlight(splits.test, out_path(g, "test.svmlight").string());
  std::cout << "wrote " << splits.train.size() << '/' << splits.validation.size() << '/' << splits.test.size()
            << " train/validation/test queries to " << g.out_dir << '\n';
  return kOk;
}

struct SimulateOptions {
  std::string data;
  std::string production;
  std::string output = "clicks.jsonl";
  double fraction = 0.01;
  std::optional<double> eta, assumed_eta, eps_minus, eps_plus;
  std::optional<int> passes;
};

int cmd_simulate(const GlobalOptions& g, const SimulateOptions& o) {
  const auto cfg = load_config(g);
  cltr::SimulationConfig sim = cfg.simulation;
  if (o.eta) {
    sim.eta = *o.eta;
    if (!o.assumed_eta) sim.assumed_eta = *o.eta;
  }
  if (o.assumed_eta) sim.assumed_eta = *o.assumed_eta;
  if (o.eps_minus) sim.eps_minus = *o.eps_minus;
  if (o.eps_plus) sim.eps_plus = *o.eps_plus;
  if (o.passes) sim.passes = *o.passes;

  const cltr::Dataset data = cltr::load_svmlight(o.data);
  cltr::LinearModel production;
  if (o.production.empty()) {
    production = cltr::train_production_ranker(data, o.fraction, sim.seed, cfg.plan.production_c);
    cltr::save_linear_model(production, out_path(g, "production.model").string());
  } else {
    production = cltr::load_linear_model(o.production);
  }
  const cltr::ClickLog log = cltr::simulate_clicks(data, production, sim);
  cltr::save_click_log(out_path(g, o.output).string(), log, data, sim);
  std::cout << "simulated " << log.size() << " clicks\n";
  return kOk;
}

struct TrainOptions {
  std::string data;
  std::string clicks;
  std::string method = "propdcg";
  std::optional<double> C;
  std::string output = "model.txt";
};

int cmd_train(const GlobalOptions& g, const TrainOptions& o) {
  const auto cfg = load_config(g);
  const cltr::Dataset data = cltr::load_svmlight(o.data);
  const cltr::ClickLog log = cltr::load_click_log(o.clicks, data).log;
  cltr::TrainConfig train = cfg.train;
  if (o.C) train.C = *o.C;

  if (o.method == "deep_propdcg") {
    const auto result = cltr::train_deep(log, data, cfg.sgd);
    cltr::save_mlp_model(result.model, out_path(g, o.output).string());
    std::ofstream trace(out_path(g, "deep_trace.csv"));
    cltr::write_deep_trace_csv(result.trace, trace);
  } else if (o.method == "propdcg" || o.method == "naive_propdcg") {
    const auto result = cltr::train_propdcg(o.method == "propdcg" ? log : cltr::naive_log(log), data, train);
    cltr::save_linear_model(result.model, out_path(g, o.output).string());
    std::ofstream trace(out_path(g, "ccp_trace.csv"));
    cltr::write_ccp_trace_csv(result.trace, trace);
    std::cout << "CCP iterations: " << result.trace.num_iterations()
              << (result.trace.converged ? " (converged)" : " (iteration limit)") << '\n';
  } else if (o.method == "proprank") {
    cltr::save_linear_model(cltr::train_proprank(log, data, train), out_path(g, o.output).string());
  } else {
    throw std::invalid_argument("unknown method '" + o.method + "'");
  }
  std::cout << "wrote " << out_path(g, o.output).string() << '\n';
  return kOk;
}

struct EvaluateOptions {
  std::string data;
  std::string model;
  std::string clicks;
};

int cmd_evaluate(const GlobalOptions&, const EvaluateOptions& o) {
  const cltr::Dataset data = cltr::load_svmlight(o.data);
  const cltr::RankingSystem system = load_system(o.model);
  json out;
  out["dcg"] = cltr::mean_dcg(data, system);
  out["avg_rank"] = cltr::mean_avg_rank(data, system);
  if (!o.clicks.empty()) {
    const cltr::ClickLog log = cltr::load_click_log(o.clicks, data).log;
    out["ips_dcg_risk"] = cltr::ips_risk(log, data, system, cltr::RankWeighting::dcg(2.0));
    out["snips_dcg_risk"] = cltr::snips_risk(log, data, system, cltr::RankWeighting::dcg(2.0));
    out["clicks"] = log.size();
  }
  std::cout << out.dump(2) << '\n';
  return kOk;
}

void write_report_files(const GlobalOptions& g, const cltr::RunReport& report) {
  std::ostringstream csv;
  cltr::write_report_csv(report, csv);
  write_file(out_path(g, "results.csv"), csv.str());
  write_file(out_path(g, "report.json"), cltr::report_to_json(report).dump(2) + "\n");
  write_file(out_path(g, "summary.json"), cltr::summary_to_json(report).dump(2) + "\n");
}

int cmd_sweep(const GlobalOptions& g) {
  const auto cfg = load_config(g);
  const cltr::RunReport report = cltr::run_experiment(cfg.plan, cfg.synthetic);
  write_report_files(g, report);
  std::size_t failed = 0;
  for (const auto& c : report.cells) failed += c.ok ? 0 : 1;
  std::cout << report.cells.size() << " cells, " << failed << " failed; results in " << g.out_dir << '\n';
  return kOk;
}

struct GradcheckOptions {
  int trials = 100;
  std::size_t inputs = 5;
  std::size_t hidden = 7;
  double step = 1e-5;
  double tolerance = 1e-4;
};

int cmd_gradcheck(const GlobalOptions& g, const GradcheckOptions& o) {
  const std::uint64_t seed = g.seed.value_or(0);
  const cltr::RankWeighting lambda = cltr::RankWeighting::dcg();
  double worst = 0.0;
  int checked = 0;
  for (std::uint64_t t = 0; checked < o.trials; ++t) {
    cltr::Rng rng(cltr::derive_seed(seed, {t}));
    const auto model = cltr::MlpModel::glorot(o.inputs, o.hidden, cltr::derive_seed(seed, {t, 1}));
    cltr::QueryInstance q;
    const auto m = static_cast<Eigen::Index>(2 + rng.below(6));
    q.features.resize(m, static_cast<Eigen::Index>(o.inputs));
    for (Eigen::Index i = 0; i < q.features.size(); ++i) q.features.data()[i] = rng.normal();
    const std::size_t clicked = rng.below(static_cast<std::uint64_t>(m));
    const double propensity = rng.uniform(0.05, 1.0);
    if (cltr::min_kink_distance(model, q, clicked) <= 1e-3) continue;
    const Eigen::VectorXd analytic = cltr::query_loss_gradient(model, q, clicked, propensity, lambda).pack();
    const Eigen::VectorXd numeric =
        cltr::finite_difference_gradient<double>(model, q.features, clicked, propensity, lambda, o.step);
    const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
    worst = std::max(worst, (analytic - numeric).norm() / scale);
    ++checked;
  }
  std::cout << "checked " << checked << " networks, max relative error " << worst << '\n';
  return worst < o.tolerance ? kOk : kNumeric;
}

int cmd_report(const GlobalOptions& g, const std::string& input) {
  std::ifstream in(input);
  if (!in) throw cltr::DataError("cannot open '" + input + "'");
  cltr::RunReport report;
  try {
    report = cltr::report_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw cltr::DataError(input + ": " + e.what());
  }
  write_report_files(g, report);
  std::cout << "wrote results.csv and summary.json to " << g.out_dir << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual learning-to-rank toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed (overrides every seed in the config)");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads for sweeps")->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("gen-data", "Generate synthetic train/validation/test splits");

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate position-biased clicks");
  simulate->add_option("--data", sim.data, "Full-information SVMlight file")->required()->check(CLI::ExistingFile);
  simulate->add_option("--production", sim.production, "Production ranker model (trained if omitted)");
  simulate->add_option("--fraction", sim.fraction, "Query fraction for training the production ranker");
  simulate->add_option("--output", sim.output, "Click log file name");
  simulate->add_option("--eta", sim.eta);
  simulate->add_option("--assumed-eta", sim.assumed_eta);
  simulate->add_option("--eps-minus", sim.eps_minus);
  simulate->add_option("--eps-plus", sim.eps_plus);
  simulate->add_option("--passes", sim.passes);

  TrainOptions tr;
  auto* train = app.add_subcommand("train", "Train a ranker on a click log");
  train->add_option("--data", tr.data)->required()->check(CLI::ExistingFile);
  train->add_option("--clicks", tr.clicks)->required()->check(CLI::ExistingFile);
  train->add_option("--method", tr.method, "proprank | propdcg | naive_propdcg | deep_propdcg");
  train->add_option("--C", tr.C, "Regularization constant");
  train->add_option("--output", tr.output, "Model file name");

  EvaluateOptions ev;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a model on labelled data and optionally a click log");
  evaluate->add_option("--data", ev.data)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--model", ev.model)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--clicks", ev.clicks)->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep", "Run an experiment grid from the config");

  GradcheckOptions gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the deep loss gradient");
  gradcheck->add_option("--trials", gc.trials);
  gradcheck->add_option("--inputs", gc.inputs);
  gradcheck->add_option("--hidden", gc.hidden);
  gradcheck->add_option("--step", gc.step);
  gradcheck->add_option("--tolerance", gc.tolerance);

  std::string report_input;
  auto* report = app.add_subcommand("report", "Rebuild CSV and summary from a report.json");
  report->add_option("--input", report_input)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen_data(g);
    if (*simulate) return cmd_simulate(g, sim);
    if (*train) return cmd_train(g, tr);
    if (*evaluate) return cmd_evaluate(g, ev);
    if (*sweep) return cmd_sweep(g);
    if (*gradcheck) return cmd_gradcheck(g, gc);
    if (*report) return cmd_report(g, report_input);
  } catch (const cltr::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const cltr::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
