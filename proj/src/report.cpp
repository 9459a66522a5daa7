#include "cltr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <tuple>

namespace cltr {

using nlohmann::json;

void write_report_csv(const RunReport& report, std::ostream& out) {
  std::ostringstream rows;
  rows.precision(17);
  rows << "experiment,grid_value,run,model,metric,value\n";
  for (const auto& c : report.cells) {
    const auto prefix = [&](std::ostringstream& o) -> std::ostringstream& {
      o << report.experiment << ',' << c.grid_value << ',' << c.run << ',' << c.model << ',';
      return o;
    };
    if (!c.ok) {
      prefix(rows) << "failed,1\n";
      continue;
    }
    for (const auto& [metric, value] : c.metrics) prefix(rows) << metric << ',' << value << '\n';
  }
  out << rows.str();
}

json report_to_json(const RunReport& report) {
  json cells = json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"grid_index", c.grid_index},
                     {"grid_value", c.grid_value},
                     {"run", c.run},
                     {"model", c.model},
                     {"ok", c.ok},
                     {"error", c.error},
                     {"metrics", c.metrics},
                     {"wall_time_s", c.wall_time_s}});
  }
  return {{"experiment", report.experiment}, {"cells", cells}};
}

RunReport report_from_json(const json& j) {
  RunReport report;
  report.experiment = j.at("experiment").get<std::string>();
  for (const auto& c : j.at("cells")) {
    CellResult cell;
    cell.grid_index = c.at("grid_index").get<std::size_t>();
    cell.grid_value = c.at("grid_value").get<double>();
    cell.run = c.at("run").get<int>();
    cell.model = c.at("model").get<std::string>();
    cell.ok = c.at("ok").get<bool>();
    cell.error = c.value("error", "");
    cell.metrics = c.at("metrics").get<std::map<std::string, double>>();
    cell.wall_time_s = c.value("wall_time_s", 0.0);
    report.cells.push_back(std::move(cell));
  }
  return report;
}

std::vector<SummaryCell> summarize(const RunReport& report) {
  std::map<std::tuple<std::size_t, std::string, std::string>, std::pair<double, std::vector<double>>> groups;
  for (const auto& c : report.cells) {
    if (!c.ok) continue;
    for (const auto& [metric, value] : c.metrics) {
      auto& g = groups[{c.grid_index, c.model, metric}];
      g.first = c.grid_value;
      g.second.push_back(value);
    }
  }
  std::vector<SummaryCell> out;
  for (const auto& [key, group] : groups) {
    const auto& values = group.second;
    SummaryCell s;
    s.grid_value = group.first;
    s.model = std::get<1>(key);
    s.metric = std::get<2>(key);
    s.n = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - s.mean) * (v - s.mean);
      s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    out.push_back(s);
  }
  return out;
}

json summary_to_json(const RunReport& report) {
  json cells = json::array();
  for (const auto& s : summarize(report)) {
    cells.push_back({{"grid_value", s.grid_value},
                     {"model", s.model},
                     {"metric", s.metric},
                     {"mean", s.mean},
                     {"sd", s.sd},
                     {"n", s.n}});
  }
  std::size_t failed = 0;
  for (const auto& c : report.cells) failed += c.ok ? 0 : 1;
  return {{"experiment", report.experiment}, {"failed_cells", failed}, {"summary", cells}};
}

double median_metric(const RunReport& report, double grid_value, const std::string& model, const std::string& metric) {
  std::vector<double> values;
  for (const auto& c : report.cells) {
    if (!c.ok || c.model != model || c.grid_value != grid_value) continue;
    if (const auto it = c.metrics.find(metric); it != c.metrics.end()) values.push_back(it->second);
  }
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

template <typename T>
void read_into(const json& section, const char* key, T& target) {
  if (section.contains(key)) target = section.at(key).get<T>();
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    read_into(s, "num_queries", cfg.synthetic.num_queries);
    read_into(s, "num_validation_queries", cfg.synthetic.num_validation_queries);
    read_into(s, "num_test_queries", cfg.synthetic.num_test_queries);
    read_into(s, "min_candidates", cfg.synthetic.min_candidates);
    read_into(s, "max_candidates", cfg.synthetic.max_candidates);
    read_into(s, "feature_dim", cfg.synthetic.feature_dim);
    read_into(s, "nonlinearity", cfg.synthetic.nonlinearity);
    read_into(s, "sharpness", cfg.synthetic.sharpness);
    read_into(s, "offset", cfg.synthetic.offset);
    read_into(s, "seed", cfg.synthetic.seed);
  }
  if (j.contains("simulation")) {
    const json& s = j.at("simulation");
    read_into(s, "eta", cfg.simulation.eta);
    cfg.simulation.assumed_eta = cfg.simulation.eta;
    read_into(s, "eps_minus", cfg.simulation.eps_minus);
    read_into(s, "eps_plus", cfg.simulation.eps_plus);
    read_into(s, "passes", cfg.simulation.passes);
    read_into(s, "seed", cfg.simulation.seed);
    read_into(s, "assumed_eta", cfg.simulation.assumed_eta);
  }
  if (j.contains("train")) {
    const json& s = j.at("train");
    read_into(s, "C", cfg.train.C);
    read_into(s, "max_ccp_iters", cfg.train.max_ccp_iters);
    read_into(s, "ccp_tol", cfg.train.ccp_tol);
    read_into(s, "inner_max_epochs", cfg.train.inner.max_epochs);
    read_into(s, "inner_tol", cfg.train.inner.tol);
    read_into(s, "seed", cfg.train.seed);
    if (s.contains("weighting")) cfg.train.train_weighting = parse_weighting(s.at("weighting").get<std::string>());
    if (s.contains("propensity_clip")) cfg.train.propensity_clip = s.at("propensity_clip").get<double>();
  }
  if (j.contains("sgd")) {
    const json& s = j.at("sgd");
    read_into(s, "epochs", cfg.sgd.epochs);
    read_into(s, "hidden", cfg.sgd.hidden);
    read_into(s, "minibatch_docs", cfg.sgd.minibatch_docs);
    read_into(s, "learning_rate", cfg.sgd.learning_rate);
    read_into(s, "decay_epochs", cfg.sgd.decay_epochs);
    read_into(s, "decay_factor", cfg.sgd.decay_factor);
    read_into(s, "weight_decay", cfg.sgd.weight_decay);
    read_into(s, "beta1", cfg.sgd.beta1);
    read_into(s, "beta2", cfg.sgd.beta2);
    read_into(s, "adam_eps", cfg.sgd.adam_eps);
    read_into(s, "seed", cfg.sgd.seed);
    if (s.contains("weighting")) cfg.sgd.train_weighting = parse_weighting(s.at("weighting").get<std::string>());
  }
  if (j.contains("plan")) {
    const json& s = j.at("plan");
    if (s.contains("kind")) cfg.plan.kind = parse_experiment_kind(s.at("kind").get<std::string>());
    read_into(s, "grid", cfg.plan.grid);
    read_into(s, "runs", cfg.plan.runs);
    read_into(s, "models", cfg.plan.models);
    read_into(s, "c_grid", cfg.plan.c_grid);
    read_into(s, "production_fraction", cfg.plan.production_fraction);
    read_into(s, "production_c", cfg.plan.production_c);
    read_into(s, "master_seed", cfg.plan.master_seed);
    read_into(s, "threads", cfg.plan.threads);
  }
  cfg.plan.simulation = cfg.simulation;
  cfg.plan.train = cfg.train;
  cfg.plan.sgd = cfg.sgd;
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path + "'");
  try {
    return parse_experiment_config(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError("config '" + path + "': " + e.what());
  }
}

}  // namespace cltr
