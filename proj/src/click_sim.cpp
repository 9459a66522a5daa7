#include "cltr/click_sim.hpp"

#include "cltr/linear_ccp.hpp"
#include "cltr/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_map>

namespace cltr {

using nlohmann::json;

double PositionBiasModel::propensity(long rank) const {
  if (rank < 1) throw std::invalid_argument("propensity: rank must be >= 1");
  if (!(eta >= 0.0)) throw std::invalid_argument("propensity: eta must be >= 0");
  return std::pow(1.0 / static_cast<double>(rank), eta);
}

void SimulationConfig::validate() const {
  if (!(eta >= 0.0) || !(assumed_eta >= 0.0)) throw std::invalid_argument("eta must be >= 0");
  if (!(eps_minus >= 0.0 && eps_minus <= 1.0)) throw std::invalid_argument("eps_minus must be in [0,1]");
  if (!(eps_plus > 0.0 && eps_plus <= 1.0)) throw std::invalid_argument("eps_plus must be in (0,1]");
  if (passes < 1) throw std::invalid_argument("passes must be >= 1");
}

std::vector<std::size_t> production_subsample(std::size_t num_queries, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("fraction must be in (0,1]");
  // Tolerate products such as 0.07 * 100 = 7.000000000000001.
  const double raw = static_cast<double>(num_queries) * fraction;
  const auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  std::vector<std::size_t> idx(num_queries);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {0x70726f64}));
  rng.shuffle(idx);
  idx.resize(std::min(count, num_queries));
  std::sort(idx.begin(), idx.end());
  return idx;
}

LinearModel train_production_ranker(const Dataset& data, double fraction, std::uint64_t seed, double C) {
  const std::vector<std::size_t> subset = production_subsample(data.size(), fraction, seed);
  if (subset.empty()) throw DataError("train_production_ranker: empty query subsample");
  const ClickLog log = full_information_log(data, subset);
  if (log.empty()) throw DataError("train_production_ranker: subsample has no relevant documents");
  TrainConfig config;
  config.C = C;
  config.seed = seed;
  return train_proprank(log, data, config);
}

ClickLog simulate_clicks(const Dataset& data, const LinearModel& production, const SimulationConfig& config) {
  config.validate();
  const PositionBiasModel truth{config.eta};
  const PositionBiasModel assumed{config.assumed_eta};

  std::vector<Ranking> presented;
  presented.reserve(data.size());
  for (const auto& q : data.queries) {
    if (!q.relevances) throw DataError("simulate_clicks: query '" + q.query_id + "' has no relevances");
    presented.push_back(rank_by_scores(score_query(production, q), q.query_id));
  }

  ClickLog log;
  for (int pass = 0; pass < config.passes; ++pass) {
    for (std::size_t qi = 0; qi < data.size(); ++qi) {
      Rng rng(derive_seed(config.seed, {qi, static_cast<std::uint64_t>(pass)}));
      const auto& rel = *data.queries[qi].relevances;
      const Ranking& ranking = presented[qi];
      for (std::size_t r = 1; r <= ranking.size(); ++r) {
        const std::size_t doc = ranking.at_rank(r);
        const double click_prob =
            truth.propensity(static_cast<long>(r)) * (rel[doc] ? config.eps_plus : config.eps_minus);
        if (rng.uniform() < click_prob) {
          log.records.push_back({qi, doc, ranking, assumed.propensity(static_cast<long>(r))});
        }
      }
    }
  }
  return log;
}

namespace {

json config_to_json(const SimulationConfig& c) {
  return json{{"eta", c.eta},       {"eps_minus", c.eps_minus}, {"eps_plus", c.eps_plus},
              {"passes", c.passes}, {"seed", c.seed},           {"assumed_eta", c.assumed_eta}};
}

SimulationConfig config_from_json(const json& j) {
  SimulationConfig c;
  c.eta = j.at("eta").get<double>();
  c.eps_minus = j.at("eps_minus").get<double>();
  c.eps_plus = j.at("eps_plus").get<double>();
  c.passes = j.at("passes").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.assumed_eta = j.at("assumed_eta").get<double>();
  return c;
}

}  // namespace

void write_click_log(std::ostream& out, const ClickLog& log, const Dataset& data, const SimulationConfig& config) {
  out << json{{"type", "header"}, {"config", config_to_json(config)}, {"seed", config.seed}}.dump() << '\n';
  for (const auto& r : log.records) {
    json rec;
    rec["query_id"] = data.queries.at(r.query).query_id;
    rec["clicked_candidate"] = r.clicked;
    rec["presented_order"] = r.presented.order();
    rec["propensity"] = r.propensity;
    out << rec.dump() << '\n';
  }
}

void save_click_log(const std::string& path, const ClickLog& log, const Dataset& data,
                    const SimulationConfig& config) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_click_log(out, log, data, config);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

LoadedClickLog read_click_log(std::istream& in, const Dataset& data) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < data.size(); ++i) index.emplace(data.queries[i].query_id, i);

  LoadedClickLog loaded;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "click log line " + std::to_string(line_no) + ": ";
    try {
      const json j = json::parse(line);
      if (!have_header) {
        if (j.value("type", "") != "header") throw DataError(where + "missing header");
        loaded.config = config_from_json(j.at("config"));
        have_header = true;
        continue;
      }
      const auto it = index.find(j.at("query_id").get<std::string>());
      if (it == index.end()) throw DataError(where + "unknown query_id");
      ClickRecord r;
      r.query = it->second;
      r.clicked = j.at("clicked_candidate").get<std::size_t>();
      r.presented = Ranking(j.at("presented_order").get<std::vector<std::size_t>>());
      r.propensity = j.at("propensity").get<double>();
      loaded.log.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(where + e.what());
    } catch (const std::invalid_argument& e) {
      throw DataError(where + e.what());
    }
  }
  if (!have_header) throw DataError("click log: missing header");
  validate_log(loaded.log, data);
  return loaded;
}

LoadedClickLog load_click_log(const std::string& path, const Dataset& data) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_click_log(in, data);
}

}  // namespace cltr
