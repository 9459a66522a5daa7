#ifndef CLTR_CLICK_SIM_HPP
#define CLTR_CLICK_SIM_HPP

#include "cltr/core.hpp"
#include "cltr/metrics.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace cltr {

// Examination probability (1/rank)^eta.
struct PositionBiasModel {
  double eta = 1.0;

  double propensity(long rank) const;
};

inline double propensity(const PositionBiasModel& model, long rank) { return model.propensity(rank); }

struct NoiseModel {
  double eps_minus = 0.1;  // click probability of an examined irrelevant doc
  double eps_plus = 1.0;   // click probability of an examined relevant doc
};

struct SimulationConfig {
  double eta = 1.0;
  double eps_minus = 0.1;
  double eps_plus = 1.0;
  int passes = 1;
  std::uint64_t seed = 0;
  double assumed_eta = 1.0;  // eta used for the recorded propensities

  void validate() const;
};

// Query indices used to train the production ranker: ceil(fraction * N), chosen
// by a seeded shuffle.
std::vector<std::size_t> production_subsample(std::size_t num_queries, double fraction, std::uint64_t seed);

// A deliberately weak ranker: full-information SVM PropRank on a query subsample.
LinearModel train_production_ranker(const Dataset& data, double fraction, std::uint64_t seed, double C = 1.0);

// Position-based click model. The presented ranking of each query is fixed by the
// production ranker; each (query, pass) draws from its own RNG stream, so the log
// does not depend on iteration order. Records are ordered by pass, query, rank.
ClickLog simulate_clicks(const Dataset& data, const LinearModel& production, const SimulationConfig& config);

// JSON-lines click log: a header object with the simulation config, then one
// object per click {query_id, clicked_candidate, presented_order, propensity}.
void write_click_log(std::ostream& out, const ClickLog& log, const Dataset& data, const SimulationConfig& config);
void save_click_log(const std::string& path, const ClickLog& log, const Dataset& data,
                    const SimulationConfig& config);

struct LoadedClickLog {
  ClickLog log;
  SimulationConfig config;
};
LoadedClickLog read_click_log(std::istream& in, const Dataset& data);
LoadedClickLog load_click_log(const std::string& path, const Dataset& data);

}  // namespace cltr

#endif  // CLTR_CLICK_SIM_HPP
