#include "cltr/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace cltr {

void QueryInstance::validate() const {
  if (features.rows() == 0) {
    throw DataError("query '" + query_id + "' has no candidates");
  }
  if (!features.allFinite()) {
    throw DataError("query '" + query_id + "' has non-finite feature values");
  }
  if (relevances) {
    if (relevances->size() != num_candidates()) {
      throw DataError("query '" + query_id + "': relevance count does not match candidates");
    }
    for (int r : *relevances) {
      if (r != 0 && r != 1) throw DataError("query '" + query_id + "': relevance not binary");
    }
  }
}

std::size_t Dataset::total_candidates() const {
  std::size_t total = 0;
  for (const auto& q : queries) total += q.num_candidates();
  return total;
}

void Dataset::validate() const {
  for (const auto& q : queries) {
    q.validate();
    if (q.dim() != feature_dim) {
      throw DataError("query '" + q.query_id + "' has dim " + std::to_string(q.dim()) +
                      ", dataset dim is " + std::to_string(feature_dim));
    }
  }
}

Ranking::Ranking(std::vector<std::size_t> order) : order_(std::move(order)), rank_(order_.size(), 0) {
  for (std::size_t pos = 0; pos < order_.size(); ++pos) {
    const std::size_t c = order_[pos];
    if (c >= order_.size() || rank_[c] != 0) {
      throw std::invalid_argument("Ranking: order is not a permutation");
    }
    rank_[c] = pos + 1;
  }
}

std::size_t Ranking::rank_of(std::size_t candidate) const {
  if (candidate >= rank_.size()) {
    throw std::out_of_range("rank_of: candidate " + std::to_string(candidate) +
                            " out of range for ranking of size " + std::to_string(rank_.size()));
  }
  return rank_[candidate];
}

Ranking rank_by_scores(std::span<const double> scores, const std::string& context) {
  if (scores.empty()) throw std::invalid_argument("rank_by_scores: empty score list");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      std::ostringstream msg;
      msg << "rank_by_scores: non-finite score for candidate " << i;
      if (!context.empty()) msg << " of query '" << context << "'";
      throw NumericError(msg.str());
    }
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return Ranking(std::move(order));
}

Ranking rank_by_scores(const VectorXd& scores, const std::string& context) {
  return rank_by_scores(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())),
                        context);
}

VectorXd score_query(const LinearModel& model, const QueryInstance& query) {
  if (model.dim() != query.dim()) {
    throw std::invalid_argument("score_query: model dim " + std::to_string(model.dim()) +
                                " != feature dim " + std::to_string(query.dim()));
  }
  return query.features * model.w;
}

void save_linear_model(const LinearModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << model.dim() << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < model.w.size(); ++i) out << model.w[i] << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

LinearModel load_linear_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::size_t dim = 0;
  if (!(in >> dim)) throw DataError(path + ": missing dimension line");
  LinearModel model = LinearModel::zeros(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    if (!(in >> model.w[static_cast<Eigen::Index>(i)])) {
      throw DataError(path + ": expected " + std::to_string(dim) + " weights, got " + std::to_string(i));
    }
  }
  if (!model.w.allFinite()) throw DataError(path + ": non-finite weight");
  return model;
}

}  // namespace cltr
