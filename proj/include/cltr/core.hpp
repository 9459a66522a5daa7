#ifndef CLTR_CORE_HPP
#define CLTR_CORE_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cltr {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;

// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training diverged or produced non-finite values.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One query with its candidate set. Row y of `features` is phi(x, y).
struct QueryInstance {
  std::string query_id;
  MatrixXd features;
  std::optional<std::vector<int>> relevances;

  std::size_t num_candidates() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
  bool has_relevances() const { return relevances.has_value(); }

  // Throws DataError when an invariant is violated.
  void validate() const;
};

struct Dataset {
  std::vector<QueryInstance> queries;
  std::size_t feature_dim = 0;

  std::size_t size() const { return queries.size(); }
  bool empty() const { return queries.empty(); }
  std::size_t total_candidates() const;
  void validate() const;
};

// Permutation of candidate indices; position 0 of `order()` is rank 1.
class Ranking {
 public:
  Ranking() = default;
  explicit Ranking(std::vector<std::size_t> order);

  const std::vector<std::size_t>& order() const { return order_; }
  std::size_t size() const { return order_.size(); }
  // 1-based rank of a candidate.
  std::size_t rank_of(std::size_t candidate) const;
  // Candidate at 1-based rank.
  std::size_t at_rank(std::size_t rank) const { return order_.at(rank - 1); }

  friend bool operator==(const Ranking&, const Ranking&) = default;

 private:
  std::vector<std::size_t> order_;
  std::vector<std::size_t> rank_;
};

// Sort by descending score, ties by ascending candidate index.
// `context` is used in the diagnostic when a score is not finite.
Ranking rank_by_scores(std::span<const double> scores, const std::string& context = {});
Ranking rank_by_scores(const VectorXd& scores, const std::string& context = {});

inline std::size_t rank_of(std::size_t candidate, const Ranking& ranking) {
  return ranking.rank_of(candidate);
}

template <typename Scalar>
struct LinearModelT {
  Vector<Scalar> w;

  LinearModelT() = default;
  explicit LinearModelT(Vector<Scalar> weights) : w(std::move(weights)) {}
  static LinearModelT zeros(std::size_t dim) {
    return LinearModelT(Vector<Scalar>::Zero(static_cast<Eigen::Index>(dim)));
  }
  std::size_t dim() const { return static_cast<std::size_t>(w.size()); }
};
using LinearModel = LinearModelT<double>;

template <typename Scalar, typename Derived>
Scalar score_linear(const LinearModelT<Scalar>& model, const Eigen::MatrixBase<Derived>& features) {
  if (static_cast<Eigen::Index>(model.dim()) != features.size()) {
    throw std::invalid_argument("score_linear: model dim " + std::to_string(model.dim()) +
                                " != feature dim " + std::to_string(features.size()));
  }
  return model.w.dot(features.derived().template cast<Scalar>());
}

// Scores of every candidate of a query.
VectorXd score_query(const LinearModel& model, const QueryInstance& query);

// Text model file: first line dim, then one weight per line.
void save_linear_model(const LinearModel& model, const std::string& path);
LinearModel load_linear_model(const std::string& path);

}  // namespace cltr

#endif  // CLTR_CORE_HPP
