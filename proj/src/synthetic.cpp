#include "cltr/synthetic.hpp"

#include "cltr/rng.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace cltr {

void SyntheticSpec::validate() const {
  if (feature_dim < 1) throw std::invalid_argument("feature_dim must be >= 1");
  if (min_candidates < 1 || max_candidates < min_candidates) {
    throw std::invalid_argument("need 1 <= min_candidates <= max_candidates");
  }
  if (nonlinearity != 0.0 && feature_dim < 3) {
    throw std::invalid_argument("the nonlinear relevance term needs feature_dim >= 3");
  }
  if (!(sharpness > 0.0)) throw std::invalid_argument("sharpness must be > 0");
}

namespace {

Dataset generate_split(const SyntheticSpec& spec, const VectorXd& direction, std::size_t num_queries,
                       std::uint64_t split, const char* prefix) {
  Dataset data;
  data.feature_dim = spec.feature_dim;
  data.queries.reserve(num_queries);
  const auto d = static_cast<Eigen::Index>(spec.feature_dim);
  const double half_normal_mean = std::sqrt(2.0 / std::numbers::pi);
  for (std::size_t qi = 0; qi < num_queries; ++qi) {
    Rng rng(derive_seed(spec.seed, {split, qi}));
    const std::size_t m =
        spec.min_candidates + static_cast<std::size_t>(rng.below(spec.max_candidates - spec.min_candidates + 1));
    QueryInstance q;
    q.query_id = std::string(prefix) + std::to_string(qi);
    q.features.resize(static_cast<Eigen::Index>(m), d);
    std::vector<int> rel(m);
    for (std::size_t c = 0; c < m; ++c) {
      auto row = q.features.row(static_cast<Eigen::Index>(c));
      for (Eigen::Index f = 0; f < d; ++f) row[f] = rng.normal();
      double latent = row.dot(direction);
      if (spec.nonlinearity != 0.0) {
        latent += spec.nonlinearity * (row[0] * row[1] + std::abs(row[2]) - half_normal_mean);
      }
      const double p = 1.0 / (1.0 + std::exp(-spec.sharpness * (latent - spec.offset)));
      rel[c] = rng.bernoulli(p) ? 1 : 0;
    }
    q.relevances = std::move(rel);
    data.queries.push_back(std::move(q));
  }
  return data;
}

}  // namespace

SyntheticSplits generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {0}));
  VectorXd direction(static_cast<Eigen::Index>(spec.feature_dim));
  for (Eigen::Index f = 0; f < direction.size(); ++f) direction[f] = rng.normal();
  direction.normalize();
  return {generate_split(spec, direction, spec.num_queries, 1, "train-"),
          generate_split(spec, direction, spec.num_validation_queries, 2, "val-"),
          generate_split(spec, direction, spec.num_test_queries, 3, "test-")};
}

}  // namespace cltr
