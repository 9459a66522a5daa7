#ifndef CLTR_SYNTHETIC_HPP
#define CLTR_SYNTHETIC_HPP

#include "cltr/core.hpp"

#include <cstdint>

namespace cltr {

// Generative process for full-information ranking data. Features are standard
// normal; a candidate is relevant with probability
//   sigmoid(sharpness * (w* . x + nonlinearity * g(x) - offset)),
// where w* is a random unit vector and g(x) = x0 * x1 + |x2| - sqrt(2/pi) is a
// zero-mean term no linear scorer can represent. Queries with no relevant
// candidate are kept.
struct SyntheticSpec {
  std::size_t num_queries = 500;  // training split
  std::size_t num_validation_queries = 250;
  std::size_t num_test_queries = 250;
  std::size_t min_candidates = 8;
  std::size_t max_candidates = 12;
  std::size_t feature_dim = 10;
  double nonlinearity = 0.0;
  double sharpness = 4.0;
  double offset = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticSplits {
  Dataset train;
  Dataset validation;
  Dataset test;
};

SyntheticSplits generate_synthetic(const SyntheticSpec& spec);

}  // namespace cltr

#endif  // CLTR_SYNTHETIC_HPP
