#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sade/dataset.hpp"

namespace sade {

// Parameters for the built-in dataset generators. Two families:
//   "binary-denial"     linearly separable binary classification over three
//                       features in [0,1]; paired with a denial-region
//                       constraint (low income must score negative).
//   "regression-budget" three-target regression; paired with a budget pair
//                       (sum of predictions within income, going_out capped
//                       at 5% of income).
// Exactly ceil(violation_rate * n) rows get labels that violate the paired
// constraints; every other row satisfies them.
struct GeneratorSpec {
  std::string name;
  std::size_t n = 200;
  double violation_rate = 0.0;
};

struct SyntheticData {
  Dataset dataset;           // encoded via the CSV loader, features in [0,1]
  std::string csv;           // the raw file the dataset was loaded from
  std::string constraints;   // paired constraint file (s-expression syntax)
  std::vector<std::size_t> violator_ids;  // rows violating the constraints
  // The generators cover the full unit box, so constraints should be
  // enforced over [0,1] per feature rather than the observed min/max.
  std::map<std::string, std::pair<double, double>> bound_overrides;
};

// Throws DataError on an unknown generator name or violation_rate outside
// [0,1).
SyntheticData generate_synthetic(const GeneratorSpec& spec, std::uint64_t seed);

}  // namespace sade
