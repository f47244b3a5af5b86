#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sade/schema.hpp"

namespace sade {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One feature column of the encoded design matrix. One-hot columns carry
// the source categorical column and the category they indicate; their
// name is "<column>=<category>".
struct FeatureInfo {
  std::string name;
  std::string source_column;
  bool one_hot = false;
  std::string category;
};

// Per-feature min/max used for the [0,1] scaling; degenerate marks a
// constant column (maps to 0).
struct ScalingInfo {
  double min = 0.0;
  double max = 1.0;
  bool degenerate = false;
};

struct Instance {
  std::vector<double> x;
  std::vector<double> y;
};

// Encoded dataset: numeric + one-hot features, targets as real vectors.
// Classification targets are +/-1 (one column per class for multiclass,
// encoded one-vs-all). `bounds` is the box the domain constraints are
// enforced over; empty until compute_bounds.
struct Dataset {
  Schema schema;
  std::vector<FeatureInfo> features;
  std::vector<std::string> target_names;
  // Multiclass: class label names in target order; binary: {negative, positive}.
  std::vector<std::string> class_names;
  std::vector<Instance> instances;
  std::vector<ScalingInfo> scaling;  // nonempty iff scaled
  std::vector<std::pair<double, double>> bounds;
  std::vector<double> y_max;  // per-target max |y|
  bool scaled = false;

  std::size_t n() const { return instances.size(); }
  std::size_t dim() const { return features.size(); }
  std::size_t n_targets() const { return target_names.size(); }

  std::vector<std::string> feature_names() const;
  std::optional<std::size_t> feature_index(const std::string& name) const;
  std::optional<std::size_t> target_index(const std::string& name) const;

  // Indices of one-hot features grouped by their source column.
  std::map<std::string, std::vector<std::size_t>> one_hot_groups() const;

  // Maps a scaled feature vector back to original units (identity for
  // one-hot features and unscaled datasets).
  std::vector<double> inverse_scale(const std::vector<double>& x) const;
};

struct Batch {
  std::size_t index = 0;
  std::vector<std::size_t> instance_ids;
};

// Reads an RFC-4180-style CSV (header row required) against `schema`.
// Categorical columns are one-hot encoded over the categories observed in
// the file (sorted), classification targets become +/-1 vectors. Missing
// values are rejected.
Dataset load_csv(const std::string& path, const Schema& schema);

// Same, but from an in-memory string (used by tests and synthetic round trips).
Dataset load_csv_text(const std::string& text, const Schema& schema,
                      const std::string& origin = "<memory>");

// Maps every numeric feature through (v - min) / (max - min) onto [0, 1].
// Constant columns map to 0 and are flagged degenerate. One-hot columns are
// untouched. No-op on an already scaled dataset.
Dataset scale_features(const Dataset& d);

// l_i = column min, u_i = column max, unless overridden per feature name.
// On a scaled dataset the defaults come out as (0, 1).
std::vector<std::pair<double, double>> compute_bounds(
    const Dataset& d,
    const std::map<std::string, std::pair<double, double>>& overrides = {});

// Shuffles instance ids once (seeded) and cuts them into consecutive
// batches of size b (last batch may be short).
std::vector<Batch> partition_batches(const Dataset& d, std::size_t b, std::uint64_t seed);

}  // namespace sade
