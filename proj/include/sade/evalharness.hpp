#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sade/constraint.hpp"
#include "sade/dataset.hpp"
#include "sade/model.hpp"
#include "sade/smt.hpp"
#include "sade/trainer.hpp"

namespace sade {

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Test labels themselves may violate the domain constraints; predictive
// metrics are computed only on the instances whose labels comply.

// Indices (ascending) of instances whose labels satisfy every
// single-instance constraint, evaluated in label-as-prediction mode:
// (pred x k) reads the instance's label vector. Constraints quantifying
// over more than one instance have no per-instance reading; they are
// skipped with one warning each. Model-independent.
std::vector<std::size_t> filter_admissible_instances(const Dataset& d, const ConstraintSet& ks,
                                                     std::vector<std::string>* warnings = nullptr);

// Instances whose *model predictions* falsify at least one single-instance
// constraint (multi-instance constraints skipped with a warning, as above).
// Exact rational predictions, so boundary cases count consistently with the
// solver's reading.
std::size_t count_violating_instances(const LinearModel& m, const Dataset& d,
                                      const ConstraintSet& ks,
                                      std::vector<std::string>* warnings = nullptr);

enum class MetricKind { Accuracy, MeanSquaredError };

// Accuracy for classification tasks, mean squared error for regression.
MetricKind metric_for(TaskKind task);

struct EvalReport {
  MetricKind kind = MetricKind::Accuracy;
  // Accuracy in [0,1], or the across-targets sum of per-target MSE. NaN when
  // the admissible subset is empty (serialized as null).
  double value = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> per_target_mse;  // regression only, target order
  std::size_t n_test_total = 0;
  std::size_t n_test_admissible = 0;
  std::size_t excluded_count = 0;  // always n_test_total - n_test_admissible
  bool empty_subset = false;
  std::vector<std::string> warnings;
};

// Predictive performance over the admissible subset of `testset`. An empty
// subset yields an explicit empty report (empty_subset set, value NaN)
// rather than a division by zero. Throws EvalError when the model and the
// test set disagree on the feature/target layout.
EvalReport evaluate(const LinearModel& m, const Dataset& testset, const ConstraintSet& ks);

// ---------------------------------------------------------------------------
// K-fold cross-validation over a hyperparameter grid
// ---------------------------------------------------------------------------

struct GridPoint {
  std::string label;   // human-readable cell tag for reports
  TrainConfig config;  // complete training configuration for this cell
  double lambda = 0.0; // penalty weight; only the descent baseline reads it
};

// The swept grid: step size alpha in {0.5, 1, 2} crossed with the three
// margin ladders (classification) or band-coefficient ladders (regression).
// Everything else is copied from `base`.
std::vector<GridPoint> default_sade_grid(const TrainConfig& base, TaskKind task);

// Penalty-weight sweep for the descent baseline, all else from `base`.
std::vector<GridPoint> baseline_grid(const TrainConfig& base,
                                     const std::vector<double>& lambdas);

enum class CvLearner { Sade, PenaltyDescent };

struct CvOptions {
  CvLearner learner = CvLearner::Sade;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;  // cells run in parallel, one solver session each
  SolverConfig solver;
};

struct CvCell {
  std::size_t grid_index = 0;
  std::size_t fold = 0;
  bool trained = false;  // false when no admissible model was found
  // Held-fold admissible-subset metric; NaN when untrained or the fold's
  // admissible subset is empty.
  double metric = std::numeric_limits<double>::quiet_NaN();
  std::size_t violations = 0;    // model violations over the whole held fold
  std::size_t n_admissible = 0;  // held-fold admissible-subset size
};

struct CvResult {
  std::vector<GridPoint> grid;
  std::vector<CvCell> cells;  // row-major: grid point x fold
  MetricKind metric_kind = MetricKind::Accuracy;
  // Per grid point, averaged over the cells that produced a value; NaN when
  // none did.
  std::vector<double> mean_metric;
  std::vector<double> mean_violations;
  std::size_t selected = 0;  // index into `grid`
  // "best-mean-metric" (constraint-satisfying learner: every candidate is
  // admissible, so the predictive metric decides) or
  // "fewest-mean-violations" (penalty baseline; ties broken by metric).
  std::string selection_rule;
  std::vector<std::string> warnings;
};

// Seeded shuffle split into k folds whose sizes differ by at most one;
// indices within each fold are ascending. Throws EvalError for k < 2 or
// k > n.
std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k,
                                                  std::uint64_t seed);

// Copy of `d` restricted to the given instances (in the given order),
// keeping schema, scaling, bounds and y_max: folds stay in the parent's
// certified feature box and share its decision-band scale.
Dataset take_instances(const Dataset& d, const std::vector<std::size_t>& ids);

// Trains every grid point on each k-1 fold complement and scores it on the
// held fold. Cells where training finds no admissible model are recorded
// untrained and excluded from the means. A fold smaller than the batch size
// clamps the batch size for every cell, with a warning. Throws EvalError
// when the grid is empty, the fold count is out of range, or no grid point
// trains on any fold.
CvResult cross_validate(const Dataset& d, const ConstraintSet& ks,
                        const std::vector<GridPoint>& grid, const CvOptions& opt);

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

nlohmann::json eval_report_to_json(const EvalReport& r);
nlohmann::json cv_result_to_json(const CvResult& r);

// One row per cell: grid index, label, fold, trained, metric, violations,
// admissible count.
std::string cv_csv_summary(const CvResult& r);

}  // namespace sade
