#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sade/constraint.hpp"
#include "sade/dataset.hpp"
#include "sade/maxsmt.hpp"
#include "sade/model.hpp"
#include "sade/smt.hpp"

namespace sade {

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  // Maximal per-coordinate step: each solve is confined to a box of side
  // alpha on the descent side of the current solution.
  double alpha = 1.0;
  std::size_t batch_size = 5;
  std::size_t epochs = 10;
  // Margins for classification decision constraints: one soft per instance,
  // class and threshold (score > tau for the positive label, score < -tau
  // otherwise). Must be strictly increasing.
  std::vector<double> classification_thresholds = {0.0, 1.0};
  // Band half-widths for regression decision constraints, as fractions of
  // the per-target max |y|: |score - y| <= c * y_max. Strictly increasing.
  std::vector<double> regression_threshold_coeffs = {0.1};
  // Every weight is kept inside [-param_bound, param_bound].
  double param_bound = 10.0;
  // Hard cap on batch attempts; 0 means epochs * batches only.
  std::size_t max_iterations = 0;
  // Loss-plateau stop: from iteration stop_start, every stop_every
  // iterations, stop when the relative improvement over the last
  // stop_window iterations falls below stop_min_improvement.
  std::size_t stop_start = 400;
  std::size_t stop_every = 100;
  std::size_t stop_window = 200;
  double stop_min_improvement = 0.02;
  std::uint64_t seed = 0;
  // Gradient-descent baseline only.
  double learning_rate = 0.1;
  // exact_maxsmt_train refuses datasets larger than this.
  std::size_t exact_instance_guard = 50;
};

// Throws TrainError when a field is out of range for the given task (e.g.
// alpha <= 0, empty or non-increasing threshold list, param_bound <= 0).
void validate_train_config(const TrainConfig& cfg, TaskKind task);

// Soft constraints for one batch: per instance, per output row and per
// threshold, the statement "this instance is decided correctly with this
// margin", over symbolic weights and the instance's concrete features.
std::vector<std::string> decision_constraints(const Dataset& d, const Batch& batch,
                                              const LinearModel& m, const TrainConfig& cfg);

// Hard box around the current solution: weight w_k_i is confined to
// [w - alpha, w] when the gradient coordinate is >= 0 (descent means
// decreasing w) and to [w, w + alpha] when it is negative. Bounds are
// inclusive, so the current solution always remains feasible. Throws
// TrainError when the gradient shape does not match the model.
std::string box_constraint(const LinearModel& m, const std::vector<std::vector<double>>& g,
                           double alpha);

// Plateau check over the loss trace (one entry per batch attempt, failed
// attempts carry the previous value forward). `iteration` is the 1-based
// count of completed attempts; the check fires only on the configured
// cadence, or whenever max_iterations is reached. Non-finite trace values
// (no solution yet) never trigger a stop.
bool stopping_criterion(const std::vector<double>& loss_trace, std::size_t iteration,
                        const TrainConfig& cfg);

struct ArchiveEntry {
  std::vector<std::vector<Rational>> weights;
  double loss = 0.0;        // full-training-set loss at these weights
  std::size_t iteration = 0;  // 1-based batch attempt that produced them
};

struct TrainedBundle {
  // The archived solution with minimal full-training-set loss.
  LinearModel model;
  std::size_t best_index = 0;  // archive position of `model`'s weights
  std::vector<ArchiveEntry> archive;
  std::vector<double> loss_trace;
  std::size_t iterations = 0;
  std::size_t sat_solves = 0;
  std::size_t unsat_solves = 0;
  std::size_t unknown_solves = 0;
  // Batches after which the gradient was negated (failed solve or a
  // discarded approximate solution, once a gradient existed).
  std::size_t restarts = 0;
  std::size_t crash_retries = 0;
  // Sat solves whose value extraction was approximate and whose rational
  // reconstruction failed re-verification.
  std::size_t discarded_approximate = 0;
  bool stopped_early = false;
  long long solver_ms = 0;
  TrainConfig config;
};

// Batched constraint-satisfying descent: every batch solves a MaxSMT
// problem whose hard part is the domain constraints, the parameter bounds
// and (after the first solution) the current descent box, and whose soft
// part is the batch's decision constraints. Satisfiable solves are archived
// with their full-training-set loss and refresh the gradient; failed solves
// negate it. Every archived solution satisfies `ks` over the whole bounded
// feature box by construction of the hard constraints. Throws TrainError
// when the dataset has no bounds, a constraint fails validation, or no
// admissible solution is ever found.
TrainedBundle sade_train(const Dataset& d, const ConstraintSet& ks, const TrainConfig& cfg,
                         const SolverConfig& solver = {});

struct ExactTrainResult {
  LinearModel model;
  // Ascending indices (into the full decision-constraint list) the optimum
  // satisfies.
  std::vector<std::size_t> satisfied;
  std::size_t total_soft = 0;
  int rounds = 0;
  long long elapsed_ms = 0;
};

// One MaxSMT solve over the entire dataset: maximally many decision
// constraints subject to the domain constraints and parameter bounds.
// Exact but exponential in practice, hence the instance-count guard.
// Throws TrainError on oversized input, unsatisfiable hard constraints
// ("no admissible model found") or an inconclusive solver.
ExactTrainResult exact_maxsmt_train(const Dataset& d, const ConstraintSet& ks,
                                    const TrainConfig& cfg, const SolverConfig& solver = {});

// Mini-batch gradient descent baseline, optionally with a soft constraint
// penalty: loss + lambda * mean over batch instances of the constraints'
// hinge compilation (comparisons become max(0, violation), conjunctions
// add, implications with prediction-free antecedents gate on the
// antecedent). No admissibility guarantee. With lambda = 0 the trajectory
// is identical to unconstrained descent under the same seed. Throws
// TrainError when a constraint has no hinge form.
LinearModel gd_train(const Dataset& d, const TrainConfig& cfg, double lambda = 0.0,
                     const ConstraintSet* ks = nullptr);

}  // namespace sade
