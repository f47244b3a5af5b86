#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sade/constraint.hpp"
#include "sade/dataset.hpp"
#include "sade/model.hpp"
#include "sade/smt.hpp"

namespace sade {

// Solver-backed admissibility proofs for concrete models: a constraint holds
// over the whole bounded input space iff its negation (free coordinates in
// the box, body negated, predictions replaced by the model's affine rows) is
// unsatisfiable.

struct VerifierError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Admissibility { Proven, CounterexampleFound, Unknown };

// One concrete point per quantified variable, in the model's (scaled)
// feature space. Exact rationals so violations re-check exactly.
using CounterexamplePoint = std::map<std::string, std::vector<Rational>>;

struct ConstraintCheck {
  std::string name;
  Verdict verdict = Verdict::Unknown;  // Unsat here means "no violation exists"
  long long elapsed_ms = 0;
};

struct AdmissibilityVerdict {
  Admissibility status = Admissibility::Unknown;
  // Set when status == CounterexampleFound:
  std::string violated_constraint;
  CounterexamplePoint counterexample;
  // Per-constraint outcomes, in constraint order (possibly partial when a
  // counterexample cut the scan short).
  std::vector<ConstraintCheck> checks;
  long long elapsed_ms = 0;

  bool proven() const { return status == Admissibility::Proven; }
};

// Checks every constraint's negation query. Any Sat => counterexample (scan
// stops there); otherwise any Unknown/solver failure => Unknown; all Unsat
// => Proven. Spawns its own solver session from `cfg`.
AdmissibilityVerdict prove_admissible(const LinearModel& m, const ConstraintSet& ks,
                                      const std::vector<std::pair<double, double>>& bounds,
                                      const SolverConfig& cfg);

// Same work on a caller-provided session (pushed scopes only; the session
// must not carry assertions over this module's coordinate symbols).
AdmissibilityVerdict prove_admissible(const LinearModel& m, const ConstraintSet& ks,
                                      const std::vector<std::pair<double, double>>& bounds,
                                      SolverSession& session);

enum class BallSearch { None, Found, Unknown };

struct BallResult {
  BallSearch kind = BallSearch::None;
  std::string constraint_name;  // when Found
  CounterexamplePoint point;    // when Found
};

// Searches an l-infinity ball of radius `delta` around x0 (intersected with
// the dataset bounds) for a constraint violation. The ball applies to the
// first quantified variable — the one centered on the instance — any second
// variable ranges over the whole box. One-hot coordinates are frozen at
// x0's category: fractional one-hot values are not valid encodings.
BallResult find_counterexample_near(const LinearModel& m, const ConstraintSet& ks,
                                    const Dataset& d, const std::vector<double>& x0,
                                    double delta, SolverSession& session);

struct AdversityReport {
  double delta = 0.0;
  std::size_t total = 0;
  std::size_t found = 0;
  std::size_t none = 0;
  std::size_t unknown = 0;
  double adi = 0.0;  // found / total
  std::vector<BallResult> per_instance;
  long long elapsed_ms = 0;
};

// Fraction of training instances that admit a counterexample within delta.
// Unknown verdicts are excluded from the numerator but counted and surfaced.
// `jobs` worker threads each own one solver session.
AdversityReport adversity_index(const LinearModel& m, const ConstraintSet& ks,
                                const Dataset& d, double delta, const SolverConfig& cfg,
                                std::size_t jobs = 1);

}  // namespace sade
