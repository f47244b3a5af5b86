#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "sade/rational.hpp"

namespace sade {

// Talks SMT-LIB 2 to an external solver process over stdin/stdout:
// declarations, assertions, scoped push/pop, check-sat with assumptions and
// a per-check time limit, model values and unsat cores.

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The solver process died or stopped responding. The session is poisoned:
// every further operation rethrows. Callers recover by constructing a fresh
// session.
struct SolverCrash : SolverError {
  using SolverError::SolverError;
};

struct SolverConfig {
  // argv of the solver executable. Empty means default_solver_command().
  std::vector<std::string> solver_command;
  std::string logic = "NRA";
  int per_check_timeout_ms = 5000;
  int decimal_precision = 20;  // digits when printing non-rational values
  unsigned random_seed = 0;
};

// Picks the solver to run, in order of preference:
//   1. the SADE_SOLVER_CMD environment variable (whitespace-split argv),
//   2. a `z3` binary on PATH, run as `z3 -in`,
//   3. the bundled WebAssembly build via `node tools/z3server/z3server.js`.
std::vector<std::string> default_solver_command();

enum class Verdict { Sat, Unsat, Unknown };

std::string verdict_name(Verdict v);

// A model value. Solvers answer with exact rationals where they can; an
// algebraic irrational (possible over nonlinear real arithmetic) comes back
// as a truncated decimal and is flagged `approximate` so callers know the
// value needs re-verification before they rely on it.
struct SolverValue {
  Rational value;
  bool approximate = false;
};

struct CheckResult {
  Verdict verdict = Verdict::Unknown;
  // Values of every real/bool symbol visible at check time (Sat only).
  std::map<std::string, SolverValue> values;
  std::map<std::string, bool> bool_values;
  // Failed assumption labels (Unsat under assumptions only).
  std::vector<std::string> unsat_core;
  long long elapsed_ms = 0;
};

class SolverSession {
 public:
  // Spawns the solver and applies the session options (model and core
  // production, the time limit, printing precision, seed, logic). Throws
  // SolverError on bad config, spawn failure, or rejected options.
  explicit SolverSession(SolverConfig cfg = {});
  ~SolverSession();

  SolverSession(const SolverSession&) = delete;
  SolverSession& operator=(const SolverSession&) = delete;

  void declare_reals(const std::vector<std::string>& names);
  void declare_bools(const std::vector<std::string>& names);

  // Asserts a closed formula over the declared symbols. With a label, the
  // assertion only takes effect when the label is passed to check(), and
  // failed labels can appear in the unsat core: the label is declared as a
  // guard boolean and the formula asserted as (=> label formula).
  void assert_formula(const std::string& text, const std::string& label = "");

  void push();
  void pop();
  int depth() const { return static_cast<int>(scopes_.size()) - 1; }

  // check(): plain check-sat over everything asserted unconditionally.
  // check(assumptions): additionally assumes the given guard labels; an
  // Unsat answer carries a solver-minimized core drawn from them.
  // Sat answers carry values for every visible symbol. Unknown (timeout or
  // give-up) is an ordinary outcome, not an error.
  CheckResult check();
  CheckResult check(const std::vector<std::string>& assumptions);

  // Wipes all state (assertions, declarations, scopes) and reapplies the
  // session options, yielding a functionally fresh session in-process.
  void reset();

  bool alive() const;
  bool declared(const std::string& name) const { return is_declared(name); }
  int pid() const { return pid_; }
  const SolverConfig& config() const { return cfg_; }

 private:
  struct Scope {
    std::vector<std::string> names;  // symbols declared in this scope
  };

  void validate_config() const;
  void spawn();
  void handshake();
  void shutdown() noexcept;
  void ensure_usable() const;
  void fail_crashed(const std::string& why);

  // Sends `commands` followed by a sentinel echo and returns everything the
  // solver printed before the sentinel. `what` names the operation in error
  // messages. Throws SolverError when the output contains solver errors and
  // `strict` is set; throws SolverCrash on EOF/deadline.
  std::string transact(const std::string& commands, const std::string& what,
                       bool strict, long long deadline_ms);

  void declare(const std::vector<std::string>& names, const std::string& sort);
  bool is_declared(const std::string& name) const;
  void note_symbol(const std::string& name);

  CheckResult run_check(const std::vector<std::string>& assumptions);
  void collect_values(CheckResult& result);

  SolverConfig cfg_;
  int pid_ = -1;
  int to_child_ = -1;    // write end
  int from_child_ = -1;  // read end
  std::string inbuf_;
  long long sentinel_counter_ = 0;
  bool poisoned_ = false;
  std::string poison_reason_;
  std::vector<Scope> scopes_;  // scopes_[0] is the base scope
  std::vector<std::string> real_symbols_;  // in declaration order
  std::vector<std::string> bool_symbols_;
};

}  // namespace sade
