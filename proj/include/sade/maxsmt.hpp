#pragma once

#include <map>
#include <string>
#include <vector>

#include "sade/smt.hpp"

namespace sade {

// Maximize the number of satisfied soft constraints subject to hard ones,
// by iterative relaxation: while the softs conflict with the hard part,
// every soft gains a fresh relaxation disjunct, with an at-most-one side
// constraint per round so each round buys exactly one violation. The first
// satisfiable round is therefore an optimum.

struct MaxSmtProblem {
  // The problem must be self-contained: hard constraints, softs and every
  // real symbol they mention. Nothing already on the session carries over.
  std::vector<std::string> hard;
  std::vector<std::string> soft;
  std::vector<std::string> real_symbols;
};

struct MaxSmtResult {
  Verdict verdict = Verdict::Unknown;
  // Assignment for every visible real symbol (Sat only).
  std::map<std::string, SolverValue> params;
  // Ascending indices of softs whose original formula holds under `params`.
  std::vector<std::size_t> satisfied;
  // check-sat calls in the optimization loop (0 when the hard constraints
  // alone already settle the answer).
  int rounds = 0;
  long long elapsed_ms = 0;

  std::size_t satisfied_count() const { return satisfied.size(); }
};

// Every check runs as a one-shot replay: the session is reset and the whole
// problem re-asserted, because scopes, assumptions and named assertions all
// force the backend onto a weaker incremental path that fails on quantified
// hard constraints. Reusing one session across calls only saves the process
// spawn; prior assertions and declarations do not survive a call. Verdicts:
// Unsat means the hard constraints alone are unsatisfiable; Unknown means
// some inner check timed out or gave up. Crashes propagate as SolverCrash.
MaxSmtResult max_smt(SolverSession& s, const MaxSmtProblem& p);

// Convenience form that spins up a dedicated session.
MaxSmtResult max_smt(const MaxSmtProblem& p, const SolverConfig& cfg);

}  // namespace sade
