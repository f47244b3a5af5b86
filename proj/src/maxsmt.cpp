#include "sade/maxsmt.hpp"

#include <chrono>
#include <string>
#include <vector>

namespace sade {

namespace {

long long now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
}

std::string disjunction(const std::string& formula, const std::vector<std::string>& relax) {
  if (relax.empty()) return formula;
  std::string out = "(or " + formula;
  for (const std::string& b : relax) out += " " + b;
  out += ")";
  return out;
}

}  // namespace

MaxSmtResult max_smt(SolverSession& s, const MaxSmtProblem& p) {
  MaxSmtResult result;
  const long long started = now_ms();
  const std::size_t m = p.soft.size();

  // relax[i] holds one relaxation bool per completed round; round r's bools
  // are pairwise exclusive, so r rounds buy exactly r violations.
  std::vector<std::vector<std::string>> relax(m);
  std::vector<std::string> indicators(m);
  for (std::size_t i = 0; i < m; ++i) indicators[i] = "fm_ind_" + std::to_string(i);

  // Every check is a one-shot replay on a freshly reset session. Quantified
  // hard constraints (domain constraints over the whole feature box) are
  // decided quickly only on an untouched assertion stack: scopes,
  // assumptions or named assertions all push the backend onto a far weaker
  // incremental path that routinely returns unknown.
  auto replay = [&](bool with_softs) {
    s.reset();
    if (!p.real_symbols.empty()) s.declare_reals(p.real_symbols);
    for (const std::string& h : p.hard) s.assert_formula(h);
    if (!with_softs) return;
    s.declare_bools(indicators);
    std::vector<std::string> bools;
    for (const auto& r : relax)
      for (const std::string& b : r) bools.push_back(b);
    s.declare_bools(bools);
    for (std::size_t i = 0; i < m; ++i) {
      // The indicator tracks the original soft so the final report counts
      // real satisfaction, not relaxed satisfaction.
      s.assert_formula("(= " + indicators[i] + " " + p.soft[i] + ")");
      s.assert_formula(disjunction(p.soft[i], relax[i]));
    }
    const std::size_t rounds_done = relax.empty() ? 0 : relax[0].size();
    for (std::size_t r = 0; r < rounds_done; ++r)
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a + 1; b < m; ++b)
          s.assert_formula("(or (not " + relax[a][r] + ") (not " + relax[b][r] + "))");
  };

  // The hard constraints alone decide Unsat; softs can only be relaxed away.
  replay(/*with_softs=*/false);
  CheckResult pre = s.check();
  result.elapsed_ms = now_ms() - started;
  if (pre.verdict != Verdict::Sat) {
    result.verdict = pre.verdict;
    return result;
  }
  if (p.soft.empty()) {
    result.verdict = Verdict::Sat;
    result.params = pre.values;
    result.elapsed_ms = now_ms() - started;
    return result;
  }

  for (int round = 1;; ++round) {
    // Each round increases the violation budget by exactly one, so more
    // than |soft| + 1 checks means something is wrong with the backend.
    if (round > static_cast<int>(m) + 1) {
      result.verdict = Verdict::Unknown;
      result.elapsed_ms = now_ms() - started;
      return result;
    }

    replay(/*with_softs=*/true);
    CheckResult r = s.check();
    ++result.rounds;
    result.elapsed_ms = now_ms() - started;
    if (r.verdict == Verdict::Unknown) {
      result.verdict = Verdict::Unknown;
      return result;
    }
    if (r.verdict == Verdict::Sat) {
      result.verdict = Verdict::Sat;
      result.params = r.values;
      for (std::size_t i = 0; i < m; ++i)
        if (r.bool_values.at(indicators[i])) result.satisfied.push_back(i);
      return result;
    }

    // Unsat: grant one more violation by relaxing every soft with a fresh
    // bool for this round (one-shot checks yield no cores, and a superset
    // of a core is still a core, so optimality is unaffected).
    for (std::size_t i = 0; i < m; ++i)
      relax[i].push_back("fm_b_" + std::to_string(i) + "_" + std::to_string(round));
  }
}

MaxSmtResult max_smt(const MaxSmtProblem& p, const SolverConfig& cfg) {
  SolverSession s(cfg);
  return max_smt(s, p);
}

}  // namespace sade
