#include "sade/verifier.hpp"

#include <atomic>
#include <chrono>
#include <thread>

namespace sade {

namespace {

long long now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
}

struct ScopeGuard {
  SolverSession& s;
  explicit ScopeGuard(SolverSession& session) : s(session) { s.push(); }
  ~ScopeGuard() {
    try {
      s.pop();
    } catch (...) {
    }
  }
};

// Runs one constraint's negation query in a scratch scope. Sat fills
// `point`; the verdict comes back raw (Unsat = this constraint is safe).
Verdict check_negation(SolverSession& s, const NamedConstraint& c, const AffineEmitter& em,
                       const std::vector<std::pair<double, double>>& bounds,
                       const std::vector<std::string>& extra_assertions,
                       CounterexamplePoint* point) {
  NegationQuery q = instantiate_negation(*c.formula, em, bounds);
  ScopeGuard scope(s);
  s.declare_reals(q.symbols);
  for (const std::string& a : q.assertions) s.assert_formula(a);
  for (const std::string& a : extra_assertions) s.assert_formula(a);
  CheckResult r = s.check();
  if (r.verdict == Verdict::Sat && point) {
    point->clear();
    for (const auto& [var, coords] : q.var_symbols) {
      std::vector<Rational> values;
      for (const std::string& sym : coords) values.push_back(r.values.at(sym).value);
      (*point)[var] = std::move(values);
    }
  }
  return r.verdict;
}

}  // namespace

AdmissibilityVerdict prove_admissible(const LinearModel& m, const ConstraintSet& ks,
                                      const std::vector<std::pair<double, double>>& bounds,
                                      SolverSession& session) {
  AdmissibilityVerdict verdict;
  const long long started = now_ms();
  AffineEmitter em = affine_emitter(m, /*symbolic=*/false);

  bool any_unknown = false;
  for (const NamedConstraint& c : ks) {
    ConstraintCheck check;
    check.name = c.name;
    long long t0 = now_ms();
    CounterexamplePoint point;
    Verdict v;
    try {
      v = check_negation(session, c, em, bounds, {}, &point);
    } catch (const SolverCrash&) {
      throw;  // session is gone; the config overload retries with a fresh one
    } catch (const SolverError&) {
      v = Verdict::Unknown;
    }
    check.verdict = v;
    check.elapsed_ms = now_ms() - t0;
    verdict.checks.push_back(check);

    if (v == Verdict::Sat) {
      verdict.status = Admissibility::CounterexampleFound;
      verdict.violated_constraint = c.name;
      verdict.counterexample = std::move(point);
      verdict.elapsed_ms = now_ms() - started;
      return verdict;
    }
    if (v == Verdict::Unknown) any_unknown = true;
  }
  verdict.status = any_unknown ? Admissibility::Unknown : Admissibility::Proven;
  verdict.elapsed_ms = now_ms() - started;
  return verdict;
}

AdmissibilityVerdict prove_admissible(const LinearModel& m, const ConstraintSet& ks,
                                      const std::vector<std::pair<double, double>>& bounds,
                                      const SolverConfig& cfg) {
  for (int attempt = 0;; ++attempt) {
    SolverSession session(cfg);
    try {
      return prove_admissible(m, ks, bounds, session);
    } catch (const SolverCrash&) {
      if (attempt >= 1) throw;
    }
  }
}

BallResult find_counterexample_near(const LinearModel& m, const ConstraintSet& ks,
                                    const Dataset& d, const std::vector<double>& x0,
                                    double delta, SolverSession& session) {
  if (!(delta > 0)) throw VerifierError("counterexample search: delta must be positive");
  if (d.bounds.size() != d.dim())
    throw VerifierError("counterexample search: dataset has no bounds; compute them first");
  if (x0.size() != d.dim())
    throw VerifierError("counterexample search: instance has " + std::to_string(x0.size()) +
                        " coordinates, dataset has " + std::to_string(d.dim()));

  AffineEmitter em = affine_emitter(m, /*symbolic=*/false);
  const Rational delta_r = rational_from_decimal_of(delta);

  BallResult result;
  bool any_unknown = false;
  for (const NamedConstraint& c : ks) {
    if (c.formula->kind != FormulaKind::Forall || c.formula->vars.empty())
      throw VerifierError("counterexample search: constraint '" + c.name +
                          "' is not universally quantified");
    // The ball centers the first quantified variable on the instance; any
    // further variables stay free inside the global bounds.
    const std::string& var = c.formula->vars.front();
    std::vector<std::string> ball;
    for (std::size_t j = 0; j < d.dim(); ++j) {
      const std::string sym = var + "_" + std::to_string(j);
      const Rational center = rational_from_double(x0[j]);
      if (d.features[j].one_hot) {
        ball.push_back("(= " + sym + " " + smt_literal(center) + ")");
      } else {
        ball.push_back("(<= " + smt_literal(center - delta_r) + " " + sym + ")");
        ball.push_back("(<= " + sym + " " + smt_literal(center + delta_r) + ")");
      }
    }

    CounterexamplePoint point;
    Verdict v;
    try {
      v = check_negation(session, c, em, d.bounds, ball, &point);
    } catch (const SolverCrash&) {
      throw;
    } catch (const SolverError&) {
      v = Verdict::Unknown;
    }
    if (v == Verdict::Sat) {
      result.kind = BallSearch::Found;
      result.constraint_name = c.name;
      result.point = std::move(point);
      return result;
    }
    if (v == Verdict::Unknown) any_unknown = true;
  }
  result.kind = any_unknown ? BallSearch::Unknown : BallSearch::None;
  return result;
}

AdversityReport adversity_index(const LinearModel& m, const ConstraintSet& ks,
                                const Dataset& d, double delta, const SolverConfig& cfg,
                                std::size_t jobs) {
  if (!(delta > 0)) throw VerifierError("adversity index: delta must be positive");
  if (jobs == 0) jobs = 1;
  jobs = std::min(jobs, std::max<std::size_t>(d.n(), 1));

  AdversityReport report;
  report.delta = delta;
  report.total = d.n();
  // Pre-marked Unknown: work a dying worker never reaches stays visible.
  report.per_instance.assign(d.n(), BallResult{BallSearch::Unknown, "", {}});
  const long long started = now_ms();

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    auto session = std::make_unique<SolverSession>(cfg);
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= d.n()) return;
      for (int attempt = 0;; ++attempt) {
        try {
          report.per_instance[i] =
              find_counterexample_near(m, ks, d, d.instances[i].x, delta, *session);
          break;
        } catch (const SolverCrash&) {
          if (attempt >= 1) {
            report.per_instance[i].kind = BallSearch::Unknown;
            break;
          }
          session = std::make_unique<SolverSession>(cfg);  // retry once, fresh
        }
      }
    }
  };

  if (jobs == 1) {
    worker();  // failures propagate to the caller directly
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t)
      pool.emplace_back([&worker]() {
        try {
          worker();
        } catch (...) {
          // This worker's unclaimed instances stay Unknown; siblings go on.
        }
      });
    for (std::thread& t : pool) t.join();
  }

  for (const BallResult& r : report.per_instance) {
    switch (r.kind) {
      case BallSearch::Found: ++report.found; break;
      case BallSearch::None: ++report.none; break;
      case BallSearch::Unknown: ++report.unknown; break;
    }
  }
  report.adi = report.total == 0 ? 0.0
                                 : static_cast<double>(report.found) /
                                       static_cast<double>(report.total);
  report.elapsed_ms = now_ms() - started;
  return report;
}

}  // namespace sade
