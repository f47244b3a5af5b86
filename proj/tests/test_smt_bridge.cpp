#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <csignal>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sade/constraint.hpp"
#include "sade/model.hpp"
#include "sade/smt.hpp"

using namespace sade;

namespace {

SolverConfig quick_config(int timeout_ms = 5000) {
  SolverConfig cfg;
  cfg.per_check_timeout_ms = timeout_ms;
  return cfg;
}

Rational rat(long long p, long long q = 1) { return Rational(p) / Rational(q); }

// A quantified nonlinear problem far beyond what any solver finishes in a
// few milliseconds (unbounded runs exceed minutes), used to exercise the
// time limit path.
const char* kHardQuantified =
    "(forall ((x Real) (y Real))"
    " (=> (and (<= 0 x) (<= x 1) (<= 0 y) (<= y 1))"
    " (>= (+ (* a x x x x y y) (* b x x y y y) (* c x y)"
    " (* x x x y y y) (- (* 7 x y x y)) 1) 0)))";

Dataset regression_shell(std::size_t dim) {
  Dataset d;
  d.schema.task = TaskKind::MultiTargetRegression;
  for (std::size_t i = 0; i < dim; ++i) {
    std::string name = "f" + std::to_string(i);
    d.features.push_back({name, name, false, ""});
    d.schema.columns.push_back({name, ColumnKind::Numeric});
  }
  d.target_names.push_back("t0");
  d.schema.columns.push_back({"t0", ColumnKind::Target});
  d.y_max.assign(1, 1.0);
  return d;
}

}  // namespace

TEST_CASE("a fresh session answers check-sat on nothing") {
  SolverSession s(quick_config());
  CHECK(s.alive());
  CHECK(s.depth() == 0);
  CheckResult r = s.check();
  CHECK(r.verdict == Verdict::Sat);
  CHECK(r.values.empty());
  CHECK(r.bool_values.empty());
  CHECK(r.unsat_core.empty());
  CHECK(r.elapsed_ms >= 0);
  CHECK(verdict_name(r.verdict) == "sat");
}

TEST_CASE("configuration and spawn failures are reported") {
  SolverConfig bad_timeout = quick_config(0);
  CHECK_THROWS_AS(SolverSession{bad_timeout}, SolverError);

  SolverConfig bad_precision = quick_config();
  bad_precision.decimal_precision = 0;
  CHECK_THROWS_AS(SolverSession{bad_precision}, SolverError);

  SolverConfig bad_path = quick_config();
  bad_path.solver_command = {"/nonexistent/smt-solver-binary"};
  CHECK_THROWS_WITH_AS(SolverSession{bad_path},
                       doctest::Contains("/nonexistent/smt-solver-binary"), SolverError);

  SolverConfig bad_logic = quick_config();
  bad_logic.logic = "NOSUCHLOGIC42";
  CHECK_THROWS_AS(SolverSession{bad_logic}, SolverError);
}

TEST_CASE("declared symbols are usable and duplicates are rejected") {
  SolverSession s(quick_config());
  s.declare_reals({"w_0_0", "w_0_1"});
  s.assert_formula("(> w_0_0 0)");
  CheckResult r = s.check();
  REQUIRE(r.verdict == Verdict::Sat);
  REQUIRE(r.values.count("w_0_0") == 1);
  REQUIRE(r.values.count("w_0_1") == 1);
  CHECK(r.values.at("w_0_0").value > 0);
  CHECK_FALSE(r.values.at("w_0_0").approximate);

  CHECK_THROWS_WITH_AS(s.declare_reals({"w_0_0"}), doctest::Contains("already declared"),
                       SolverError);
  CHECK_THROWS_AS(s.declare_reals({"fresh", "fresh"}), SolverError);
  CHECK_THROWS_AS(s.declare_reals({"two words"}), SolverError);
  CHECK_THROWS_AS(s.declare_reals({"9starts_with_digit"}), SolverError);
  CHECK_THROWS_AS(s.declare_reals({""}), SolverError);

  // A big batch: every declared real shows up in the next Sat assignment.
  std::vector<std::string> many;
  for (int i = 0; i < 100; ++i) many.push_back("r" + std::to_string(i));
  s.declare_reals(many);
  s.assert_formula("(> (+ r0 r99) 5)");
  r = s.check();
  REQUIRE(r.verdict == Verdict::Sat);
  CHECK(r.values.size() == 102);
  for (const std::string& name : many) CHECK(r.values.count(name) == 1);
  CHECK(r.values.at("r0").value + r.values.at("r99").value > 5);
}

TEST_CASE("contradictory unlabeled assertions are unsatisfiable") {
  SolverSession s(quick_config());
  s.declare_reals({"a"});
  s.assert_formula("(> a 0)");
  s.assert_formula("(< a 0)");
  CheckResult r = s.check();
  CHECK(r.verdict == Verdict::Unsat);
  CHECK(r.unsat_core.empty());  // cores only exist relative to assumptions
  CHECK(r.values.empty());
}

TEST_CASE("labeled assertions drive assumptions and cores") {
  SolverSession s(quick_config());
  s.declare_reals({"a"});
  s.assert_formula("(> a 0)");            // hard
  s.assert_formula("(> a 2)", "s1");      // soft
  s.assert_formula("(< a 1)", "s2");      // soft

  CheckResult r = s.check({"s1", "s2"});
  REQUIRE(r.verdict == Verdict::Unsat);
  REQUIRE_FALSE(r.unsat_core.empty());
  std::set<std::string> core(r.unsat_core.begin(), r.unsat_core.end());
  for (const std::string& label : core) CHECK((label == "s1" || label == "s2"));

  // Core validity: the core members' formulas plus the hard assertions are
  // jointly unsatisfiable on their own.
  const std::map<std::string, std::string> soft_text = {{"s1", "(> a 2)"},
                                                        {"s2", "(< a 1)"}};
  s.push();
  for (const std::string& label : core) s.assert_formula(soft_text.at(label));
  CHECK(s.check().verdict == Verdict::Unsat);
  s.pop();

  r = s.check({"s1"});
  REQUIRE(r.verdict == Verdict::Sat);
  CHECK(r.values.at("a").value > 2);
  CHECK(r.bool_values.at("s1"));

  r = s.check({"s2"});
  REQUIRE(r.verdict == Verdict::Sat);
  CHECK(r.values.at("a").value < 1);
  CHECK(r.values.at("a").value > 0);

  CHECK(s.check().verdict == Verdict::Sat);  // hard alone

  CHECK_THROWS_WITH_AS(s.check({"nosuchlabel"}), doctest::Contains("nosuchlabel"),
                       SolverError);
}

TEST_CASE("malformed formulas are rejected with the offending text") {
  SolverSession s(quick_config());
  s.declare_reals({"a"});

  CHECK_THROWS_WITH_AS(s.assert_formula("(> a"), doctest::Contains("(> a"), SolverError);
  CHECK_THROWS_WITH_AS(s.assert_formula("(> a 0) (< a 1)"),
                       doctest::Contains("exactly one"), SolverError);

  // Well-formed s-expression the solver itself rejects: the message carries
  // both the formula and the solver's complaint, and the session survives.
  CHECK_THROWS_WITH_AS(s.assert_formula("(> a undeclared_sym)"),
                       doctest::Contains("undeclared_sym"), SolverError);
  CHECK(s.check().verdict == Verdict::Sat);

  CHECK_THROWS_AS(s.assert_formula("(> a 0)", "two words"), SolverError);
  s.assert_formula("(> a 0)", "g");
  CHECK_THROWS_WITH_AS(s.assert_formula("(< a 1)", "g"), doctest::Contains("already"),
                       SolverError);
}

TEST_CASE("open interval solutions come back as exact rationals") {
  SolverSession s(quick_config());
  s.declare_reals({"a", "p", "q", "r"});
  s.assert_formula("(> a 0)");
  s.assert_formula("(< a 1)");
  s.assert_formula("(= p (/ 5 2))");
  s.assert_formula("(= q (- (/ 7 3)))");
  s.assert_formula("(= r 12.25)");
  CheckResult res = s.check();
  REQUIRE(res.verdict == Verdict::Sat);
  CHECK(res.values.at("a").value > 0);
  CHECK(res.values.at("a").value < 1);
  CHECK(res.values.at("p").value == rat(5, 2));
  CHECK(res.values.at("q").value == rat(-7, 3));
  CHECK(res.values.at("r").value == rat(49, 4));
  for (const auto& [name, v] : res.values) {
    (void)name;
    CHECK_FALSE(v.approximate);
  }
}

TEST_CASE("irrational algebraic values fall back to flagged decimals") {
  SolverSession s(quick_config());
  s.declare_reals({"c"});
  s.assert_formula("(and (= (* c c) 2) (> c 0))");
  CheckResult r = s.check();
  REQUIRE(r.verdict == Verdict::Sat);
  const SolverValue& c = r.values.at("c");
  CHECK(c.approximate);  // sqrt(2) has no exact rational printing
  double cd = to_double(c.value);
  CHECK(cd == doctest::Approx(1.4142135623730951).epsilon(1e-12));
  CHECK(std::abs(cd * cd - 2.0) < 1e-15);
}

TEST_CASE("a symbolic quantified constraint yields a workable model") {
  SolverSession s(quick_config());
  s.declare_reals({"a", "b"});
  s.assert_formula(
      "(forall ((x Real)) (=> (and (<= 0 x) (<= x 1)) (> (+ (* a x) b) 0)))");
  s.assert_formula("(< a 0)");  // force the slope down so b has to compensate
  CheckResult r = s.check();
  REQUIRE(r.verdict == Verdict::Sat);
  Rational av = r.values.at("a").value;
  Rational bv = r.values.at("b").value;

  // An affine function positive at both ends of [0,1] is positive on all of
  // it, so the returned pair must satisfy b > 0 and a + b > 0.
  CHECK(bv > 0);
  CHECK(av + bv > 0);
  CHECK(av < 0);

  // Solver-side recheck with the concrete values substituted in.
  s.push();
  s.assert_formula("(forall ((x Real)) (=> (and (<= 0 x) (<= x 1)) (> (+ (* " +
                   smt_literal(av) + " x) " + smt_literal(bv) + ") 0)))");
  CHECK(s.check().verdict == Verdict::Sat);
  s.pop();

  // The same ground formula with an inadmissible pair is unsatisfiable.
  s.push();
  s.assert_formula(
      "(forall ((x Real)) (=> (and (<= 0 x) (<= x 1)) (> (+ (* 1 x) (- 1)) 0)))");
  CHECK(s.check().verdict == Verdict::Unsat);
  s.pop();
}

TEST_CASE("timeouts surface as unknown verdicts, not errors") {
  SolverSession s(quick_config(1));
  s.declare_reals({"a", "b", "c"});
  s.assert_formula(kHardQuantified);
  s.assert_formula("(> (+ (* a a b) (* b b c) (* c c a)) 3)");
  s.assert_formula("(< (* a b c) (- 1))");
  CheckResult r = s.check();
  CHECK(r.verdict == Verdict::Unknown);
  CHECK(r.elapsed_ms >= 1);
  CHECK(r.elapsed_ms < 60000);
  CHECK(r.values.empty());
  CHECK(s.alive());
}

TEST_CASE("scopes discard assertions and declarations") {
  SolverSession s(quick_config());
  s.declare_reals({"a"});
  s.assert_formula("(> a 5)");

  s.push();
  CHECK(s.depth() == 1);
  s.assert_formula("(< a 0)");
  CHECK(s.check().verdict == Verdict::Unsat);
  s.pop();
  CHECK(s.depth() == 0);
  CHECK(s.check().verdict == Verdict::Sat);

  CHECK_THROWS_WITH_AS(s.pop(), doctest::Contains("depth is 0"), SolverError);

  s.push();
  s.declare_reals({"u"});
  s.assert_formula("(> u 10)");
  s.push();
  s.declare_reals({"v"});
  s.assert_formula("(< v u)");
  s.push();
  CHECK(s.depth() == 3);
  s.assert_formula("(< u 0)");
  CHECK(s.check().verdict == Verdict::Unsat);
  s.pop();
  CHECK(s.check().verdict == Verdict::Sat);
  s.pop();
  s.pop();
  CHECK(s.depth() == 0);

  // The popped declarations are really gone: the names are reusable and the
  // popped assertions no longer constrain anything.
  s.declare_reals({"u"});
  s.assert_formula("(< u 0)");
  CheckResult r = s.check();
  REQUIRE(r.verdict == Verdict::Sat);
  CHECK(r.values.count("v") == 0);
  CHECK(r.values.at("u").value < 0);
}

TEST_CASE("satisfying assignments satisfy every asserted formula") {
  SolverSession s(quick_config());
  std::mt19937_64 rng(2026);
  std::uniform_int_distribution<int> coef(-4, 4);
  std::uniform_int_distribution<int> rhs(-5, 5);
  std::uniform_int_distribution<int> op_pick(0, 3);
  const char* ops[] = {"<", "<=", ">", ">="};

  int sats = 0;
  for (int trial = 0; trial < 30; ++trial) {
    struct Row {
      int ca, cb, rhs;
      int op;
    };
    std::vector<Row> rows;
    for (int i = 0; i < 3; ++i) rows.push_back({coef(rng), coef(rng), rhs(rng), op_pick(rng)});

    s.push();
    s.declare_reals({"p", "q"});
    for (const Row& row : rows) {
      s.assert_formula("(" + std::string(ops[row.op]) + " (+ (* " +
                       std::to_string(row.ca) + " p) (* " + std::to_string(row.cb) +
                       " q)) " + std::to_string(row.rhs) + ")");
    }
    CheckResult r = s.check();
    if (r.verdict == Verdict::Sat) {
      ++sats;
      Rational pv = r.values.at("p").value;
      Rational qv = r.values.at("q").value;
      for (const Row& row : rows) {
        Rational lhs = Rational(row.ca) * pv + Rational(row.cb) * qv;
        Rational right(row.rhs);
        bool holds = row.op == 0   ? lhs < right
                     : row.op == 1 ? lhs <= right
                     : row.op == 2 ? lhs > right
                                   : lhs >= right;
        CHECK(holds);
      }
    }
    s.pop();
  }
  CHECK(sats >= 5);  // the property must not hold vacuously
}

TEST_CASE("a killed solver poisons the session and a new one recovers") {
  SolverSession s(quick_config());
  CHECK(s.check().verdict == Verdict::Sat);

  ::kill(s.pid(), SIGKILL);
  CHECK_THROWS_AS(s.check(), SolverCrash);
  CHECK_FALSE(s.alive());
  CHECK_THROWS_AS(s.check(), SolverCrash);          // stays poisoned
  CHECK_THROWS_AS(s.assert_formula("true"), SolverCrash);

  SolverSession fresh(quick_config());
  fresh.declare_reals({"a"});
  fresh.assert_formula("(> a 0)");
  CheckResult r = fresh.check();
  REQUIRE(r.verdict == Verdict::Sat);
  CHECK(r.values.at("a").value > 0);
}

TEST_CASE("reset yields a fresh session in place") {
  SolverSession s(quick_config());
  s.declare_reals({"a"});
  s.assert_formula("(> a 0)");
  s.assert_formula("(< a 0)");
  CHECK(s.check().verdict == Verdict::Unsat);

  s.reset();
  CHECK(s.depth() == 0);
  CHECK(s.check().verdict == Verdict::Sat);
  s.declare_reals({"a"});  // the old declaration is gone
  s.assert_formula("(> a 3)");
  CheckResult r = s.check();
  REQUIRE(r.verdict == Verdict::Sat);
  CHECK(r.values.at("a").value > 3);
}

TEST_CASE("model rows agree with exact prediction through the solver") {
  Dataset d = regression_shell(2);
  LinearModel m = make_model(d);
  m.set_weights({{rat(1, 3), rat(-2), rat(5, 4)}});

  std::vector<double> x = {0.375, 2.5};  // exact binary fractions
  Rational expected = predict_rational(m, x)[0];

  SolverSession s(quick_config());
  s.declare_reals({"x_0", "x_1", "f"});
  s.assert_formula("(= x_0 (/ 3 8))");
  s.assert_formula("(= x_1 (/ 5 2))");
  s.assert_formula("(= f " +
                   emit_affine(m, 0, std::vector<std::string>{"x_0", "x_1"},
                               /*symbolic=*/false) +
                   ")");
  CheckResult r = s.check();
  REQUIRE(r.verdict == Verdict::Sat);
  CHECK(r.values.at("f").value == expected);
  CHECK(expected == rat(1, 3) * rat(3, 8) + rat(-2) * rat(5, 2) + rat(5, 4));
}

TEST_CASE("constraint instantiation separates admissible from violating weights") {
  Schema schema;
  schema.task = TaskKind::BinaryClassification;
  schema.columns = {{"income", ColumnKind::Numeric}, {"approved", ColumnKind::Target}};

  Dataset d;
  d.schema = schema;
  d.features.push_back({"income", "income", false, ""});
  d.target_names = {"approved"};
  d.class_names = {"no", "yes"};
  d.y_max = {1.0};

  FormulaPtr f = parse_constraint(
      "(forall (x) (=> (< (feat x income) 0.3) (< (pred x approved) 0)))", schema);
  REQUIRE(validate(*f, schema, d.target_names).empty());
  const std::vector<std::pair<double, double>> bounds = {{0.0, 1.0}};

  // f(income) = 2*income - 7/10 stays below 0 whenever income < 3/10.
  LinearModel good = make_model(d);
  good.set_weights({{rat(2), rat(-7, 10)}});
  // f(income) = 2*income - 1/2 crosses 0 at 1/4, inside the guarded region.
  LinearModel bad = make_model(d);
  bad.set_weights({{rat(2), rat(-1, 2)}});

  SolverSession s(quick_config());
  s.push();
  s.assert_formula(instantiate_universal(*f, affine_emitter(good, false), bounds));
  CHECK(s.check().verdict == Verdict::Sat);
  s.pop();
  s.push();
  s.assert_formula(instantiate_universal(*f, affine_emitter(bad, false), bounds));
  CHECK(s.check().verdict == Verdict::Unsat);
  s.pop();
}
