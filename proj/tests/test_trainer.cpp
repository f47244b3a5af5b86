#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "sade/synthetic.hpp"
#include "sade/trainer.hpp"
#include "sade/verifier.hpp"

using namespace sade;

namespace {

SolverConfig quick_config() { return {}; }

Rational rat(long long p, long long q = 1) { return Rational(p) / Rational(q); }

// One numeric feature `v`; y holds +/-1 labels (binary) or raw targets
// (regression). Bounds [0,1].
Dataset tiny_dataset(TaskKind task, const std::vector<std::pair<double, double>>& rows,
                     double y_max = 1.0) {
  const std::string target = task == TaskKind::MultiTargetRegression ? "out" : "label";
  Dataset d;
  d.schema.task = task;
  d.schema.columns = {{"v", ColumnKind::Numeric}, {target, ColumnKind::Target}};
  d.features.push_back({"v", "v", false, ""});
  d.target_names = {target};
  if (task != TaskKind::MultiTargetRegression) d.class_names = {"neg", "pos"};
  d.y_max = {y_max};
  for (const auto& [x, y] : rows) d.instances.push_back({{x}, {y}});
  d.bounds = {{0.0, 1.0}};
  return d;
}

Batch whole_set(const Dataset& d) {
  Batch b;
  for (std::size_t i = 0; i < d.n(); ++i) b.instance_ids.push_back(i);
  return b;
}

// Checks satisfiability of the session's assertions plus `extra`, inside a
// throwaway scope.
Verdict probe(SolverSession& s, const std::vector<std::string>& extra) {
  s.push();
  for (const std::string& e : extra) s.assert_formula(e);
  const Verdict v = s.check().verdict;
  s.pop();
  return v;
}

std::size_t count_violations(const LinearModel& m, const Dataset& d, const ConstraintSet& ks) {
  PointEvalContext ctx;
  ctx.feature_names = d.feature_names();
  ctx.target_names = d.target_names;
  ctx.predict = [&](const std::vector<double>& x) { return predict_rational(m, x); };
  std::size_t bad = 0;
  for (const Instance& inst : d.instances) {
    for (const NamedConstraint& k : ks) {
      if (!eval_on_point(*k.formula, {{k.formula->vars[0], &inst}}, ctx)) {
        ++bad;
        break;
      }
    }
  }
  return bad;
}

}  // namespace

TEST_CASE("config validation rejects out-of-range fields") {
  TrainConfig cfg;
  CHECK_NOTHROW(validate_train_config(cfg, TaskKind::BinaryClassification));
  CHECK_NOTHROW(validate_train_config(cfg, TaskKind::MultiTargetRegression));

  TrainConfig bad = cfg;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(validate_train_config(bad, TaskKind::BinaryClassification), TrainError);
  bad = cfg;
  bad.param_bound = -1.0;
  CHECK_THROWS_AS(validate_train_config(bad, TaskKind::BinaryClassification), TrainError);
  bad = cfg;
  bad.classification_thresholds = {};
  CHECK_THROWS_AS(validate_train_config(bad, TaskKind::BinaryClassification), TrainError);
  CHECK_NOTHROW(validate_train_config(bad, TaskKind::MultiTargetRegression));
  bad = cfg;
  bad.classification_thresholds = {0.0, 1.0, 1.0};
  CHECK_THROWS_AS(validate_train_config(bad, TaskKind::MulticlassClassification), TrainError);
  bad = cfg;
  bad.regression_threshold_coeffs = {0.2, 0.1};
  CHECK_THROWS_AS(validate_train_config(bad, TaskKind::MultiTargetRegression), TrainError);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(validate_train_config(bad, TaskKind::BinaryClassification), TrainError);
}

TEST_CASE("the descent box sits on the side the negative gradient points to") {
  Dataset d = tiny_dataset(TaskKind::BinaryClassification, {{0.5, 1.0}});
  LinearModel m = make_model(d);

  SolverSession s(quick_config());
  s.declare_reals(weight_symbols(m));

  SUBCASE("positive gradient shrinks, negative gradient grows") {
    m.set_weights({{rat(1), rat(1)}});
    const std::string box = box_constraint(m, {{0.3, -0.2}}, 0.5);
    s.assert_formula(box);
    // w_0_0 in [1/2, 1], w_0_1 in [1, 3/2]
    CHECK(probe(s, {"(= w_0_0 (/ 1 2))"}) == Verdict::Sat);
    CHECK(probe(s, {"(= w_0_0 1)"}) == Verdict::Sat);
    CHECK(probe(s, {"(< w_0_0 (/ 1 2))"}) == Verdict::Unsat);
    CHECK(probe(s, {"(> w_0_0 1)"}) == Verdict::Unsat);
    CHECK(probe(s, {"(= w_0_1 (/ 3 2))"}) == Verdict::Sat);
    CHECK(probe(s, {"(< w_0_1 1)"}) == Verdict::Unsat);
    CHECK(probe(s, {"(> w_0_1 (/ 3 2))"}) == Verdict::Unsat);
  }

  SUBCASE("a zero gradient coordinate is treated as positive") {
    m.set_weights({{rat(1), rat(1)}});
    s.assert_formula(box_constraint(m, {{0.0, 0.5}}, 0.5));
    CHECK(probe(s, {"(= w_0_0 (/ 1 2))"}) == Verdict::Sat);
    CHECK(probe(s, {"(> w_0_0 1)"}) == Verdict::Unsat);
  }

  SUBCASE("all-positive gradient at the origin boxes every weight into [-alpha, 0]") {
    m.set_weights({{rat(0), rat(0)}});
    s.assert_formula(box_constraint(m, {{0.1, 0.2}}, 1.0));
    CHECK(probe(s, {"(= w_0_0 (- 1))", "(= w_0_1 (- 1))"}) == Verdict::Sat);
    CHECK(probe(s, {"(> w_0_0 0)"}) == Verdict::Unsat);
    CHECK(probe(s, {"(< w_0_1 (- 1))"}) == Verdict::Unsat);
  }

  SUBCASE("gradient shape mismatches are rejected") {
    CHECK_THROWS_AS(box_constraint(m, {{0.1}}, 0.5), TrainError);
    CHECK_THROWS_AS(box_constraint(m, {{0.1, 0.2}, {0.3, 0.4}}, 0.5), TrainError);
  }
}

TEST_CASE("decision constraints state per-threshold margins for each instance") {
  SUBCASE("classification emits score > tau / score < -tau") {
    Dataset d = tiny_dataset(TaskKind::BinaryClassification, {{0.5, 1.0}, {0.5, -1.0}});
    LinearModel m = make_model(d);
    TrainConfig cfg;
    cfg.classification_thresholds = {0.0, 1.0, 2.0};

    Batch pos;
    pos.instance_ids = {0};
    const auto softs = decision_constraints(d, pos, m, cfg);
    REQUIRE(softs.size() == 3);

    SolverSession s(quick_config());
    s.declare_reals(weight_symbols(m));
    // With w=0, b=3 the score is 3: above every threshold.
    for (const std::string& soft : softs)
      CHECK(probe(s, {soft, "(= w_0_0 0)", "(= w_0_1 3)"}) == Verdict::Sat);
    // Score 3/2 clears tau=0 and tau=1 but not tau=2.
    CHECK(probe(s, {softs[1], "(= w_0_0 0)", "(= w_0_1 (/ 3 2))"}) == Verdict::Sat);
    CHECK(probe(s, {softs[2], "(= w_0_0 0)", "(= w_0_1 (/ 3 2))"}) == Verdict::Unsat);
    // Exactly tau is not enough: the margin is strict.
    CHECK(probe(s, {softs[1], "(= w_0_0 0)", "(= w_0_1 1)"}) == Verdict::Unsat);

    Batch neg;
    neg.instance_ids = {1};
    const auto neg_softs = decision_constraints(d, neg, m, cfg);
    REQUIRE(neg_softs.size() == 3);
    // Negative label wants score < -tau: score -2 clears tau=1, score -1/2 does not.
    CHECK(probe(s, {neg_softs[1], "(= w_0_0 0)", "(= w_0_1 (- 2))"}) == Verdict::Sat);
    CHECK(probe(s, {neg_softs[1], "(= w_0_0 0)", "(= w_0_1 (- (/ 1 2)))"}) == Verdict::Unsat);
  }

  SUBCASE("regression emits nested bands around the label") {
    Dataset d = tiny_dataset(TaskKind::MultiTargetRegression, {{0.5, 5.0}}, /*y_max=*/10.0);
    LinearModel m = make_model(d);
    TrainConfig cfg;
    cfg.regression_threshold_coeffs = {0.1, 0.2};

    const auto softs = decision_constraints(d, whole_set(d), m, cfg);
    REQUIRE(softs.size() == 2);  // bands 4 <= f <= 6 and 3 <= f <= 7

    SolverSession s(quick_config());
    s.declare_reals(weight_symbols(m));
    CHECK(probe(s, {softs[0], "(= w_0_0 0)", "(= w_0_1 (/ 11 2))"}) == Verdict::Sat);
    CHECK(probe(s, {softs[0], "(= w_0_0 0)", "(= w_0_1 (/ 13 2))"}) == Verdict::Unsat);
    CHECK(probe(s, {softs[1], "(= w_0_0 0)", "(= w_0_1 (/ 13 2))"}) == Verdict::Sat);
    CHECK(probe(s, {softs[1], "(= w_0_0 0)", "(= w_0_1 8)"}) == Verdict::Unsat);
    // Band edges are inclusive.
    CHECK(probe(s, {softs[0], "(= w_0_0 0)", "(= w_0_1 6)"}) == Verdict::Sat);
  }

  SUBCASE("counts multiply instances, outputs and thresholds") {
    Dataset d;
    d.schema.task = TaskKind::MulticlassClassification;
    d.schema.columns = {{"v", ColumnKind::Numeric}, {"label", ColumnKind::Target}};
    d.features.push_back({"v", "v", false, ""});
    for (int k = 0; k < 5; ++k) d.target_names.push_back("c" + std::to_string(k));
    d.class_names = d.target_names;
    d.y_max.assign(5, 1.0);
    for (int i = 0; i < 5; ++i) {
      std::vector<double> y(5, -1.0);
      y[i] = 1.0;
      d.instances.push_back({{0.1 * i}, y});
    }
    d.bounds = {{0.0, 1.0}};

    TrainConfig cfg;
    cfg.classification_thresholds = {0.0, 1.0};
    const LinearModel m = make_model(d);
    CHECK(decision_constraints(d, whole_set(d), m, cfg).size() == 50);

    Batch empty;
    CHECK_THROWS_AS(decision_constraints(d, empty, m, cfg), TrainError);
  }
}

TEST_CASE("the plateau stop fires on schedule once improvement drops below 2%") {
  TrainConfig cfg;  // start 400, every 100, window 200, min improvement 0.02

  std::vector<double> trace(400, 10.0);
  trace[399] = 9.9;  // 1% improvement over the window
  CHECK(stopping_criterion(trace, 400, cfg));
  trace[399] = 9.0;  // 10%
  CHECK_FALSE(stopping_criterion(trace, 400, cfg));

  std::vector<double> flat(399, 10.0);
  CHECK_FALSE(stopping_criterion(flat, 399, cfg));  // before the first checkpoint

  std::vector<double> off(401, 10.0);
  CHECK_FALSE(stopping_criterion(off, 401, cfg));  // off the cadence

  std::vector<double> at500(500, 10.0);
  CHECK(stopping_criterion(at500, 500, cfg));  // flat = 0% improvement

  std::vector<double> unsolved(400, std::numeric_limits<double>::infinity());
  CHECK_FALSE(stopping_criterion(unsolved, 400, cfg));  // no solution yet

  std::vector<double> perfect(400, 0.0);
  CHECK(stopping_criterion(perfect, 400, cfg));  // nothing left to improve

  TrainConfig capped = cfg;
  capped.max_iterations = 350;
  std::vector<double> any(350, 10.0);
  CHECK(stopping_criterion(any, 350, capped));
  CHECK_FALSE(stopping_criterion(any, 349, capped));
}

TEST_CASE("training on synthetic data yields a provably admissible model") {
  const SyntheticData sd = generate_synthetic({"binary-denial", 20, 0.1}, 11);
  Dataset d = sd.dataset;
  d.bounds = compute_bounds(d, sd.bound_overrides);
  const ConstraintSet ks = parse_constraint_file(sd.constraints, d.schema);
  REQUIRE_FALSE(ks.empty());

  TrainConfig cfg;
  cfg.alpha = 1.0;
  cfg.batch_size = 5;
  cfg.epochs = 3;
  cfg.classification_thresholds = {0.0, 1.0};
  cfg.seed = 7;

  const TrainedBundle bundle = sade_train(d, ks, cfg, quick_config());

  REQUIRE_FALSE(bundle.archive.empty());
  CHECK(bundle.sat_solves == bundle.archive.size());
  CHECK(bundle.iterations == bundle.loss_trace.size());
  CHECK(bundle.iterations == 12);  // 3 epochs x 4 batches, no early stop
  CHECK_FALSE(bundle.stopped_early);
  CHECK(bundle.restarts <=
        bundle.unsat_solves + bundle.unknown_solves + bundle.discarded_approximate);

  // Returned model is the loss argmin over the archive.
  const ArchiveEntry& best = bundle.archive[bundle.best_index];
  CHECK(bundle.model.weights == best.weights);
  for (const ArchiveEntry& e : bundle.archive) CHECK(best.loss <= e.loss);

  // The loss trace mirrors the archive: the entry at an archived iteration
  // is that solution's loss, and nothing precedes the first solve.
  for (const ArchiveEntry& e : bundle.archive)
    CHECK(bundle.loss_trace[e.iteration - 1] == doctest::Approx(e.loss));
  for (std::size_t t = 0; t + 1 < bundle.archive.front().iteration; ++t)
    CHECK(std::isinf(bundle.loss_trace[t]));

  // Consecutive archived solutions moved at most alpha per coordinate.
  const Rational step = rat(1);
  for (std::size_t i = 1; i < bundle.archive.size(); ++i)
    for (std::size_t k = 0; k < bundle.archive[i].weights.size(); ++k)
      for (std::size_t j = 0; j < bundle.archive[i].weights[k].size(); ++j) {
        const Rational diff =
            bundle.archive[i].weights[k][j] - bundle.archive[i - 1].weights[k][j];
        CHECK(diff <= step);
        CHECK(-diff <= step);
      }

  // The headline guarantee: the returned model satisfies the constraints
  // over the whole bounded feature space, independently re-proven.
  CHECK(prove_admissible(bundle.model, ks, d.bounds, quick_config()).proven());
}

TEST_CASE("a contradictory domain constraint fails with 'no admissible model found'") {
  Dataset d = tiny_dataset(TaskKind::MultiTargetRegression,
                           {{0.1, 0.5}, {0.4, 0.6}, {0.9, 0.7}});
  NamedConstraint never;
  never.name = "impossible";
  never.source = "(forall (x) (< (pred x out) (pred x out)))";
  never.formula = parse_constraint(never.source, d.schema);

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 5;
  CHECK_THROWS_WITH_AS(sade_train(d, {never}, cfg, quick_config()),
                       "no admissible model found", TrainError);
}

TEST_CASE("with no domain constraints every batch solves and the argmin is returned") {
  Dataset d = tiny_dataset(TaskKind::BinaryClassification,
                           {{0.1, -1.0}, {0.2, -1.0}, {0.4, -1.0},
                            {0.6, 1.0}, {0.8, 1.0}, {0.9, 1.0}});
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.epochs = 2;
  cfg.classification_thresholds = {0.0, 1.0};

  const TrainedBundle bundle = sade_train(d, {}, cfg, quick_config());
  CHECK(bundle.iterations == 6);
  CHECK(bundle.sat_solves == 6);  // the current solution is always feasible
  CHECK(bundle.archive.size() == 6);
  CHECK(bundle.model.weights == bundle.archive[bundle.best_index].weights);
  CHECK(bundle.archive[bundle.best_index].loss <= bundle.archive.front().loss);
}

TEST_CASE("the exact learner optimizes over the whole dataset at once") {
  std::vector<std::pair<double, double>> rows;
  for (int i = 0; i < 5; ++i) rows.push_back({0.05 + 0.07 * i, -1.0});
  for (int i = 0; i < 5; ++i) rows.push_back({0.65 + 0.07 * i, 1.0});
  Dataset d = tiny_dataset(TaskKind::BinaryClassification, rows);

  TrainConfig cfg;
  cfg.classification_thresholds = {0.0};

  SUBCASE("separable data satisfies every decision constraint") {
    const ExactTrainResult r = exact_maxsmt_train(d, {}, cfg, quick_config());
    CHECK(r.total_soft == 10);
    CHECK(r.satisfied.size() == 10);
    // The returned weights really do separate the data.
    for (std::size_t i = 0; i < d.n(); ++i) {
      const Rational score = predict_rational(r.model, d.instances[i].x)[0];
      if (d.instances[i].y[0] > 0)
        CHECK(score > 0);
      else
        CHECK(score < 0);
    }
  }

  SUBCASE("an instance whose label conflicts with the domain constraint is sacrificed") {
    NamedConstraint pos;
    pos.name = "always-positive";
    pos.source = "(forall (x) (> (pred x label) 0))";
    pos.formula = parse_constraint(pos.source, d.schema);
    Dataset one_bad = d;
    one_bad.instances[0].y[0] = -1.0;  // wants score < 0 inside [0,1]: impossible
    for (std::size_t i = 1; i < 5; ++i) one_bad.instances[i].y[0] = 1.0;

    const ExactTrainResult r = exact_maxsmt_train(one_bad, {pos}, cfg, quick_config());
    CHECK(r.total_soft == 10);
    CHECK(r.satisfied.size() == 9);
  }

  SUBCASE("the instance guard refuses large datasets") {
    TrainConfig small_guard = cfg;
    small_guard.exact_instance_guard = 5;
    CHECK_THROWS_AS(exact_maxsmt_train(d, {}, small_guard, quick_config()), TrainError);
  }
}

TEST_CASE("gradient descent baseline: penalties only bite when constraints are violated") {
  // y = income + 0.3, so an unconstrained fit violates "prediction stays
  // below income" almost everywhere.
  std::vector<std::pair<double, double>> rows;
  for (int i = 0; i < 30; ++i) {
    const double income = i / 29.0;
    rows.push_back({income, income + 0.3});
  }
  Dataset d = tiny_dataset(TaskKind::MultiTargetRegression, rows, /*y_max=*/1.3);

  NamedConstraint cap;
  cap.name = "prediction-below-income";
  cap.source = "(forall (x) (<= (pred x out) (feat x v)))";
  cap.formula = parse_constraint(cap.source, d.schema);
  const ConstraintSet ks = {cap};

  TrainConfig cfg;
  cfg.epochs = 120;
  cfg.batch_size = 5;
  cfg.learning_rate = 0.1;
  cfg.seed = 3;

  SUBCASE("a zero penalty weight reproduces unconstrained descent exactly") {
    const LinearModel plain = gd_train(d, cfg, 0.0, nullptr);
    const LinearModel with_ks = gd_train(d, cfg, 0.0, &ks);
    CHECK(plain.weights == with_ks.weights);

    TrainConfig other_seed = cfg;
    other_seed.seed = 4;
    CHECK(plain.weights != gd_train(d, other_seed, 0.0, nullptr).weights);
  }

  SUBCASE("a never-active penalty leaves the trajectory untouched") {
    NamedConstraint slack;
    slack.name = "very-loose";
    slack.source = "(forall (x) (>= (pred x out) (- 100)))";
    slack.formula = parse_constraint(slack.source, d.schema);
    const ConstraintSet loose = {slack};
    CHECK(gd_train(d, cfg, 5.0, &loose).weights == gd_train(d, cfg, 0.0, nullptr).weights);
  }

  SUBCASE("a large penalty weight reduces training-set violations") {
    const LinearModel plain = gd_train(d, cfg, 0.0, nullptr);
    const LinearModel penalized = gd_train(d, cfg, 50.0, &ks);
    const std::size_t before = count_violations(plain, d, ks);
    const std::size_t after = count_violations(penalized, d, ks);
    CHECK(before >= 20);  // the unconstrained fit tracks y = income + 0.3
    CHECK(after < before);
  }

  SUBCASE("constraints without a hinge form are rejected") {
    NamedConstraint disj;
    disj.name = "either-side";
    disj.source = "(forall (x) (or (< (pred x out) 0) (> (pred x out) 1)))";
    disj.formula = parse_constraint(disj.source, d.schema);
    const ConstraintSet bad = {disj};
    CHECK_THROWS_AS(gd_train(d, cfg, 1.0, &bad), TrainError);

    NamedConstraint pred_gate;
    pred_gate.name = "prediction-gated";
    pred_gate.source = "(forall (x) (=> (> (pred x out) 0) (< (pred x out) 1)))";
    pred_gate.formula = parse_constraint(pred_gate.source, d.schema);
    const ConstraintSet gated = {pred_gate};
    CHECK_THROWS_AS(gd_train(d, cfg, 1.0, &gated), TrainError);

    // lambda = 0 skips the penalty machinery entirely.
    CHECK_NOTHROW(gd_train(d, cfg, 0.0, &bad));
  }
}
