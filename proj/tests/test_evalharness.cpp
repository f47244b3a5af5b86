#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "sade/evalharness.hpp"

using namespace sade;

namespace {

Rational rat(long long p, long long q = 1) { return Rational(p) / Rational(q); }

// One numeric feature `income`, +/-1 binary target `label`, bounds [0,1].
// Feature values in tests are dyadic so double -> rational stays exact.
Dataset binary_ds(const std::vector<std::pair<double, double>>& rows) {
  Dataset d;
  d.schema.task = TaskKind::BinaryClassification;
  d.schema.columns = {{"income", ColumnKind::Numeric}, {"label", ColumnKind::Target}};
  d.features.push_back({"income", "income", false, ""});
  d.target_names = {"label"};
  d.class_names = {"neg", "pos"};
  d.y_max = {1.0};
  for (const auto& [x, y] : rows) d.instances.push_back({{x}, {y}});
  d.bounds = {{0.0, 1.0}};
  return d;
}

// One numeric feature `v`, regression targets given per row.
Dataset regression_ds(const std::vector<std::string>& targets,
                      const std::vector<std::pair<double, std::vector<double>>>& rows,
                      double y_max = 1.0) {
  Dataset d;
  d.schema.task = TaskKind::MultiTargetRegression;
  d.schema.columns = {{"v", ColumnKind::Numeric}};
  for (const std::string& t : targets) d.schema.columns.push_back({t, ColumnKind::Target});
  d.features.push_back({"v", "v", false, ""});
  d.target_names = targets;
  d.y_max.assign(targets.size(), y_max);
  for (const auto& [x, ys] : rows) d.instances.push_back({{x}, ys});
  d.bounds = {{0.0, 1.0}};
  return d;
}

NamedConstraint named(const std::string& name, const std::string& text, const Schema& schema) {
  return {name, parse_constraint(text, schema), text};
}

// Low income must be labeled/scored negative; threshold 1/4 is exactly
// representable, so the boundary instance sits outside the region.
ConstraintSet denial_ks(const Schema& schema) {
  return {named("denial",
                "(forall (x) (=> (< (feat x income) 0.25) (< (pred x label) 0)))", schema)};
}

LinearModel binary_model(const Dataset& d, double w, double b) {
  LinearModel m = make_model(d);
  m.set_weights({{rational_from_double(w), rational_from_double(b)}});
  return m;
}

}  // namespace

TEST_CASE("label filtering excludes instances whose labels break a constraint") {
  Dataset d = binary_ds({{0.125, 1.0},    // in the denial region, labeled positive
                         {0.1875, -1.0},  // in the region, labeled negative
                         {0.625, 1.0},
                         {0.25, 1.0},     // boundary: (< 1/4 1/4) is false
                         {0.0625, 1.0}});
  ConstraintSet ks = denial_ks(d.schema);

  std::vector<std::string> warnings;
  std::vector<std::size_t> kept = filter_admissible_instances(d, ks, &warnings);
  CHECK(kept == std::vector<std::size_t>{1, 2, 3});
  CHECK(warnings.empty());
}

TEST_CASE("label filtering reads multi-target labels through sum_preds") {
  Dataset d = regression_ds({"spend_a", "spend_b"}, {{0.5, {0.125, 0.25}},   // 0.375 <= 0.5
                                                     {0.5, {0.375, 0.25}},   // 0.625 > 0.5
                                                     {1.0, {0.5, 0.5}}});    // 1.0 <= 1.0
  ConstraintSet ks = {named("budget", "(forall (x) (<= (sum_preds x) (feat x v)))", d.schema)};

  std::vector<std::size_t> kept = filter_admissible_instances(d, ks);
  CHECK(kept == std::vector<std::size_t>{0, 2});
}

TEST_CASE("constraints over two instances are skipped with one warning") {
  Dataset d = binary_ds({{0.125, 1.0}, {0.5, 1.0}, {0.75, -1.0}});
  ConstraintSet ks = denial_ks(d.schema);
  ks.push_back(named("monotone",
                     "(forall (x y) (=> (< (feat x income) (feat y income))"
                     " (<= (pred x label) (pred y label))))",
                     d.schema));

  std::vector<std::string> warnings;
  std::vector<std::size_t> kept = filter_admissible_instances(d, ks, &warnings);
  CHECK(kept == std::vector<std::size_t>{1, 2});  // only the denial rule filters
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("monotone") != std::string::npos);
  CHECK(warnings[0].find("filtering skipped") != std::string::npos);
}

TEST_CASE("violation counting evaluates the model, not the labels") {
  Dataset d = binary_ds({{0.125, -1.0}, {0.1875, -1.0}, {0.5, 1.0}});
  ConstraintSet ks = denial_ks(d.schema);

  // score = income: positive everywhere, so both denial-region instances
  // violate; the third has a false antecedent.
  CHECK(count_violating_instances(binary_model(d, 1.0, 0.0), d, ks) == 2);
  // score = income - 1: negative on [0,1], nothing violates.
  CHECK(count_violating_instances(binary_model(d, 1.0, -1.0), d, ks) == 0);

  LinearModel other = binary_model(d, 1.0, 0.0);
  other.feature_names = {"elsewhere"};
  CHECK_THROWS_AS(count_violating_instances(other, d, ks), EvalError);
}

TEST_CASE("accuracy is computed over the admissible subset only") {
  Dataset d = binary_ds({{0.125, 1.0},   // excluded, and would be misclassified
                         {0.1875, -1.0},
                         {0.625, 1.0},
                         {0.75, 1.0}});
  ConstraintSet ks = denial_ks(d.schema);
  LinearModel m = binary_model(d, 2.0, -1.0);  // sign(2*income - 1)

  EvalReport rep = evaluate(m, d, ks);
  CHECK(rep.kind == MetricKind::Accuracy);
  CHECK(rep.n_test_total == 4);
  CHECK(rep.n_test_admissible == 3);
  CHECK(rep.excluded_count == 1);
  CHECK(rep.n_test_admissible + rep.excluded_count == rep.n_test_total);
  CHECK(rep.value == 1.0);  // perfect on the kept three
  CHECK_FALSE(rep.empty_subset);

  // Over all four instances the same model only gets three right.
  std::size_t correct = 0;
  for (const Instance& inst : d.instances)
    correct += predict_class(m, inst.x) == (inst.y[0] > 0 ? 1u : 0u);
  CHECK(correct == 3);
}

TEST_CASE("accuracy matches a hand recount on a mixed admissible subset") {
  Dataset d = binary_ds({{0.125, 1.0},    // excluded
                         {0.375, 1.0},    // kept, predicted neg: wrong
                         {0.75, 1.0},     // kept, predicted pos: right
                         {0.0625, -1.0},  // kept (region, negative label), right
                         {0.625, -1.0},   // kept, predicted pos: wrong
                         {0.5625, 1.0}}); // kept, predicted pos: right
  ConstraintSet ks = denial_ks(d.schema);
  LinearModel m = binary_model(d, 1.0, -0.5);  // positive iff income > 1/2

  EvalReport rep = evaluate(m, d, ks);
  CHECK(rep.n_test_admissible == 5);
  CHECK(rep.value == doctest::Approx(3.0 / 5.0));
}

TEST_CASE("multiclass accuracy uses the argmax of the one-vs-all labels") {
  Dataset d;
  d.schema.task = TaskKind::MulticlassClassification;
  d.schema.columns = {{"v", ColumnKind::Numeric}, {"genre", ColumnKind::Target}};
  d.features.push_back({"v", "v", false, ""});
  d.target_names = {"c0", "c1", "c2"};
  d.class_names = {"a", "b", "c"};
  d.y_max = {1.0, 1.0, 1.0};
  d.bounds = {{0.0, 1.0}};
  d.instances = {{{0.125}, {1.0, -1.0, -1.0}},   // class 0
                 {{0.875}, {-1.0, 1.0, -1.0}},   // class 1
                 {{0.5}, {-1.0, -1.0, 1.0}}};    // class 2

  LinearModel m = make_model(d);
  m.set_weights({{rat(-1), rat(1, 2)},   // 1/2 - v: wins low
                 {rat(1), rat(0)},       // v: wins high
                 {rat(0), rat(0)}});     // never the argmax on (0, 1/2)

  EvalReport rep = evaluate(m, d, {});
  CHECK(rep.n_test_admissible == 3);  // no constraints, nothing excluded
  CHECK(rep.value == doctest::Approx(2.0 / 3.0));  // class 2 is never predicted
}

TEST_CASE("regression reports per-target and summed mean squared error") {
  Dataset d = regression_ds({"out"}, {{0.25, {0.0}}, {0.5, {0.0}}, {0.75, {0.0}}});
  LinearModel zero = make_model(d);  // all-zero weights
  EvalReport rep = evaluate(zero, d, {});
  CHECK(rep.kind == MetricKind::MeanSquaredError);
  REQUIRE(rep.per_target_mse.size() == 1);
  CHECK(rep.per_target_mse[0] == 0.0);
  CHECK(rep.value == 0.0);

  // f(v) = v against targets 0: squared errors 1/16, 1/4, 9/16, mean 7/24.
  LinearModel ident = make_model(d);
  ident.set_weights({{rat(1), rat(0)}});
  EvalReport rep2 = evaluate(ident, d, {});
  CHECK(rep2.value == doctest::Approx(7.0 / 24.0));
  CHECK(rep2.per_target_mse[0] == doctest::Approx(7.0 / 24.0));
}

TEST_CASE("an empty admissible subset is reported, not divided by") {
  Dataset d = binary_ds({{0.125, 1.0}, {0.0625, 1.0}});  // both labels violate
  ConstraintSet ks = denial_ks(d.schema);
  EvalReport rep = evaluate(binary_model(d, 1.0, 0.0), d, ks);
  CHECK(rep.empty_subset);
  CHECK(rep.n_test_admissible == 0);
  CHECK(rep.excluded_count == 2);
  CHECK(std::isnan(rep.value));

  nlohmann::json j = eval_report_to_json(rep);
  CHECK(j["value"].is_null());
  CHECK(j["empty_subset"] == true);
}

TEST_CASE("k-fold splits are balanced, disjoint, exhaustive and seeded") {
  auto folds = kfold_split(100, 5, 42);
  REQUIRE(folds.size() == 5);
  std::set<std::size_t> seen;
  for (const auto& f : folds) {
    CHECK(f.size() == 20);
    CHECK(std::is_sorted(f.begin(), f.end()));
    seen.insert(f.begin(), f.end());
  }
  CHECK(seen.size() == 100);

  CHECK(kfold_split(100, 5, 42) == folds);       // reproducible
  CHECK(kfold_split(100, 5, 43) != folds);       // seed matters

  auto uneven = kfold_split(7, 3, 1);
  std::vector<std::size_t> sizes;
  for (const auto& f : uneven) sizes.push_back(f.size());
  std::sort(sizes.begin(), sizes.end());
  CHECK(sizes == std::vector<std::size_t>{2, 2, 3});

  CHECK_THROWS_AS(kfold_split(10, 1, 0), EvalError);
  CHECK_THROWS_AS(kfold_split(7, 8, 0), EvalError);
}

TEST_CASE("taking instances preserves the surrounding dataset metadata") {
  Dataset d = binary_ds({{0.125, 1.0}, {0.5, -1.0}, {0.75, 1.0}});
  Dataset sub = take_instances(d, {2, 0});
  REQUIRE(sub.n() == 2);
  CHECK(sub.instances[0].x[0] == 0.75);
  CHECK(sub.instances[1].x[0] == 0.125);
  CHECK(sub.bounds == d.bounds);
  CHECK(sub.y_max == d.y_max);
  CHECK(sub.target_names == d.target_names);
  CHECK(sub.features.size() == d.features.size());
  CHECK_THROWS_AS(take_instances(d, {3}), EvalError);
}

TEST_CASE("the default grids sweep step size against the threshold ladders") {
  TrainConfig base;
  base.epochs = 7;
  auto cls = default_sade_grid(base, TaskKind::BinaryClassification);
  REQUIRE(cls.size() == 9);
  std::set<std::string> labels;
  for (const GridPoint& g : cls) {
    labels.insert(g.label);
    CHECK(g.config.epochs == 7);  // everything else copied from the base
    CHECK((g.config.alpha == 0.5 || g.config.alpha == 1.0 || g.config.alpha == 2.0));
  }
  CHECK(labels.size() == 9);
  CHECK(labels.count("alpha=0.5 margins=0,1") == 1);
  CHECK(labels.count("alpha=2 margins=1,2") == 1);

  auto reg = default_sade_grid(base, TaskKind::MultiTargetRegression);
  REQUIRE(reg.size() == 9);
  CHECK(reg[0].config.regression_threshold_coeffs == std::vector<double>{0.1});
  CHECK(reg[8].config.regression_threshold_coeffs == std::vector<double>{0.1, 0.2, 0.3});
  CHECK(reg[8].label == "alpha=2 coeffs=0.1,0.2,0.3");

  auto bl = baseline_grid(base, {0.0, 12.5});
  REQUIRE(bl.size() == 2);
  CHECK(bl[0].lambda == 0.0);
  CHECK(bl[1].lambda == 12.5);
  CHECK(bl[1].label == "lambda=12.5");
}

TEST_CASE("penalty-baseline cross-validation selects the fewest-violation lambda") {
  // y = v + 0.3: unconstrained descent learns predictions above v, violating
  // (pred <= v) on every validation instance; a strong penalty pushes the
  // fit underneath. Every label violates too, so the admissible test subsets
  // are empty and selection rests entirely on the violation counts.
  std::vector<std::pair<double, std::vector<double>>> rows;
  for (int i = 0; i < 30; ++i) {
    double v = static_cast<double>(i) / 32.0;
    rows.push_back({v, {v + 0.3}});
  }
  Dataset d = regression_ds({"out"}, rows, 1.3);
  ConstraintSet ks = {named("cap", "(forall (x) (<= (pred x out) (feat x v)))", d.schema)};

  TrainConfig base;
  base.epochs = 120;
  base.batch_size = 5;
  base.learning_rate = 0.1;
  base.seed = 3;
  std::vector<GridPoint> grid = baseline_grid(base, {0.0, 50.0});

  CvOptions opt;
  opt.learner = CvLearner::PenaltyDescent;
  opt.folds = 2;
  opt.seed = 9;

  CvResult res = cross_validate(d, ks, grid, opt);
  CHECK(res.metric_kind == MetricKind::MeanSquaredError);
  CHECK(res.selection_rule == "fewest-mean-violations");
  REQUIRE(res.cells.size() == 4);
  for (const CvCell& c : res.cells) {
    CHECK(c.trained);
    CHECK(c.n_admissible == 0);  // every label breaks the cap
    CHECK(std::isnan(c.metric));
  }
  REQUIRE(res.mean_violations.size() == 2);
  CHECK(res.mean_violations[0] >= 10.0);  // lambda = 0 violates nearly all 15
  CHECK(res.mean_violations[1] < res.mean_violations[0]);
  CHECK(res.selected == 1);

  SUBCASE("deterministic under a fixed seed") {
    CvResult again = cross_validate(d, ks, grid, opt);
    CHECK(again.selected == res.selected);
    for (std::size_t i = 0; i < res.cells.size(); ++i)
      CHECK(again.cells[i].violations == res.cells[i].violations);
  }

  SUBCASE("parallel cells agree with the sequential run") {
    CvOptions par = opt;
    par.jobs = 2;
    CvResult again = cross_validate(d, ks, grid, par);
    CHECK(again.selected == res.selected);
    for (std::size_t i = 0; i < res.cells.size(); ++i)
      CHECK(again.cells[i].violations == res.cells[i].violations);
  }

  SUBCASE("a single grid point is selected trivially") {
    CvResult one = cross_validate(d, ks, baseline_grid(base, {0.0}), opt);
    CHECK(one.selected == 0);
    CHECK(one.grid.size() == 1);
  }
}

TEST_CASE("constraint-satisfying cross-validation selects by the mean metric") {
  // Separable data, no domain constraints: every solve is quantifier-free,
  // so the full train/evaluate path stays fast.
  std::vector<std::pair<double, double>> rows;
  for (int i = 0; i < 6; ++i) rows.push_back({0.0625 + i * 0.0625, -1.0});
  for (int i = 0; i < 6; ++i) rows.push_back({0.5625 + i * 0.0625, 1.0});
  Dataset d = binary_ds(rows);

  TrainConfig base;
  base.epochs = 1;
  base.batch_size = 5;
  base.classification_thresholds = {0.0, 1.0};
  std::vector<GridPoint> grid = default_sade_grid(base, d.schema.task);
  grid.resize(2);  // two alpha/margin cells keep the solver work small

  CvOptions opt;
  opt.learner = CvLearner::Sade;
  opt.folds = 3;
  opt.seed = 5;

  CvResult res = cross_validate(d, {}, grid, opt);
  CHECK(res.metric_kind == MetricKind::Accuracy);
  CHECK(res.selection_rule == "best-mean-metric");
  REQUIRE(res.cells.size() == 6);
  for (const CvCell& c : res.cells) {
    CHECK(c.trained);
    CHECK(c.n_admissible == 4);  // nothing filtered without constraints
    CHECK(c.violations == 0);
    CHECK(std::isfinite(c.metric));
  }

  // Folds of four are smaller than the batch of five: clamped, with notice.
  bool noted = false;
  for (const std::string& w : res.warnings)
    noted = noted || w.find("batch size clamped") != std::string::npos;
  CHECK(noted);

  // The selected point is exactly the argbest of the fold means.
  std::size_t best = 0;
  for (std::size_t g = 1; g < res.mean_metric.size(); ++g)
    if (res.mean_metric[g] > res.mean_metric[best]) best = g;
  CHECK(res.selected == best);
  CHECK(res.mean_metric[res.selected] >= res.mean_metric[1 - res.selected]);
}

TEST_CASE("cells that find no admissible model are recorded, not fatal") {
  Dataset d = binary_ds({{0.125, 1.0}, {0.375, -1.0}, {0.625, 1.0}, {0.875, -1.0}});
  ConstraintSet impossible = {
      named("impossible", "(forall (x) (< (pred x label) (pred x label)))", d.schema)};

  TrainConfig base;
  base.epochs = 1;
  base.batch_size = 2;
  std::vector<GridPoint> grid = default_sade_grid(base, d.schema.task);
  grid.resize(1);

  CvOptions opt;
  opt.learner = CvLearner::Sade;
  opt.folds = 2;

  CHECK_THROWS_WITH_AS(cross_validate(d, impossible, grid, opt),
                       "cross-validation produced no scorable model on any grid point",
                       EvalError);
}

TEST_CASE("cross-validation rejects degenerate setups") {
  Dataset d = binary_ds({{0.125, 1.0}, {0.375, -1.0}, {0.625, 1.0}});
  TrainConfig base;
  std::vector<GridPoint> grid = baseline_grid(base, {0.0});
  CvOptions opt;
  opt.learner = CvLearner::PenaltyDescent;

  opt.folds = 2;
  CHECK_THROWS_AS(cross_validate(d, {}, {}, opt), EvalError);  // empty grid
  opt.folds = 1;
  CHECK_THROWS_AS(cross_validate(d, {}, grid, opt), EvalError);
  opt.folds = 4;  // more folds than instances
  CHECK_THROWS_AS(cross_validate(d, {}, grid, opt), EvalError);
}

TEST_CASE("reports serialize with nulls for missing values") {
  Dataset d = binary_ds({{0.125, -1.0}, {0.375, -1.0}, {0.5, 1.0},
                         {0.625, -1.0}, {0.6875, 1.0}, {0.875, 1.0}});
  ConstraintSet ks = denial_ks(d.schema);
  TrainConfig base;
  base.epochs = 40;
  std::vector<GridPoint> grid = baseline_grid(base, {0.0, 1.0});
  CvOptions opt;
  opt.learner = CvLearner::PenaltyDescent;
  opt.folds = 2;
  CvResult res = cross_validate(d, ks, grid, opt);

  nlohmann::json j = cv_result_to_json(res);
  CHECK(j["selection_rule"] == "fewest-mean-violations");
  CHECK(j["selected"]["index"] == res.selected);
  CHECK(j["selected"]["label"] == res.grid[res.selected].label);
  CHECK(j["grid"].size() == 2);
  CHECK(j["cells"].size() == 4);
  CHECK(j["cells"][0]["trained"] == true);
  CHECK(j["mean_violations"].size() == 2);

  std::string csv = cv_csv_summary(res);
  std::size_t lines = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
  CHECK(lines == 1 + res.cells.size());
  CHECK(csv.rfind("grid,label,fold,trained,metric,violations,n_admissible\n", 0) == 0);
}
