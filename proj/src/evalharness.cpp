#include "sade/evalharness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace sade {

namespace {

// Constraints with exactly one quantified instance have a per-instance
// reading; anything else (pairwise statements, malformed sets) does not.
std::vector<const NamedConstraint*> single_instance_constraints(
    const ConstraintSet& ks, std::vector<std::string>* warnings) {
  std::vector<const NamedConstraint*> out;
  for (const NamedConstraint& k : ks) {
    if (k.formula && k.formula->kind == FormulaKind::Forall && k.formula->vars.size() == 1) {
      out.push_back(&k);
    } else if (warnings) {
      warnings->push_back("constraint \"" + k.name +
                          "\" does not quantify over a single instance; "
                          "per-instance filtering skipped");
    }
  }
  return out;
}

bool satisfies_all(const Instance& inst,
                   const std::vector<const NamedConstraint*>& filterable,
                   const PointEvalContext& ctx) {
  for (const NamedConstraint* k : filterable) {
    std::map<std::string, const Instance*> binding{{k->formula->vars[0], &inst}};
    if (!eval_on_point(*k->formula, binding, ctx)) return false;
  }
  return true;
}

void require_same_layout(const LinearModel& m, const Dataset& d) {
  if (m.feature_names != d.feature_names() || m.target_names != d.target_names)
    throw EvalError("model and dataset disagree on the feature/target layout");
}

// Class index encoded by a label vector: the sign for a single +/-1 target,
// the maximal entry for one-vs-all rows (ties to the lowest index, matching
// predict_class).
std::size_t label_class(const Instance& inst) {
  if (inst.y.size() == 1) return inst.y[0] > 0 ? 1 : 0;
  std::size_t best = 0;
  for (std::size_t k = 1; k < inst.y.size(); ++k)
    if (inst.y[k] > inst.y[best]) best = k;
  return best;
}

std::string fmt_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string join_nums(const std::vector<double>& vs) {
  std::string out;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (i) out += ",";
    out += fmt_num(vs[i]);
  }
  return out;
}

nlohmann::json num_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json();
}

}  // namespace

std::vector<std::size_t> filter_admissible_instances(const Dataset& d, const ConstraintSet& ks,
                                                     std::vector<std::string>* warnings) {
  std::vector<const NamedConstraint*> filterable = single_instance_constraints(ks, warnings);
  PointEvalContext ctx;
  ctx.feature_names = d.feature_names();
  ctx.target_names = d.target_names;  // empty predict: labels stand in for predictions
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < d.n(); ++i)
    if (satisfies_all(d.instances[i], filterable, ctx)) kept.push_back(i);
  return kept;
}

std::size_t count_violating_instances(const LinearModel& m, const Dataset& d,
                                      const ConstraintSet& ks,
                                      std::vector<std::string>* warnings) {
  require_same_layout(m, d);
  std::vector<const NamedConstraint*> filterable = single_instance_constraints(ks, warnings);
  PointEvalContext ctx;
  ctx.feature_names = d.feature_names();
  ctx.target_names = d.target_names;
  ctx.predict = [&m](const std::vector<double>& x) { return predict_rational(m, x); };
  std::size_t violating = 0;
  for (const Instance& inst : d.instances)
    if (!satisfies_all(inst, filterable, ctx)) ++violating;
  return violating;
}

MetricKind metric_for(TaskKind task) {
  return task == TaskKind::MultiTargetRegression ? MetricKind::MeanSquaredError
                                                 : MetricKind::Accuracy;
}

EvalReport evaluate(const LinearModel& m, const Dataset& testset, const ConstraintSet& ks) {
  require_same_layout(m, testset);
  EvalReport rep;
  rep.kind = metric_for(m.task);
  rep.n_test_total = testset.n();
  std::vector<std::size_t> kept = filter_admissible_instances(testset, ks, &rep.warnings);
  rep.n_test_admissible = kept.size();
  rep.excluded_count = testset.n() - kept.size();
  if (kept.empty()) {
    rep.empty_subset = true;  // value stays NaN: no instances to score
    return rep;
  }
  if (rep.kind == MetricKind::Accuracy) {
    std::size_t correct = 0;
    for (std::size_t id : kept) {
      const Instance& inst = testset.instances[id];
      if (predict_class(m, inst.x) == label_class(inst)) ++correct;
    }
    rep.value = static_cast<double>(correct) / static_cast<double>(kept.size());
  } else {
    rep.per_target_mse.assign(m.n_outputs(), 0.0);
    for (std::size_t id : kept) {
      const Instance& inst = testset.instances[id];
      std::vector<double> p = predict(m, inst.x);
      for (std::size_t k = 0; k < p.size(); ++k) {
        double e = p[k] - inst.y[k];
        rep.per_target_mse[k] += e * e;
      }
    }
    rep.value = 0.0;
    for (double& v : rep.per_target_mse) {
      v /= static_cast<double>(kept.size());
      rep.value += v;
    }
  }
  return rep;
}

std::vector<GridPoint> default_sade_grid(const TrainConfig& base, TaskKind task) {
  const std::vector<double> alphas = {0.5, 1.0, 2.0};
  std::vector<GridPoint> grid;
  if (task == TaskKind::MultiTargetRegression) {
    const std::vector<std::vector<double>> ladders = {{0.1}, {0.1, 0.2}, {0.1, 0.2, 0.3}};
    for (double a : alphas)
      for (const std::vector<double>& c : ladders) {
        GridPoint g;
        g.config = base;
        g.config.alpha = a;
        g.config.regression_threshold_coeffs = c;
        g.label = "alpha=" + fmt_num(a) + " coeffs=" + join_nums(c);
        grid.push_back(std::move(g));
      }
  } else {
    const std::vector<std::vector<double>> ladders = {{0.0, 1.0}, {0.0, 1.0, 2.0}, {1.0, 2.0}};
    for (double a : alphas)
      for (const std::vector<double>& t : ladders) {
        GridPoint g;
        g.config = base;
        g.config.alpha = a;
        g.config.classification_thresholds = t;
        g.label = "alpha=" + fmt_num(a) + " margins=" + join_nums(t);
        grid.push_back(std::move(g));
      }
  }
  return grid;
}

std::vector<GridPoint> baseline_grid(const TrainConfig& base,
                                     const std::vector<double>& lambdas) {
  std::vector<GridPoint> grid;
  for (double l : lambdas) {
    GridPoint g;
    g.config = base;
    g.lambda = l;
    g.label = "lambda=" + fmt_num(l);
    grid.push_back(std::move(g));
  }
  return grid;
}

std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k,
                                                  std::uint64_t seed) {
  if (k < 2) throw EvalError("cross-validation needs at least 2 folds");
  if (k > n)
    throw EvalError("cannot cut " + std::to_string(n) + " instances into " + std::to_string(k) +
                    " folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t lo = i * n / k;
    std::size_t hi = (i + 1) * n / k;
    folds[i].assign(order.begin() + static_cast<std::ptrdiff_t>(lo),
                    order.begin() + static_cast<std::ptrdiff_t>(hi));
    std::sort(folds[i].begin(), folds[i].end());
  }
  return folds;
}

Dataset take_instances(const Dataset& d, const std::vector<std::size_t>& ids) {
  Dataset out = d;
  out.instances.clear();
  out.instances.reserve(ids.size());
  for (std::size_t id : ids) {
    if (id >= d.n()) throw EvalError("instance index " + std::to_string(id) + " out of range");
    out.instances.push_back(d.instances[id]);
  }
  return out;
}

CvResult cross_validate(const Dataset& d, const ConstraintSet& ks,
                        const std::vector<GridPoint>& grid, const CvOptions& opt) {
  if (grid.empty()) throw EvalError("hyperparameter grid is empty");
  const std::vector<std::vector<std::size_t>> folds = kfold_split(d.n(), opt.folds, opt.seed);
  const std::size_t nk = folds.size();

  CvResult res;
  res.grid = grid;
  res.metric_kind = metric_for(d.schema.task);
  single_instance_constraints(ks, &res.warnings);  // surface skip warnings once

  std::size_t min_fold = d.n();
  for (const std::vector<std::size_t>& f : folds) min_fold = std::min(min_fold, f.size());
  bool clamps = false;
  for (const GridPoint& g : grid) clamps = clamps || g.config.batch_size > min_fold;
  if (clamps)
    res.warnings.push_back("smallest fold has " + std::to_string(min_fold) +
                           " instances, below the batch size; batch size clamped");

  std::vector<Dataset> train_sets, test_sets;
  train_sets.reserve(nk);
  test_sets.reserve(nk);
  for (std::size_t f = 0; f < nk; ++f) {
    std::vector<std::size_t> train_ids;
    for (std::size_t j = 0; j < nk; ++j)
      if (j != f) train_ids.insert(train_ids.end(), folds[j].begin(), folds[j].end());
    std::sort(train_ids.begin(), train_ids.end());
    train_sets.push_back(take_instances(d, train_ids));
    test_sets.push_back(take_instances(d, folds[f]));
  }

  const std::size_t total = grid.size() * nk;
  res.cells.assign(total, CvCell{});
  auto run_cell = [&](std::size_t idx) {
    CvCell& cell = res.cells[idx];
    cell.grid_index = idx / nk;
    cell.fold = idx % nk;
    TrainConfig cfg = grid[cell.grid_index].config;
    cfg.batch_size = std::min(cfg.batch_size, min_fold);
    LinearModel model;
    if (opt.learner == CvLearner::Sade) {
      try {
        model = sade_train(train_sets[cell.fold], ks, cfg, opt.solver).model;
      } catch (const TrainError&) {
        return;  // cell stays untrained; other cells may still succeed
      }
    } else {
      model = gd_train(train_sets[cell.fold], cfg, grid[cell.grid_index].lambda, &ks);
    }
    cell.trained = true;
    EvalReport rep = evaluate(model, test_sets[cell.fold], ks);
    cell.metric = rep.value;
    cell.n_admissible = rep.n_test_admissible;
    cell.violations = count_violating_instances(model, test_sets[cell.fold], ks);
  };

  if (opt.jobs <= 1) {
    for (std::size_t i = 0; i < total; ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr err;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < opt.jobs; ++t)
      pool.emplace_back([&]() {
        for (;;) {
          std::size_t i = next.fetch_add(1);
          if (i >= total) return;
          try {
            run_cell(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(err_mutex);
            if (!err) err = std::current_exception();
            return;
          }
        }
      });
    for (std::thread& t : pool) t.join();
    if (err) std::rethrow_exception(err);
  }

  res.mean_metric.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
  res.mean_violations.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double metric_sum = 0.0, viol_sum = 0.0;
    std::size_t metric_n = 0, trained_n = 0;
    for (std::size_t f = 0; f < nk; ++f) {
      const CvCell& cell = res.cells[g * nk + f];
      if (!cell.trained) continue;
      ++trained_n;
      viol_sum += static_cast<double>(cell.violations);
      if (std::isfinite(cell.metric)) {
        metric_sum += cell.metric;
        ++metric_n;
      }
    }
    if (metric_n) res.mean_metric[g] = metric_sum / static_cast<double>(metric_n);
    if (trained_n) res.mean_violations[g] = viol_sum / static_cast<double>(trained_n);
  }

  const bool higher_better = res.metric_kind == MetricKind::Accuracy;
  auto metric_better = [higher_better](double a, double b) {
    if (std::isnan(a)) return false;
    if (std::isnan(b)) return true;
    return higher_better ? a > b : a < b;
  };

  std::size_t pick = grid.size();
  if (opt.learner == CvLearner::Sade) {
    res.selection_rule = "best-mean-metric";
    for (std::size_t g = 0; g < grid.size(); ++g) {
      if (std::isnan(res.mean_metric[g])) continue;
      if (pick == grid.size() || metric_better(res.mean_metric[g], res.mean_metric[pick]))
        pick = g;
    }
  } else {
    res.selection_rule = "fewest-mean-violations";
    for (std::size_t g = 0; g < grid.size(); ++g) {
      if (std::isnan(res.mean_violations[g])) continue;
      if (pick == grid.size() || res.mean_violations[g] < res.mean_violations[pick] ||
          (res.mean_violations[g] == res.mean_violations[pick] &&
           metric_better(res.mean_metric[g], res.mean_metric[pick])))
        pick = g;
    }
  }
  if (pick == grid.size())
    throw EvalError("cross-validation produced no scorable model on any grid point");
  res.selected = pick;
  return res;
}

nlohmann::json eval_report_to_json(const EvalReport& r) {
  return nlohmann::json{
      {"metric", r.kind == MetricKind::Accuracy ? "accuracy" : "mse"},
      {"value", num_or_null(r.value)},
      {"per_target_mse", r.per_target_mse},
      {"n_test_total", r.n_test_total},
      {"n_test_admissible", r.n_test_admissible},
      {"excluded_count", r.excluded_count},
      {"empty_subset", r.empty_subset},
      {"warnings", r.warnings},
  };
}

nlohmann::json cv_result_to_json(const CvResult& r) {
  nlohmann::json grid = nlohmann::json::array();
  for (const GridPoint& g : r.grid)
    grid.push_back({
        {"label", g.label},
        {"alpha", g.config.alpha},
        {"lambda", g.lambda},
        {"classification_thresholds", g.config.classification_thresholds},
        {"regression_threshold_coeffs", g.config.regression_threshold_coeffs},
        {"batch_size", g.config.batch_size},
        {"epochs", g.config.epochs},
    });
  nlohmann::json cells = nlohmann::json::array();
  for (const CvCell& c : r.cells)
    cells.push_back({
        {"grid", c.grid_index},
        {"fold", c.fold},
        {"trained", c.trained},
        {"metric", num_or_null(c.metric)},
        {"violations", c.violations},
        {"n_admissible", c.n_admissible},
    });
  nlohmann::json means_metric = nlohmann::json::array();
  nlohmann::json means_viol = nlohmann::json::array();
  for (double v : r.mean_metric) means_metric.push_back(num_or_null(v));
  for (double v : r.mean_violations) means_viol.push_back(num_or_null(v));
  nlohmann::json selected;
  if (r.selected < r.grid.size())
    selected = {{"index", r.selected}, {"label", r.grid[r.selected].label}};
  return nlohmann::json{
      {"metric", r.metric_kind == MetricKind::Accuracy ? "accuracy" : "mse"},
      {"selection_rule", r.selection_rule},
      {"selected", selected},
      {"grid", grid},
      {"mean_metric", means_metric},
      {"mean_violations", means_viol},
      {"cells", cells},
      {"warnings", r.warnings},
  };
}

std::string cv_csv_summary(const CvResult& r) {
  std::ostringstream os;
  os << "grid,label,fold,trained,metric,violations,n_admissible\n";
  for (const CvCell& c : r.cells) {
    os << c.grid_index << ",\"" << r.grid[c.grid_index].label << "\"," << c.fold << ","
       << (c.trained ? 1 : 0) << ",";
    if (std::isfinite(c.metric)) os << c.metric;
    os << "," << c.violations << "," << c.n_admissible << "\n";
  }
  return os.str();
}

}  // namespace sade
