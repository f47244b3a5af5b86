#include "sade/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <sstream>

#include "sade/verifier.hpp"

namespace sade {

namespace {

void check_increasing(const std::vector<double>& v, const std::string& what) {
  if (v.empty()) throw TrainError(what + " must not be empty");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw TrainError(what + " must be finite");
    if (i > 0 && v[i] <= v[i - 1]) throw TrainError(what + " must be strictly increasing");
  }
}

}  // namespace

void validate_train_config(const TrainConfig& cfg, TaskKind task) {
  if (!(cfg.alpha > 0)) throw TrainError("alpha must be positive");
  if (cfg.batch_size == 0) throw TrainError("batch_size must be positive");
  if (cfg.epochs == 0) throw TrainError("epochs must be positive");
  if (!(cfg.param_bound > 0)) throw TrainError("param_bound must be positive");
  if (cfg.stop_every == 0) throw TrainError("stop_every must be positive");
  if (cfg.stop_window == 0) throw TrainError("stop_window must be positive");
  if (!(cfg.stop_min_improvement >= 0))
    throw TrainError("stop_min_improvement must be nonnegative");
  if (!(cfg.learning_rate > 0)) throw TrainError("learning_rate must be positive");
  if (task == TaskKind::MultiTargetRegression) {
    check_increasing(cfg.regression_threshold_coeffs, "regression_threshold_coeffs");
    if (cfg.regression_threshold_coeffs.front() <= 0)
      throw TrainError("regression_threshold_coeffs must be positive");
  } else {
    check_increasing(cfg.classification_thresholds, "classification_thresholds");
  }
}

std::vector<std::string> decision_constraints(const Dataset& d, const Batch& batch,
                                              const LinearModel& m, const TrainConfig& cfg) {
  if (batch.instance_ids.empty()) throw TrainError("decision constraints need a nonempty batch");
  const bool regression = d.schema.task == TaskKind::MultiTargetRegression;

  std::vector<std::string> softs;
  std::vector<std::string> coords(m.dim());
  for (std::size_t id : batch.instance_ids) {
    if (id >= d.n()) throw TrainError("batch references an instance outside the dataset");
    const Instance& inst = d.instances[id];
    for (std::size_t j = 0; j < m.dim(); ++j)
      coords[j] = smt_literal(rational_from_double(inst.x[j]));
    for (std::size_t k = 0; k < m.n_outputs(); ++k) {
      const std::string score = emit_affine(m, k, coords, /*symbolic=*/true);
      if (regression) {
        const Rational y = rational_from_double(inst.y[k]);
        const Rational y_max = rational_from_double(d.y_max[k]);
        for (double c : cfg.regression_threshold_coeffs) {
          const Rational half_band = rational_from_decimal_of(c) * y_max;
          softs.push_back("(and (<= " + smt_literal(y - half_band) + " " + score + ") (<= " +
                          score + " " + smt_literal(y + half_band) + "))");
        }
      } else {
        const bool positive = inst.y[k] > 0;
        for (double tau : cfg.classification_thresholds) {
          const Rational t = rational_from_decimal_of(tau);
          if (positive)
            softs.push_back("(> " + score + " " + smt_literal(t) + ")");
          else
            softs.push_back("(< " + score + " " + smt_literal(-t) + ")");
        }
      }
    }
  }
  return softs;
}

std::string box_constraint(const LinearModel& m, const std::vector<std::vector<double>>& g,
                           double alpha) {
  if (!(alpha > 0)) throw TrainError("alpha must be positive");
  if (g.size() != m.weights.size()) throw TrainError("gradient shape does not match the model");
  const Rational step = rational_from_decimal_of(alpha);
  const std::vector<std::string> syms = weight_symbols(m);

  std::string conj = "(and";
  std::size_t idx = 0;
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    if (g[k].size() != m.weights[k].size())
      throw TrainError("gradient shape does not match the model");
    for (std::size_t i = 0; i < m.weights[k].size(); ++i, ++idx) {
      const Rational& w = m.weights[k][i];
      // sgn(gradient) with sgn(0) = +1: nonnegative slope means descent
      // decreases the weight.
      const Rational lo = g[k][i] >= 0 ? w - step : w;
      const Rational hi = g[k][i] >= 0 ? w : w + step;
      conj += " (<= " + smt_literal(lo) + " " + syms[idx] + ")";
      conj += " (<= " + syms[idx] + " " + smt_literal(hi) + ")";
    }
  }
  conj += ")";
  return conj;
}

bool stopping_criterion(const std::vector<double>& loss_trace, std::size_t iteration,
                        const TrainConfig& cfg) {
  if (cfg.max_iterations > 0 && iteration >= cfg.max_iterations) return true;
  if (iteration < cfg.stop_start) return false;
  if ((iteration - cfg.stop_start) % cfg.stop_every != 0) return false;
  if (loss_trace.size() < iteration || iteration <= cfg.stop_window) return false;
  const double prev = loss_trace[iteration - cfg.stop_window - 1];
  const double cur = loss_trace[iteration - 1];
  if (!std::isfinite(prev) || !std::isfinite(cur)) return false;
  if (prev <= 0) return true;  // nothing left to improve
  return (prev - cur) / prev < cfg.stop_min_improvement;
}

namespace {

void validate_problem(const Dataset& d, const ConstraintSet& ks) {
  if (d.n() == 0) throw TrainError("cannot train on an empty dataset");
  if (d.bounds.size() != d.dim())
    throw TrainError("dataset has no feature bounds; compute them before training");
  for (const NamedConstraint& k : ks) {
    const auto issues = validate(*k.formula, d.schema, d.target_names);
    if (!issues.empty())
      throw TrainError("constraint '" + k.name + "' is invalid: " + issues.front().where + ": " +
                       issues.front().message);
  }
}

std::vector<std::string> instantiate_all(const ConstraintSet& ks, const LinearModel& m,
                                         const std::vector<std::pair<double, double>>& bounds) {
  const AffineEmitter em = affine_emitter(m, /*symbolic=*/true);
  std::vector<std::string> texts;
  texts.reserve(ks.size());
  for (const NamedConstraint& k : ks) texts.push_back(instantiate_universal(*k.formula, em, bounds));
  return texts;
}

std::string param_bounds_text(const std::vector<std::string>& wsyms, const Rational& bound) {
  std::string conj = "(and";
  for (const std::string& w : wsyms)
    conj += " (<= " + smt_literal(-bound) + " " + w + ") (<= " + w + " " + smt_literal(bound) + ")";
  conj += ")";
  return conj;
}

std::vector<std::vector<Rational>> weights_from_params(const MaxSmtResult& res,
                                                       const LinearModel& m,
                                                       const std::vector<std::string>& wsyms,
                                                       bool& approximate) {
  std::vector<std::vector<Rational>> w(m.weights.size());
  approximate = false;
  std::size_t idx = 0;
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    w[k].resize(m.weights[k].size());
    for (std::size_t i = 0; i < m.weights[k].size(); ++i, ++idx) {
      const auto it = res.params.find(wsyms[idx]);
      if (it == res.params.end())
        throw TrainError("solver reply omitted a value for " + wsyms[idx]);
      w[k][i] = it->second.value;
      approximate = approximate || it->second.approximate;
    }
  }
  return w;
}

}  // namespace

TrainedBundle sade_train(const Dataset& d, const ConstraintSet& ks, const TrainConfig& cfg,
                         const SolverConfig& solver) {
  validate_train_config(cfg, d.schema.task);
  validate_problem(d, ks);

  TrainedBundle bundle;
  bundle.config = cfg;

  LinearModel m = make_model(d);
  const LossKind lk = loss_kind_for(d.schema.task);
  const std::vector<std::string> wsyms = weight_symbols(m);
  const Rational bound = rational_from_decimal_of(cfg.param_bound);
  const std::vector<std::string> k_texts = instantiate_all(ks, m, d.bounds);
  const std::vector<Batch> batches = partition_batches(d, cfg.batch_size, cfg.seed);
  const std::size_t planned = cfg.epochs * batches.size();

  // Reused only to avoid respawning the backend; max_smt resets it anyway.
  auto session = std::make_unique<SolverSession>(solver);

  std::vector<std::vector<Rational>> w_hat;
  std::vector<std::vector<double>> grad;
  bool have_w = false;
  bool have_g = false;
  bool fired = false;
  std::size_t iteration = 0;

  auto record_failure = [&](std::size_t& counter) {
    ++counter;
    if (have_g) {
      for (auto& row : grad)
        for (double& v : row) v = -v;
      ++bundle.restarts;
    }
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs && !fired; ++epoch) {
    for (const Batch& batch : batches) {
      ++iteration;

      MaxSmtProblem problem;
      problem.real_symbols = wsyms;
      problem.hard = k_texts;
      problem.hard.push_back(param_bounds_text(wsyms, bound));
      if (have_w && have_g) problem.hard.push_back(box_constraint(m, grad, cfg.alpha));
      problem.soft = decision_constraints(d, batch, m, cfg);

      MaxSmtResult res;
      bool solved = false;
      for (int attempt = 0; attempt < 2 && !solved; ++attempt) {
        try {
          res = max_smt(*session, problem);
          solved = true;
        } catch (const SolverCrash&) {
          session = std::make_unique<SolverSession>(solver);
          if (attempt == 0)
            ++bundle.crash_retries;
          else
            res.verdict = Verdict::Unknown;  // retried once already
        }
      }
      bundle.solver_ms += res.elapsed_ms;

      bool archived = false;
      if (res.verdict == Verdict::Sat) {
        bool approximate = false;
        auto w_new = weights_from_params(res, m, wsyms, approximate);
        bool accept = true;
        if (approximate) {
          // The printed decimals were truncated; the reconstruction is not
          // the assignment the solver certified, so prove it independently.
          LinearModel candidate = m;
          candidate.set_weights(w_new);
          accept = prove_admissible(candidate, ks, d.bounds, solver).proven();
        }
        if (accept) {
          w_hat = std::move(w_new);
          have_w = true;
          m.set_weights(w_hat);
          const double full_loss = loss(m, d, lk);
          bundle.archive.push_back({w_hat, full_loss, iteration});
          ++bundle.sat_solves;
          grad = gradient(m, d, lk);
          have_g = true;
          archived = true;
        } else {
          record_failure(bundle.discarded_approximate);
        }
      } else if (res.verdict == Verdict::Unsat) {
        record_failure(bundle.unsat_solves);
      } else {
        record_failure(bundle.unknown_solves);
      }

      if (archived)
        bundle.loss_trace.push_back(bundle.archive.back().loss);
      else if (bundle.loss_trace.empty())
        bundle.loss_trace.push_back(std::numeric_limits<double>::infinity());
      else
        bundle.loss_trace.push_back(bundle.loss_trace.back());

      if (stopping_criterion(bundle.loss_trace, iteration, cfg)) {
        fired = true;
        break;
      }
    }
  }

  bundle.iterations = iteration;
  bundle.stopped_early = fired && iteration < planned;
  if (bundle.archive.empty()) throw TrainError("no admissible model found");

  std::size_t best = 0;
  for (std::size_t i = 1; i < bundle.archive.size(); ++i)
    if (bundle.archive[i].loss < bundle.archive[best].loss) best = i;
  bundle.best_index = best;
  m.set_weights(bundle.archive[best].weights);
  bundle.model = std::move(m);
  return bundle;
}

ExactTrainResult exact_maxsmt_train(const Dataset& d, const ConstraintSet& ks,
                                    const TrainConfig& cfg, const SolverConfig& solver) {
  validate_train_config(cfg, d.schema.task);
  validate_problem(d, ks);
  if (d.n() > cfg.exact_instance_guard) {
    std::ostringstream msg;
    msg << "dataset has " << d.n() << " instances, above the exact-learner guard of "
        << cfg.exact_instance_guard;
    throw TrainError(msg.str());
  }

  LinearModel m = make_model(d);
  const std::vector<std::string> wsyms = weight_symbols(m);

  Batch all;
  all.instance_ids.resize(d.n());
  for (std::size_t i = 0; i < d.n(); ++i) all.instance_ids[i] = i;

  MaxSmtProblem problem;
  problem.real_symbols = wsyms;
  problem.hard = instantiate_all(ks, m, d.bounds);
  problem.hard.push_back(param_bounds_text(wsyms, rational_from_decimal_of(cfg.param_bound)));
  problem.soft = decision_constraints(d, all, m, cfg);

  const MaxSmtResult res = max_smt(problem, solver);
  if (res.verdict == Verdict::Unsat) throw TrainError("no admissible model found");
  if (res.verdict != Verdict::Sat)
    throw TrainError("solver gave up before settling the exact optimum");

  bool approximate = false;
  m.set_weights(weights_from_params(res, m, wsyms, approximate));

  ExactTrainResult out;
  out.model = std::move(m);
  out.satisfied = res.satisfied;
  out.total_soft = problem.soft.size();
  out.rounds = res.rounds;
  out.elapsed_ms = res.elapsed_ms;
  return out;
}

// ---------------------------------------------------------------------------
// Gradient-descent baseline with hinge penalties
// ---------------------------------------------------------------------------

namespace {

// Value plus gradient with respect to the flattened weight matrix.
struct Dual {
  double v = 0.0;
  std::vector<double> g;  // empty means identically zero
};

void axpy(std::vector<double>& acc, double scale, const std::vector<double>& inc,
          std::size_t size) {
  if (inc.empty() || scale == 0.0) return;
  if (acc.empty()) acc.assign(size, 0.0);
  for (std::size_t i = 0; i < size; ++i) acc[i] += scale * inc[i];
}

struct HingeCompiler {
  const Dataset& d;
  const LinearModel& m;
  std::size_t flat_size;

  std::size_t feature(const std::string& name) const {
    const auto idx = d.feature_index(name);
    if (!idx)
      throw TrainError("penalty form not hinge-expressible: '" + name +
                       "' is not a numeric feature");
    return *idx;
  }

  std::size_t target(const std::string& name) const {
    const auto idx = d.target_index(name);
    if (!idx) throw TrainError("penalty references unknown target '" + name + "'");
    return *idx;
  }

  bool term_mentions_model(const Term& t) const {
    if (t.kind == TermKind::Pred || t.kind == TermKind::SumPreds) return true;
    for (const TermPtr& a : t.args)
      if (term_mentions_model(*a)) return true;
    return false;
  }

  // Structural admission check, run before any data is touched.
  void check_term(const Term& t) const {
    switch (t.kind) {
      case TermKind::Const:
        return;
      case TermKind::Feat:
        feature(t.name);
        return;
      case TermKind::Pred:
        target(t.name);
        return;
      case TermKind::SumPreds:
        return;
      case TermKind::Category:
        throw TrainError("penalty form not hinge-expressible: category literals");
      default:
        for (const TermPtr& a : t.args) check_term(*a);
    }
  }

  void check_antecedent(const Formula& f) const {
    switch (f.kind) {
      case FormulaKind::Compare:
        if (term_mentions_model(*f.lhs) || term_mentions_model(*f.rhs))
          throw TrainError(
              "penalty form not hinge-expressible: implication tests a prediction");
        check_term(*f.lhs);
        check_term(*f.rhs);
        return;
      case FormulaKind::And:
      case FormulaKind::Or:
        for (const FormulaPtr& k : f.kids) check_antecedent(*k);
        return;
      case FormulaKind::Not:
        check_antecedent(*f.kids[0]);
        return;
      default:
        throw TrainError("penalty form not hinge-expressible: antecedent shape");
    }
  }

  void check_body(const Formula& f) const {
    switch (f.kind) {
      case FormulaKind::Compare:
        if (f.op == CmpOp::Eq)
          throw TrainError("penalty form not hinge-expressible: equality comparison");
        check_term(*f.lhs);
        check_term(*f.rhs);
        return;
      case FormulaKind::And:
        for (const FormulaPtr& k : f.kids) check_body(*k);
        return;
      case FormulaKind::Implies:
        check_antecedent(*f.kids[0]);
        check_body(*f.kids[1]);
        return;
      default:
        throw TrainError(
            "penalty form not hinge-expressible: only comparisons, conjunctions and "
            "feature-gated implications have a hinge form");
    }
  }

  void check(const Formula& f) const {
    if (f.kind != FormulaKind::Forall || f.vars.size() != 1)
      throw TrainError(
          "penalty form not hinge-expressible: expected a single-variable forall");
    check_body(*f.kids[0]);
  }

  // --- evaluation at one instance -----------------------------------------

  Dual eval_term(const Term& t, const std::vector<double>& x) const {
    switch (t.kind) {
      case TermKind::Const:
        return {to_double(t.value), {}};
      case TermKind::Feat:
        return {x[feature(t.name)], {}};
      case TermKind::Pred: {
        const std::size_t k = target(t.name);
        Dual out;
        out.v = 0.0;
        out.g.assign(flat_size, 0.0);
        const std::size_t dim = m.dim();
        const std::size_t base = k * (dim + 1);
        for (std::size_t j = 0; j < dim; ++j) {
          out.v += m.weights_f[k][j] * x[j];
          out.g[base + j] = x[j];
        }
        out.v += m.weights_f[k][dim];
        out.g[base + dim] = 1.0;
        return out;
      }
      case TermKind::SumPreds: {
        Dual out;
        out.g.assign(flat_size, 0.0);
        const std::size_t dim = m.dim();
        for (std::size_t k = 0; k < m.n_outputs(); ++k) {
          const std::size_t base = k * (dim + 1);
          for (std::size_t j = 0; j < dim; ++j) {
            out.v += m.weights_f[k][j] * x[j];
            out.g[base + j] = x[j];
          }
          out.v += m.weights_f[k][dim];
          out.g[base + dim] = 1.0;
        }
        return out;
      }
      case TermKind::Add: {
        Dual out;
        for (const TermPtr& a : t.args) {
          const Dual part = eval_term(*a, x);
          out.v += part.v;
          axpy(out.g, 1.0, part.g, flat_size);
        }
        return out;
      }
      case TermKind::Sub: {
        if (t.args.size() == 1) {
          Dual out = eval_term(*t.args[0], x);
          out.v = -out.v;
          for (double& v : out.g) v = -v;
          return out;
        }
        Dual out = eval_term(*t.args[0], x);
        const Dual b = eval_term(*t.args[1], x);
        out.v -= b.v;
        axpy(out.g, -1.0, b.g, flat_size);
        return out;
      }
      case TermKind::Mul: {
        Dual out{1.0, {}};
        for (const TermPtr& a : t.args) {
          const Dual part = eval_term(*a, x);
          std::vector<double> g;
          axpy(g, part.v, out.g, flat_size);
          axpy(g, out.v, part.g, flat_size);
          out.v *= part.v;
          out.g = std::move(g);
        }
        return out;
      }
      case TermKind::Div: {
        Dual out = eval_term(*t.args[0], x);
        const double q = to_double(t.args[1]->value);
        out.v /= q;
        for (double& v : out.g) v /= q;
        return out;
      }
      default:
        throw TrainError("penalty form not hinge-expressible: category literals");
    }
  }

  bool antecedent_holds(const Formula& f, const std::vector<double>& x) const {
    switch (f.kind) {
      case FormulaKind::Compare: {
        const double a = eval_term(*f.lhs, x).v;
        const double b = eval_term(*f.rhs, x).v;
        switch (f.op) {
          case CmpOp::Lt: return a < b;
          case CmpOp::Le: return a <= b;
          case CmpOp::Eq: return a == b;
          case CmpOp::Ge: return a >= b;
          case CmpOp::Gt: return a > b;
        }
        return false;
      }
      case FormulaKind::And:
        for (const FormulaPtr& k : f.kids)
          if (!antecedent_holds(*k, x)) return false;
        return true;
      case FormulaKind::Or:
        for (const FormulaPtr& k : f.kids)
          if (antecedent_holds(*k, x)) return true;
        return false;
      case FormulaKind::Not:
        return !antecedent_holds(*f.kids[0], x);
      default:
        throw TrainError("penalty form not hinge-expressible: antecedent shape");
    }
  }

  // max(0, violation) and its subgradient; zero when satisfied.
  Dual eval_body(const Formula& f, const std::vector<double>& x) const {
    switch (f.kind) {
      case FormulaKind::Compare: {
        // lhs <= rhs violated by lhs - rhs; flipped for >=.
        Dual diff = eval_term(*f.lhs, x);
        const Dual rhs = eval_term(*f.rhs, x);
        diff.v -= rhs.v;
        axpy(diff.g, -1.0, rhs.g, flat_size);
        if (f.op == CmpOp::Ge || f.op == CmpOp::Gt) {
          diff.v = -diff.v;
          for (double& v : diff.g) v = -v;
        }
        if (diff.v > 0) return diff;
        return {};
      }
      case FormulaKind::And: {
        Dual out;
        for (const FormulaPtr& k : f.kids) {
          const Dual part = eval_body(*k, x);
          out.v += part.v;
          axpy(out.g, 1.0, part.g, flat_size);
        }
        return out;
      }
      case FormulaKind::Implies:
        if (!antecedent_holds(*f.kids[0], x)) return {};
        return eval_body(*f.kids[1], x);
      default:
        throw TrainError("penalty form not hinge-expressible");
    }
  }

  Dual eval(const Formula& f, const std::vector<double>& x) const {
    return eval_body(*f.kids[0], x);
  }
};

}  // namespace

LinearModel gd_train(const Dataset& d, const TrainConfig& cfg, double lambda,
                     const ConstraintSet* ks) {
  validate_train_config(cfg, d.schema.task);
  if (d.n() == 0) throw TrainError("cannot train on an empty dataset");
  if (lambda < 0) throw TrainError("penalty weight must be nonnegative");

  LinearModel m = make_model(d);
  const LossKind lk = loss_kind_for(d.schema.task);
  const std::size_t rows = m.n_outputs();
  const std::size_t cols = m.dim() + 1;
  const std::size_t flat = rows * cols;

  HingeCompiler hinge{d, m, flat};
  if (lambda > 0) {
    if (!ks || ks->empty())
      throw TrainError("a positive penalty weight needs constraints to penalize");
    for (const NamedConstraint& k : *ks) hinge.check(*k.formula);
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> init(-0.01, 0.01);
  std::vector<std::vector<double>> w(rows, std::vector<double>(cols));
  for (auto& row : w)
    for (double& v : row) v = init(rng);

  auto apply_weights = [&]() {
    std::vector<std::vector<Rational>> exact(rows, std::vector<Rational>(cols));
    for (std::size_t k = 0; k < rows; ++k)
      for (std::size_t i = 0; i < cols; ++i) exact[k][i] = rational_from_double(w[k][i]);
    m.set_weights(std::move(exact));
  };

  const std::vector<Batch> batches = partition_batches(d, cfg.batch_size, cfg.seed);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const Batch& batch : batches) {
      apply_weights();
      std::vector<std::vector<double>> grad = gradient(m, d, lk, batch.instance_ids);
      if (lambda > 0) {
        std::vector<double> pen(flat, 0.0);
        for (std::size_t id : batch.instance_ids)
          for (const NamedConstraint& k : *ks)
            axpy(pen, 1.0, hinge.eval(*k.formula, d.instances[id].x).g, flat);
        const double scale = lambda / static_cast<double>(batch.instance_ids.size());
        for (std::size_t k = 0; k < rows; ++k)
          for (std::size_t i = 0; i < cols; ++i) grad[k][i] += scale * pen[k * cols + i];
      }
      for (std::size_t k = 0; k < rows; ++k)
        for (std::size_t i = 0; i < cols; ++i) w[k][i] -= cfg.learning_rate * grad[k][i];
    }
  }
  apply_weights();
  return m;
}

}  // namespace sade
