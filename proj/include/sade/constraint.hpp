#pragma once

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "sade/dataset.hpp"
#include "sade/rational.hpp"
#include "sade/schema.hpp"

namespace sade {

// Thrown on syntax errors (with line/column) and on instantiation-time
// resolution failures. Static validation returns issue lists instead.
struct ConstraintError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class CmpOp { Lt, Le, Eq, Ge, Gt };

std::string to_string(CmpOp op);

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

struct Term;
using TermPtr = std::shared_ptr<const Term>;

enum class TermKind {
  Const,     // rational literal
  Feat,      // feature of a quantified instance: (feat x income)
  Pred,      // model output for a target: (pred x approved)
  SumPreds,  // sum of all model outputs: (sum_preds x)
  Category,  // category literal, only as the rhs of (= (feat x col) lit)
  Add,       // n-ary +
  Sub,       // binary -, or unary negation with one argument
  Mul,       // n-ary *
  Div        // (/ term nonzero-constant)
};

struct Term {
  TermKind kind = TermKind::Const;
  Rational value;              // Const
  std::string var;             // Feat / Pred / SumPreds
  std::string name;            // Feat: feature or column; Pred: target; Category: text
  std::vector<TermPtr> args;   // arithmetic children (Div: {numerator, divisor})
};

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

enum class FormulaKind { Compare, And, Or, Not, Implies, Forall, EqExcept };

struct Formula {
  FormulaKind kind = FormulaKind::Compare;
  CmpOp op = CmpOp::Lt;            // Compare
  TermPtr lhs, rhs;                // Compare
  std::vector<FormulaPtr> kids;    // And/Or: n-ary; Not: 1; Implies: 2; Forall: 1
  std::vector<std::string> vars;   // Forall
  std::string var_a, var_b, except_name;  // EqExcept(x, xp, name)
};

struct NamedConstraint {
  std::string name;
  FormulaPtr formula;
  std::string source;  // formula text as printed, for reports
};

using ConstraintSet = std::vector<NamedConstraint>;

// ---------------------------------------------------------------------------
// Parsing / printing / validation
// ---------------------------------------------------------------------------

// Parses one formula, e.g.
//   (forall (x) (=> (< (feat x income) 0.3) (< (pred x approved) 0)))
// Resolves names against the schema where possible; categorical feature
// equality (= (feat x ch) 0) is kept symbolic and resolved against the
// one-hot layout at instantiation time. Throws ConstraintError with
// line/column on syntax errors.
FormulaPtr parse_constraint(const std::string& text, const Schema& schema);

// Parses a constraint file: one (constraint <name> <formula>) per entry,
// `;` line comments. Duplicate names are rejected.
ConstraintSet parse_constraint_file(const std::string& text, const Schema& schema);

// Canonical s-expression text; print-then-parse yields a structurally
// identical AST.
std::string print_formula(const Formula& f);

struct ValidationIssue {
  std::string where;    // breadcrumb into the formula, e.g. "forall/=>/lhs"
  std::string message;
};

// Static checks: quantification shape (one top-level forall, no nesting),
// variable binding and naming, feature/target resolution against the schema
// and target list, divisor restrictions, categorical usage. Returns all
// problems found; empty means valid. Never throws.
std::vector<ValidationIssue> validate(const Formula& f, const Schema& schema,
                                      const std::vector<std::string>& targets);

// ---------------------------------------------------------------------------
// Instantiation against a model
// ---------------------------------------------------------------------------

// Decouples this module from the concrete model type: supplies the feature
// coordinate layout, the target row names, and the affine expression of
// model row k over a quantified variable's coordinate symbols (SMT-LIB
// text). Weights may be free symbols or rational literals; this module
// does not care which.
struct AffineEmitter {
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;
  std::function<std::string(std::size_t row, const std::vector<std::string>& coords)> row;
};

// Universally quantified solver formula: every quantified variable becomes
// a vector of bound reals named <var>_<i>, with the box l_i <= var_i <= u_i
// guarding the body by implication. Returns a single SMT-LIB term (no
// surrounding assert). Throws ConstraintError on unresolved names.
std::string instantiate_universal(const Formula& f, const AffineEmitter& model,
                                  const std::vector<std::pair<double, double>>& bounds);

// Negated form for counterexample search: quantified variables become free
// symbols <var>_<i>, the box is asserted, and the body is asserted negated.
// Satisfying assignments are counterexample points.
struct NegationQuery {
  std::vector<std::string> symbols;     // all coordinate symbols to declare
  std::vector<std::string> assertions;  // box constraints plus (not body)
  std::map<std::string, std::vector<std::string>> var_symbols;  // var -> coords
};

NegationQuery instantiate_negation(const Formula& f, const AffineEmitter& model,
                                   const std::vector<std::pair<double, double>>& bounds);

// ---------------------------------------------------------------------------
// Concrete evaluation
// ---------------------------------------------------------------------------

// How (pred x k) is valued when evaluating at concrete points: by applying
// a model, or by reading the instance's label vector ("label as
// prediction", used for recounts and admissible-subset filtering).
struct PointEvalContext {
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;
  // Empty means label-as-prediction mode.
  std::function<std::vector<Rational>(const std::vector<double>& x)> predict;
};

// Truth value of the formula with every quantified variable bound to a
// concrete instance (bounds are not re-checked; callers evaluate data that
// is inside the box by construction). Exact rational arithmetic throughout.
// Throws ConstraintError on unbound variables or unresolved names.
bool eval_on_point(const Formula& f, const std::map<std::string, const Instance*>& assignment,
                   const PointEvalContext& ctx);

}  // namespace sade
