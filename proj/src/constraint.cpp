#include "sade/constraint.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "sade/sexpr.hpp"

namespace sade {

std::string to_string(CmpOp op) {
  switch (op) {
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Eq: return "=";
    case CmpOp::Ge: return ">=";
    case CmpOp::Gt: return ">";
  }
  return "?";
}

namespace {

[[noreturn]] void fail_at(const SExpr& where, const std::string& msg) {
  throw ConstraintError(msg + " (line " + std::to_string(where.line) + ", column " +
                        std::to_string(where.col) + ")");
}

// Feature name "ch=0" belongs to source column "ch"; plain names are their
// own column.
std::string source_column_of(const std::string& feature_name) {
  auto pos = feature_name.find('=');
  return pos == std::string::npos ? feature_name : feature_name.substr(0, pos);
}

// Quantified variables become solver symbol prefixes, so keep them plain.
bool valid_var_name(const std::string& s) {
  if (s.empty() || !std::isalpha(static_cast<unsigned char>(s[0]))) return false;
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isalnum(c); });
}

std::optional<CmpOp> cmp_from_token(const std::string& t) {
  if (t == "<") return CmpOp::Lt;
  if (t == "<=") return CmpOp::Le;
  if (t == "=") return CmpOp::Eq;
  if (t == ">=") return CmpOp::Ge;
  if (t == ">") return CmpOp::Gt;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
  const Schema& schema;
  // Pred names are fully known from the schema except for multiclass tasks,
  // where the rows are named after class labels seen only in the data; those
  // resolve in validate()/instantiate-time checks instead.
  bool preds_checkable;
  std::vector<std::string> schema_targets;

  explicit Parser(const Schema& s) : schema(s) {
    preds_checkable = s.task != TaskKind::MulticlassClassification;
    for (auto i : s.target_indices()) schema_targets.push_back(s.columns[i].name);
  }

  std::optional<ColumnKind> column_kind(const std::string& name) const {
    for (const auto& c : schema.columns) {
      if (c.name == name) return c.kind;
    }
    return std::nullopt;
  }

  bool is_categorical_column(const std::string& name) const {
    return column_kind(name) == ColumnKind::Categorical;
  }

  // A feature reference is a numeric column or a one-hot coordinate
  // "col=category" of a categorical column. Bare categorical columns are
  // handled by the equality sugar only.
  void check_feature_name(const SExpr& at, const std::string& name) const {
    auto kind = column_kind(name);
    if (kind == ColumnKind::Numeric) return;
    if (kind == ColumnKind::Target) fail_at(at, "'" + name + "' is a target, not a feature");
    if (kind == ColumnKind::Categorical) {
      fail_at(at, "categorical feature '" + name +
                      "' can only be tested as (= (feat <var> " + name + ") <category>)");
    }
    if (name.find('=') != std::string::npos &&
        is_categorical_column(source_column_of(name))) {
      return;  // one-hot coordinate; category existence checked at use time
    }
    fail_at(at, "unknown feature '" + name + "'");
  }

  std::string parse_var(const SExpr& e, const std::vector<std::string>& scope) const {
    if (!e.is_atom) fail_at(e, "expected a variable name");
    if (std::find(scope.begin(), scope.end(), e.atom) == scope.end()) {
      fail_at(e, "unbound variable '" + e.atom + "'");
    }
    return e.atom;
  }

  // True when `e` is (feat <bound var> <bare categorical column>).
  bool is_categorical_feat(const SExpr& e, const std::vector<std::string>& scope) const {
    return !e.is_atom && e.size() == 3 && e.at(0).is_atom && e.at(0).atom == "feat" &&
           e.at(1).is_atom &&
           std::find(scope.begin(), scope.end(), e.at(1).atom) != scope.end() &&
           e.at(2).is_atom && is_categorical_column(e.at(2).atom);
  }

  TermPtr parse_term(const SExpr& e, const std::vector<std::string>& scope) const {
    auto t = std::make_shared<Term>();
    if (e.is_atom) {
      auto r = try_parse_rational(e.atom);
      if (!r) fail_at(e, "expected a number, found '" + e.atom + "'");
      t->kind = TermKind::Const;
      t->value = *r;
      return t;
    }
    if (e.size() == 0 || !e.at(0).is_atom) fail_at(e, "expected a term");
    const std::string& head = e.at(0).atom;

    if (head == "feat") {
      if (e.size() != 3 || !e.at(2).is_atom) fail_at(e, "feat takes (feat <var> <feature>)");
      t->kind = TermKind::Feat;
      t->var = parse_var(e.at(1), scope);
      t->name = e.at(2).atom;
      check_feature_name(e.at(2), t->name);
      return t;
    }
    if (head == "pred") {
      if (e.size() != 3 || !e.at(2).is_atom) fail_at(e, "pred takes (pred <var> <target>)");
      t->kind = TermKind::Pred;
      t->var = parse_var(e.at(1), scope);
      t->name = e.at(2).atom;
      if (preds_checkable &&
          std::find(schema_targets.begin(), schema_targets.end(), t->name) ==
              schema_targets.end()) {
        fail_at(e.at(2), "unknown target '" + t->name + "'");
      }
      return t;
    }
    if (head == "sum_preds") {
      if (e.size() != 2) fail_at(e, "sum_preds takes (sum_preds <var>)");
      t->kind = TermKind::SumPreds;
      t->var = parse_var(e.at(1), scope);
      return t;
    }
    if (head == "+" || head == "*") {
      if (e.size() < 3) fail_at(e, "'" + head + "' takes at least two arguments");
      t->kind = head == "+" ? TermKind::Add : TermKind::Mul;
      for (std::size_t i = 1; i < e.size(); ++i) t->args.push_back(parse_term(e.at(i), scope));
      return t;
    }
    if (head == "-") {
      if (e.size() != 2 && e.size() != 3) fail_at(e, "'-' takes one or two arguments");
      t->kind = TermKind::Sub;
      for (std::size_t i = 1; i < e.size(); ++i) t->args.push_back(parse_term(e.at(i), scope));
      return t;
    }
    if (head == "/") {
      if (e.size() != 3) fail_at(e, "'/' takes (/ <term> <nonzero constant>)");
      t->kind = TermKind::Div;
      t->args.push_back(parse_term(e.at(1), scope));
      auto divisor = parse_term(e.at(2), scope);
      if (divisor->kind != TermKind::Const) {
        fail_at(e.at(2), "division is only allowed by a constant");
      }
      if (divisor->value == 0) fail_at(e.at(2), "division by zero");
      t->args.push_back(divisor);
      return t;
    }
    fail_at(e, "unknown term '" + head + "'");
  }

  FormulaPtr parse_compare(const SExpr& e, CmpOp op, const std::vector<std::string>& scope) const {
    if (e.size() != 3) fail_at(e, "comparison takes two arguments");
    auto f = std::make_shared<Formula>();
    f->kind = FormulaKind::Compare;
    f->op = op;

    // Equality sugar for categoricals: (= (feat x ch) 0) / (= 0 (feat x ch)).
    const SExpr* feat_side = nullptr;
    const SExpr* lit_side = nullptr;
    if (is_categorical_feat(e.at(1), scope)) {
      feat_side = &e.at(1);
      lit_side = &e.at(2);
    } else if (is_categorical_feat(e.at(2), scope)) {
      feat_side = &e.at(2);
      lit_side = &e.at(1);
    }
    if (feat_side) {
      if (op != CmpOp::Eq) {
        fail_at(e, "categorical feature '" + feat_side->at(2).atom +
                       "' only supports equality with a category");
      }
      if (!lit_side->is_atom) fail_at(*lit_side, "expected a category literal");
      auto lhs = std::make_shared<Term>();
      lhs->kind = TermKind::Feat;
      lhs->var = feat_side->at(1).atom;
      lhs->name = feat_side->at(2).atom;
      auto rhs = std::make_shared<Term>();
      rhs->kind = TermKind::Category;
      rhs->name = lit_side->atom;
      f->lhs = lhs;
      f->rhs = rhs;
      return f;
    }

    f->lhs = parse_term(e.at(1), scope);
    f->rhs = parse_term(e.at(2), scope);
    return f;
  }

  FormulaPtr parse_formula(const SExpr& e, std::vector<std::string>& scope) const {
    if (e.is_atom) fail_at(e, "expected a formula, found atom '" + e.atom + "'");
    if (e.size() == 0 || !e.at(0).is_atom) fail_at(e, "expected a formula");
    const std::string& head = e.at(0).atom;
    auto f = std::make_shared<Formula>();

    if (auto op = cmp_from_token(head)) return parse_compare(e, *op, scope);

    if (head == "forall") {
      if (e.size() != 3 || e.at(1).is_atom) {
        fail_at(e, "forall takes (forall (<var>...) <formula>)");
      }
      f->kind = FormulaKind::Forall;
      if (e.at(1).size() == 0) fail_at(e.at(1), "forall needs at least one variable");
      for (const auto& v : e.at(1).children) {
        if (!v.is_atom || !valid_var_name(v.atom)) {
          fail_at(v, "variable names must be alphanumeric and start with a letter");
        }
        if (std::find(scope.begin(), scope.end(), v.atom) != scope.end() ||
            std::find(f->vars.begin(), f->vars.end(), v.atom) != f->vars.end()) {
          fail_at(v, "variable '" + v.atom + "' is already bound");
        }
        f->vars.push_back(v.atom);
      }
      std::size_t outer = scope.size();
      scope.insert(scope.end(), f->vars.begin(), f->vars.end());
      f->kids.push_back(parse_formula(e.at(2), scope));
      scope.resize(outer);
      return f;
    }
    if (head == "and" || head == "or") {
      if (e.size() < 3) fail_at(e, "'" + head + "' takes at least two formulas");
      f->kind = head == "and" ? FormulaKind::And : FormulaKind::Or;
      for (std::size_t i = 1; i < e.size(); ++i) f->kids.push_back(parse_formula(e.at(i), scope));
      return f;
    }
    if (head == "not") {
      if (e.size() != 2) fail_at(e, "'not' takes one formula");
      f->kind = FormulaKind::Not;
      f->kids.push_back(parse_formula(e.at(1), scope));
      return f;
    }
    if (head == "=>") {
      if (e.size() != 3) fail_at(e, "'=>' takes two formulas");
      f->kind = FormulaKind::Implies;
      f->kids.push_back(parse_formula(e.at(1), scope));
      f->kids.push_back(parse_formula(e.at(2), scope));
      return f;
    }
    if (head == "eqexcept") {
      if (e.size() != 4 || !e.at(3).is_atom) {
        fail_at(e, "eqexcept takes (eqexcept <var> <var> <feature>)");
      }
      f->kind = FormulaKind::EqExcept;
      f->var_a = parse_var(e.at(1), scope);
      f->var_b = parse_var(e.at(2), scope);
      f->except_name = e.at(3).atom;
      auto kind = column_kind(f->except_name);
      bool one_hot_name = f->except_name.find('=') != std::string::npos &&
                          is_categorical_column(source_column_of(f->except_name));
      if (kind == ColumnKind::Target) {
        fail_at(e.at(3), "'" + f->except_name + "' is a target, not a feature");
      }
      if (kind != ColumnKind::Numeric && kind != ColumnKind::Categorical && !one_hot_name) {
        fail_at(e.at(3), "unknown feature '" + f->except_name + "'");
      }
      return f;
    }
    fail_at(e, "unknown form '" + head + "'");
  }
};

}  // namespace

FormulaPtr parse_constraint(const std::string& text, const Schema& schema) {
  std::vector<SExpr> exprs;
  try {
    exprs = parse_sexprs(text);
  } catch (const SExprError& e) {
    throw ConstraintError(e.what());
  }
  if (exprs.size() != 1) {
    throw ConstraintError("expected exactly one formula, found " + std::to_string(exprs.size()));
  }
  Parser p(schema);
  std::vector<std::string> scope;
  return p.parse_formula(exprs[0], scope);
}

ConstraintSet parse_constraint_file(const std::string& text, const Schema& schema) {
  std::vector<SExpr> exprs;
  try {
    exprs = parse_sexprs(text);
  } catch (const SExprError& e) {
    throw ConstraintError(e.what());
  }
  Parser p(schema);
  ConstraintSet out;
  std::set<std::string> names;
  for (const auto& e : exprs) {
    if (e.is_atom || e.size() != 3 || !e.at(0).is_atom || e.at(0).atom != "constraint" ||
        !e.at(1).is_atom) {
      fail_at(e, "expected (constraint <name> <formula>)");
    }
    if (!names.insert(e.at(1).atom).second) {
      fail_at(e.at(1), "duplicate constraint name '" + e.at(1).atom + "'");
    }
    std::vector<std::string> scope;
    NamedConstraint c;
    c.name = e.at(1).atom;
    c.formula = p.parse_formula(e.at(2), scope);
    c.source = print_formula(*c.formula);
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

namespace {

std::string print_atom(const std::string& s) {
  if (!s.empty() && s.find_first_of(" \t\r\n()|;\"") == std::string::npos) return s;
  return "|" + s + "|";
}

std::string print_term(const Term& t) {
  switch (t.kind) {
    case TermKind::Const: return fraction_string(t.value);
    case TermKind::Feat: return "(feat " + print_atom(t.var) + " " + print_atom(t.name) + ")";
    case TermKind::Pred: return "(pred " + print_atom(t.var) + " " + print_atom(t.name) + ")";
    case TermKind::SumPreds: return "(sum_preds " + print_atom(t.var) + ")";
    case TermKind::Category: return print_atom(t.name);
    case TermKind::Add:
    case TermKind::Mul:
    case TermKind::Sub:
    case TermKind::Div: {
      std::string head = t.kind == TermKind::Add   ? "+"
                         : t.kind == TermKind::Mul ? "*"
                         : t.kind == TermKind::Sub ? "-"
                                                   : "/";
      std::string out = "(" + head;
      for (const auto& a : t.args) out += " " + print_term(*a);
      return out + ")";
    }
  }
  return "?";
}

}  // namespace

std::string print_formula(const Formula& f) {
  switch (f.kind) {
    case FormulaKind::Compare:
      return "(" + to_string(f.op) + " " + print_term(*f.lhs) + " " + print_term(*f.rhs) + ")";
    case FormulaKind::And:
    case FormulaKind::Or: {
      std::string out = f.kind == FormulaKind::And ? "(and" : "(or";
      for (const auto& k : f.kids) out += " " + print_formula(*k);
      return out + ")";
    }
    case FormulaKind::Not: return "(not " + print_formula(*f.kids[0]) + ")";
    case FormulaKind::Implies:
      return "(=> " + print_formula(*f.kids[0]) + " " + print_formula(*f.kids[1]) + ")";
    case FormulaKind::Forall: {
      std::string out = "(forall (";
      for (std::size_t i = 0; i < f.vars.size(); ++i) {
        out += (i ? " " : "") + print_atom(f.vars[i]);
      }
      return out + ") " + print_formula(*f.kids[0]) + ")";
    }
    case FormulaKind::EqExcept:
      return "(eqexcept " + print_atom(f.var_a) + " " + print_atom(f.var_b) + " " +
             print_atom(f.except_name) + ")";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

struct Validator {
  const Schema& schema;
  const std::vector<std::string>& targets;
  std::vector<ValidationIssue> issues;

  void add(const std::string& where, const std::string& msg) { issues.push_back({where, msg}); }

  std::optional<ColumnKind> column_kind(const std::string& name) const {
    for (const auto& c : schema.columns) {
      if (c.name == name) return c.kind;
    }
    return std::nullopt;
  }

  bool feature_ok(const std::string& name) const {
    auto kind = column_kind(name);
    if (kind == ColumnKind::Numeric) return true;
    return name.find('=') != std::string::npos &&
           column_kind(source_column_of(name)) == ColumnKind::Categorical;
  }

  void check_var(const std::string& v, const std::vector<std::string>& scope,
                 const std::string& where) {
    if (std::find(scope.begin(), scope.end(), v) == scope.end()) {
      add(where, "unbound variable '" + v + "'");
    }
  }

  void term(const Term& t, const std::string& where, const std::vector<std::string>& scope) {
    switch (t.kind) {
      case TermKind::Const: return;
      case TermKind::Category:
        add(where, "category literal outside (= (feat <var> <column>) <category>)");
        return;
      case TermKind::Feat:
        check_var(t.var, scope, where);
        if (column_kind(t.name) == ColumnKind::Categorical) {
          add(where, "categorical feature '" + t.name + "' outside an equality test");
        } else if (!feature_ok(t.name)) {
          add(where, "unknown feature '" + t.name + "'");
        }
        return;
      case TermKind::Pred:
        check_var(t.var, scope, where);
        if (std::find(targets.begin(), targets.end(), t.name) == targets.end()) {
          add(where, "unknown target '" + t.name + "'");
        }
        return;
      case TermKind::SumPreds: check_var(t.var, scope, where); return;
      case TermKind::Add:
      case TermKind::Mul:
        if (t.args.size() < 2) add(where, "arithmetic needs at least two operands");
        break;
      case TermKind::Sub:
        if (t.args.empty() || t.args.size() > 2) add(where, "'-' takes one or two operands");
        break;
      case TermKind::Div:
        if (t.args.size() != 2 || t.args[1]->kind != TermKind::Const) {
          add(where, "division is only allowed by a constant");
        } else if (t.args[1]->value == 0) {
          add(where, "division by zero");
        }
        break;
    }
    for (std::size_t i = 0; i < t.args.size(); ++i) {
      term(*t.args[i], where + "/" + std::to_string(i), scope);
    }
  }

  void formula(const Formula& f, const std::string& where, std::vector<std::string>& scope,
               bool top) {
    switch (f.kind) {
      case FormulaKind::Forall: {
        if (!top) {
          add(where, "quantifiers are only allowed at the top level");
        }
        if (f.vars.empty()) add(where, "forall needs at least one variable");
        std::size_t outer = scope.size();
        for (const auto& v : f.vars) {
          if (!valid_var_name(v)) {
            add(where, "bad variable name '" + v + "'");
          }
          if (std::count(scope.begin(), scope.end(), v) > 0 ||
              std::count(f.vars.begin(), f.vars.end(), v) > 1) {
            add(where, "variable '" + v + "' bound twice");
          }
          scope.push_back(v);
        }
        if (f.kids.size() == 1) {
          formula(*f.kids[0], where + "/forall", scope, false);
        } else {
          add(where, "malformed forall");
        }
        scope.resize(outer);
        return;
      }
      case FormulaKind::Compare: {
        if (!f.lhs || !f.rhs) {
          add(where, "malformed comparison");
          return;
        }
        // categorical equality is the one sanctioned use of Category
        bool cat_eq = f.op == CmpOp::Eq && f.lhs->kind == TermKind::Feat &&
                      column_kind(f.lhs->name) == ColumnKind::Categorical &&
                      f.rhs->kind == TermKind::Category;
        if (cat_eq) {
          check_var(f.lhs->var, scope, where);
          return;
        }
        term(*f.lhs, where + "/lhs", scope);
        term(*f.rhs, where + "/rhs", scope);
        return;
      }
      case FormulaKind::And:
      case FormulaKind::Or:
        if (f.kids.size() < 2) add(where, "connective needs at least two formulas");
        break;
      case FormulaKind::Not:
        if (f.kids.size() != 1) add(where, "'not' takes one formula");
        break;
      case FormulaKind::Implies:
        if (f.kids.size() != 2) add(where, "'=>' takes two formulas");
        break;
      case FormulaKind::EqExcept: {
        check_var(f.var_a, scope, where);
        check_var(f.var_b, scope, where);
        auto kind = column_kind(f.except_name);
        if (kind == ColumnKind::Target) {
          add(where, "'" + f.except_name + "' is a target, not a feature");
        } else if (kind != ColumnKind::Numeric && kind != ColumnKind::Categorical &&
                   !feature_ok(f.except_name)) {
          add(where, "unknown feature '" + f.except_name + "'");
        }
        return;
      }
    }
    const char* names[] = {"?", "and", "or", "not", "=>"};
    for (std::size_t i = 0; i < f.kids.size(); ++i) {
      formula(*f.kids[i], where + "/" + names[static_cast<int>(f.kind)] +
                              (f.kids.size() > 1 ? "[" + std::to_string(i) + "]" : ""),
              scope, false);
    }
  }
};

}  // namespace

std::vector<ValidationIssue> validate(const Formula& f, const Schema& schema,
                                      const std::vector<std::string>& targets) {
  Validator v{schema, targets, {}};
  std::vector<std::string> scope;
  if (f.kind != FormulaKind::Forall) {
    v.add("", "a domain constraint must be universally quantified: (forall (...) ...)");
    v.formula(f, "", scope, false);
  } else {
    v.formula(f, "forall", scope, true);
  }
  return v.issues;
}

// ---------------------------------------------------------------------------
// Instantiation
// ---------------------------------------------------------------------------

namespace {

struct Emitter {
  const AffineEmitter& model;
  const std::vector<std::pair<double, double>>& bounds;
  std::map<std::string, std::vector<std::string>> scope;  // var -> coord symbols

  std::size_t dim() const { return model.feature_names.size(); }

  const std::vector<std::string>& coords(const std::string& var) const {
    auto it = scope.find(var);
    if (it == scope.end()) throw ConstraintError("variable '" + var + "' is not bound");
    return it->second;
  }

  std::size_t feature_coord(const std::string& name) const {
    for (std::size_t i = 0; i < model.feature_names.size(); ++i) {
      if (model.feature_names[i] == name) return i;
    }
    throw ConstraintError("feature '" + name + "' does not exist in the trained feature space");
  }

  std::size_t target_row(const std::string& name) const {
    for (std::size_t i = 0; i < model.target_names.size(); ++i) {
      if (model.target_names[i] == name) return i;
    }
    throw ConstraintError("unknown target '" + name + "'");
  }

  std::vector<std::string> bind(const std::string& var) {
    std::vector<std::string> syms;
    for (std::size_t i = 0; i < dim(); ++i) syms.push_back(var + "_" + std::to_string(i));
    scope[var] = syms;
    return syms;
  }

  std::string term(const Term& t) const {
    switch (t.kind) {
      case TermKind::Const: return smt_literal(t.value);
      case TermKind::Feat: return coords(t.var)[feature_coord(t.name)];
      case TermKind::Pred: return model.row(target_row(t.name), coords(t.var));
      case TermKind::SumPreds: {
        const auto& c = coords(t.var);
        if (model.target_names.size() == 1) return model.row(0, c);
        std::string out = "(+";
        for (std::size_t k = 0; k < model.target_names.size(); ++k) {
          out += " " + model.row(k, c);
        }
        return out + ")";
      }
      case TermKind::Category:
        throw ConstraintError("category literal outside an equality test");
      case TermKind::Add:
      case TermKind::Mul:
      case TermKind::Sub: {
        std::string head = t.kind == TermKind::Add ? "+" : t.kind == TermKind::Mul ? "*" : "-";
        std::string out = "(" + head;
        for (const auto& a : t.args) out += " " + term(*a);
        return out + ")";
      }
      case TermKind::Div:
        // emit as multiplication by the exact inverse; keeps the formula
        // free of real division
        return "(* " + term(*t.args[0]) + " " + smt_literal(Rational(1) / t.args[1]->value) +
               ")";
    }
    throw ConstraintError("malformed term");
  }

  // (= (feat x ch) lit) -> the one-hot coordinate "ch=lit" equals 1
  std::string categorical_eq(const Formula& f) const {
    std::string coord_name = f.lhs->name + "=" + f.rhs->name;
    std::size_t idx;
    try {
      idx = feature_coord(coord_name);
    } catch (const ConstraintError&) {
      throw ConstraintError("category '" + f.rhs->name + "' of column '" + f.lhs->name +
                            "' does not appear in the data");
    }
    return "(= " + coords(f.lhs->var)[idx] + " 1)";
  }

  bool is_categorical_eq(const Formula& f) const {
    return f.kind == FormulaKind::Compare && f.rhs && f.rhs->kind == TermKind::Category;
  }

  std::string eqexcept(const Formula& f) const {
    const auto& a = coords(f.var_a);
    const auto& b = coords(f.var_b);
    std::vector<std::string> eqs;
    for (std::size_t j = 0; j < dim(); ++j) {
      const std::string& name = model.feature_names[j];
      if (name == f.except_name || source_column_of(name) == f.except_name) continue;
      eqs.push_back("(= " + a[j] + " " + b[j] + ")");
    }
    if (eqs.empty()) return "true";
    if (eqs.size() == 1) return eqs[0];
    std::string out = "(and";
    for (const auto& e : eqs) out += " " + e;
    return out + ")";
  }

  std::string box_guard(const std::vector<std::string>& syms) const {
    std::string out = "(and";
    for (std::size_t i = 0; i < syms.size(); ++i) {
      out += " (<= " + smt_literal(rational_from_double(bounds[i].first)) + " " + syms[i] + ")";
      out += " (<= " + syms[i] + " " + smt_literal(rational_from_double(bounds[i].second)) + ")";
    }
    return out + ")";
  }

  std::string formula(const Formula& f) {
    switch (f.kind) {
      case FormulaKind::Compare:
        if (is_categorical_eq(f)) return categorical_eq(f);
        return "(" + to_string(f.op) + " " + term(*f.lhs) + " " + term(*f.rhs) + ")";
      case FormulaKind::And:
      case FormulaKind::Or: {
        std::string out = f.kind == FormulaKind::And ? "(and" : "(or";
        for (const auto& k : f.kids) out += " " + formula(*k);
        return out + ")";
      }
      case FormulaKind::Not: return "(not " + formula(*f.kids[0]) + ")";
      case FormulaKind::Implies:
        return "(=> " + formula(*f.kids[0]) + " " + formula(*f.kids[1]) + ")";
      case FormulaKind::EqExcept: return eqexcept(f);
      case FormulaKind::Forall: {
        std::string decls;
        std::string guards = "(and";
        for (const auto& v : f.vars) {
          auto syms = bind(v);
          for (const auto& s : syms) decls += (decls.empty() ? "(" : " (") + s + " Real)";
          for (std::size_t i = 0; i < syms.size(); ++i) {
            guards += " (<= " + smt_literal(rational_from_double(bounds[i].first)) + " " +
                      syms[i] + ")";
            guards += " (<= " + syms[i] + " " +
                      smt_literal(rational_from_double(bounds[i].second)) + ")";
          }
        }
        guards += ")";
        std::string body = formula(*f.kids[0]);
        for (const auto& v : f.vars) scope.erase(v);
        return "(forall (" + decls + ") (=> " + guards + " " + body + "))";
      }
    }
    throw ConstraintError("malformed formula");
  }
};

void check_arity(const AffineEmitter& model, const std::vector<std::pair<double, double>>& bounds) {
  if (bounds.size() != model.feature_names.size()) {
    throw ConstraintError("bounds cover " + std::to_string(bounds.size()) +
                          " features, model has " + std::to_string(model.feature_names.size()));
  }
  if (model.target_names.empty()) throw ConstraintError("model has no outputs");
}

}  // namespace

std::string instantiate_universal(const Formula& f, const AffineEmitter& model,
                                  const std::vector<std::pair<double, double>>& bounds) {
  check_arity(model, bounds);
  Emitter em{model, bounds, {}};
  return em.formula(f);
}

NegationQuery instantiate_negation(const Formula& f, const AffineEmitter& model,
                                   const std::vector<std::pair<double, double>>& bounds) {
  check_arity(model, bounds);
  Emitter em{model, bounds, {}};
  NegationQuery q;

  // peel the quantifier prefix into free symbols with asserted box bounds
  const Formula* body = &f;
  while (body->kind == FormulaKind::Forall) {
    for (const auto& v : body->vars) {
      auto syms = em.bind(v);
      q.var_symbols[v] = syms;
      q.symbols.insert(q.symbols.end(), syms.begin(), syms.end());
      for (std::size_t i = 0; i < syms.size(); ++i) {
        q.assertions.push_back("(<= " + smt_literal(rational_from_double(bounds[i].first)) +
                               " " + syms[i] + ")");
        q.assertions.push_back("(<= " + syms[i] + " " +
                               smt_literal(rational_from_double(bounds[i].second)) + ")");
      }
    }
    if (body->kids.size() != 1) throw ConstraintError("malformed forall");
    body = body->kids[0].get();
  }
  q.assertions.push_back("(not " + em.formula(*body) + ")");
  return q;
}

// ---------------------------------------------------------------------------
// Concrete evaluation
// ---------------------------------------------------------------------------

namespace {

struct PointEval {
  const std::map<std::string, const Instance*>& assignment;
  const PointEvalContext& ctx;
  std::map<std::string, std::vector<Rational>> pred_cache;

  const Instance& inst(const std::string& var) const {
    auto it = assignment.find(var);
    if (it == assignment.end() || !it->second) {
      throw ConstraintError("variable '" + var + "' is not bound to an instance");
    }
    return *it->second;
  }

  std::size_t feature_coord(const std::string& name) const {
    for (std::size_t i = 0; i < ctx.feature_names.size(); ++i) {
      if (ctx.feature_names[i] == name) return i;
    }
    throw ConstraintError("feature '" + name + "' does not exist in the feature space");
  }

  const std::vector<Rational>& preds(const std::string& var) {
    auto it = pred_cache.find(var);
    if (it != pred_cache.end()) return it->second;
    const Instance& i = inst(var);
    std::vector<Rational> p;
    if (ctx.predict) {
      p = ctx.predict(i.x);
    } else {
      for (double y : i.y) p.push_back(rational_from_double(y));  // label as prediction
    }
    if (p.size() != ctx.target_names.size()) {
      throw ConstraintError("prediction arity does not match the target list");
    }
    return pred_cache.emplace(var, std::move(p)).first->second;
  }

  Rational term(const Term& t) {
    switch (t.kind) {
      case TermKind::Const: return t.value;
      case TermKind::Feat: return rational_from_double(inst(t.var).x[feature_coord(t.name)]);
      case TermKind::Pred: {
        for (std::size_t k = 0; k < ctx.target_names.size(); ++k) {
          if (ctx.target_names[k] == t.name) return preds(t.var)[k];
        }
        throw ConstraintError("unknown target '" + t.name + "'");
      }
      case TermKind::SumPreds: {
        Rational sum = 0;
        for (const auto& p : preds(t.var)) sum += p;
        return sum;
      }
      case TermKind::Category: throw ConstraintError("category literal outside an equality test");
      case TermKind::Add: {
        Rational s = 0;
        for (const auto& a : t.args) s += term(*a);
        return s;
      }
      case TermKind::Mul: {
        Rational s = 1;
        for (const auto& a : t.args) s *= term(*a);
        return s;
      }
      case TermKind::Sub:
        if (t.args.size() == 1) return -term(*t.args[0]);
        return term(*t.args[0]) - term(*t.args[1]);
      case TermKind::Div: return term(*t.args[0]) / t.args[1]->value;
    }
    throw ConstraintError("malformed term");
  }

  bool compare(CmpOp op, const Rational& a, const Rational& b) const {
    switch (op) {
      case CmpOp::Lt: return a < b;
      case CmpOp::Le: return a <= b;
      case CmpOp::Eq: return a == b;
      case CmpOp::Ge: return a >= b;
      case CmpOp::Gt: return a > b;
    }
    return false;
  }

  bool formula(const Formula& f) {
    switch (f.kind) {
      case FormulaKind::Compare:
        if (f.rhs && f.rhs->kind == TermKind::Category) {
          std::size_t idx = feature_coord(f.lhs->name + "=" + f.rhs->name);
          return inst(f.lhs->var).x[idx] == 1.0;
        }
        return compare(f.op, term(*f.lhs), term(*f.rhs));
      case FormulaKind::And:
        for (const auto& k : f.kids) {
          if (!formula(*k)) return false;
        }
        return true;
      case FormulaKind::Or:
        for (const auto& k : f.kids) {
          if (formula(*k)) return true;
        }
        return false;
      case FormulaKind::Not: return !formula(*f.kids[0]);
      case FormulaKind::Implies: return !formula(*f.kids[0]) || formula(*f.kids[1]);
      case FormulaKind::Forall: return formula(*f.kids[0]);
      case FormulaKind::EqExcept: {
        const Instance& a = inst(f.var_a);
        const Instance& b = inst(f.var_b);
        for (std::size_t j = 0; j < ctx.feature_names.size(); ++j) {
          const std::string& name = ctx.feature_names[j];
          if (name == f.except_name || source_column_of(name) == f.except_name) continue;
          if (a.x[j] != b.x[j]) return false;
        }
        return true;
      }
    }
    throw ConstraintError("malformed formula");
  }
};

}  // namespace

bool eval_on_point(const Formula& f, const std::map<std::string, const Instance*>& assignment,
                   const PointEvalContext& ctx) {
  PointEval ev{assignment, ctx, {}};
  return ev.formula(f);
}

}  // namespace sade
