#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace sade {

// Minimal s-expression reader shared by the constraint language and the
// solver response parser. Atoms keep their source text; lists own children.
struct SExpr {
  bool is_atom = false;
  std::string atom;             // valid when is_atom
  std::vector<SExpr> children;  // valid when !is_atom
  int line = 0;
  int col = 0;

  const SExpr& at(std::size_t i) const { return children.at(i); }
  std::size_t size() const { return children.size(); }
  std::string str() const;
};

struct SExprError : std::runtime_error {
  int line;
  int col;
  SExprError(const std::string& msg, int line_, int col_)
      : std::runtime_error(msg + " (line " + std::to_string(line_) + ", column " +
                           std::to_string(col_) + ")"),
        line(line_),
        col(col_) {}
};

// Parses every top-level s-expression in `text`. `;` starts a line comment.
// Quoted atoms ("..." with "" escaping and |...|) are supported.
std::vector<SExpr> parse_sexprs(const std::string& text);

// Convenience: parse exactly one expression.
SExpr parse_sexpr(const std::string& text);

}  // namespace sade
