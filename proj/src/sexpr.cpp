#include "sade/sexpr.hpp"

namespace sade {

namespace {

struct Cursor {
  const std::string& text;
  std::size_t pos = 0;
  int line = 1;
  int col = 1;

  bool done() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  char advance() {
    char c = text[pos++];
    if (c == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
    return c;
  }
  void skip_ws() {
    while (!done()) {
      char c = peek();
      if (c == ';') {
        while (!done() && peek() != '\n') advance();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else {
        break;
      }
    }
  }
};

SExpr parse_one(Cursor& cur);

SExpr parse_list(Cursor& cur) {
  SExpr node;
  node.line = cur.line;
  node.col = cur.col;
  cur.advance();  // '('
  while (true) {
    cur.skip_ws();
    if (cur.done()) throw SExprError("unterminated list", node.line, node.col);
    if (cur.peek() == ')') {
      cur.advance();
      return node;
    }
    node.children.push_back(parse_one(cur));
  }
}

SExpr parse_atom(Cursor& cur) {
  SExpr node;
  node.is_atom = true;
  node.line = cur.line;
  node.col = cur.col;
  char c = cur.peek();
  if (c == '"' || c == '|') {
    char quote = c;
    cur.advance();
    while (true) {
      if (cur.done()) throw SExprError("unterminated quoted atom", node.line, node.col);
      char d = cur.advance();
      if (d == quote) {
        if (quote == '"' && !cur.done() && cur.peek() == '"') {
          node.atom.push_back('"');
          cur.advance();
          continue;
        }
        return node;
      }
      node.atom.push_back(d);
    }
  }
  while (!cur.done()) {
    char d = cur.peek();
    if (d == '(' || d == ')' || d == ';' || d == ' ' || d == '\t' || d == '\r' || d == '\n') break;
    node.atom.push_back(cur.advance());
  }
  if (node.atom.empty()) throw SExprError("unexpected character", node.line, node.col);
  return node;
}

SExpr parse_one(Cursor& cur) {
  cur.skip_ws();
  if (cur.done()) throw SExprError("unexpected end of input", cur.line, cur.col);
  if (cur.peek() == '(') return parse_list(cur);
  if (cur.peek() == ')') throw SExprError("unexpected ')'", cur.line, cur.col);
  return parse_atom(cur);
}

}  // namespace

std::string SExpr::str() const {
  if (is_atom) return atom;
  std::string out = "(";
  for (std::size_t i = 0; i < children.size(); ++i) {
    if (i) out.push_back(' ');
    out += children[i].str();
  }
  out.push_back(')');
  return out;
}

std::vector<SExpr> parse_sexprs(const std::string& text) {
  Cursor cur{text};
  std::vector<SExpr> out;
  while (true) {
    cur.skip_ws();
    if (cur.done()) return out;
    out.push_back(parse_one(cur));
  }
}

SExpr parse_sexpr(const std::string& text) {
  auto all = parse_sexprs(text);
  if (all.size() != 1) {
    throw SExprError("expected exactly one expression", 1, 1);
  }
  return std::move(all.front());
}

}  // namespace sade
