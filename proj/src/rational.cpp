#include "sade/rational.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace sade {

namespace {

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

}  // namespace

std::optional<Rational> try_parse_rational(const std::string& text) {
  std::string s = text;
  bool negative = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    negative = s[0] == '-';
    s = s.substr(1);
  }
  if (s.empty()) return std::nullopt;

  Rational value;
  auto slash = s.find('/');
  if (slash != std::string::npos) {
    std::string num = s.substr(0, slash);
    std::string den = s.substr(slash + 1);
    if (!all_digits(num) || !all_digits(den)) return std::nullopt;
    BigInt d(den);
    if (d == 0) return std::nullopt;
    value = Rational(BigInt(num), d);
  } else {
    auto dot = s.find('.');
    if (dot == std::string::npos) {
      if (!all_digits(s)) return std::nullopt;
      value = Rational(BigInt(s));
    } else {
      std::string ipart = s.substr(0, dot);
      std::string fpart = s.substr(dot + 1);
      if (ipart.empty()) ipart = "0";
      if (fpart.empty()) fpart = "0";
      if (!all_digits(ipart) || !all_digits(fpart)) return std::nullopt;
      BigInt scale = 1;
      for (std::size_t i = 0; i < fpart.size(); ++i) scale *= 10;
      value = Rational(BigInt(ipart) * scale + BigInt(fpart), scale);
    }
  }
  if (negative) value = -value;
  return value;
}

Rational parse_rational(const std::string& text) {
  auto r = try_parse_rational(text);
  if (!r) throw std::invalid_argument("not a rational literal: '" + text + "'");
  return *r;
}

Rational rational_from_double(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("non-finite double");
  if (v == 0.0) return Rational(0);
  int exp = 0;
  // mantissa * 2^exp == v with mantissa an integer of <= 53 bits
  double mantissa = std::frexp(v, &exp);
  for (int i = 0; i < 53 && mantissa != std::floor(mantissa); ++i) {
    mantissa *= 2.0;
    --exp;
  }
  BigInt m(static_cast<long long>(mantissa));
  Rational r(m);
  if (exp > 0) {
    r *= Rational(BigInt(1) << exp);
  } else if (exp < 0) {
    r /= Rational(BigInt(1) << -exp);
  }
  return r;
}

Rational rational_from_decimal_of(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("non-finite double");
  char buf[64];
  // shortest representation that round-trips
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0;
    auto [p, ec] = std::from_chars(buf, buf + std::strlen(buf), back);
    (void)p;
    if (ec == std::errc() && back == v) break;
  }
  std::string s(buf);
  // %g may produce exponent form for tiny/huge magnitudes
  auto epos = s.find_first_of("eE");
  if (epos == std::string::npos) {
    return parse_rational(s);
  }
  int e10 = std::stoi(s.substr(epos + 1));
  Rational base = parse_rational(s.substr(0, epos));
  BigInt p10 = 1;
  for (int i = 0; i < std::abs(e10); ++i) p10 *= 10;
  return e10 >= 0 ? base * Rational(p10) : base / Rational(p10);
}

double to_double(const Rational& r) { return r.convert_to<double>(); }

std::string fraction_string(const Rational& r) {
  BigInt num = numerator(r);
  BigInt den = denominator(r);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

std::string smt_literal(const Rational& r) {
  BigInt num = numerator(r);
  BigInt den = denominator(r);
  bool neg = num < 0;
  if (neg) num = -num;
  std::string body = den == 1 ? num.str() : "(/ " + num.str() + " " + den.str() + ")";
  return neg ? "(- " + body + ")" : body;
}

}  // namespace sade
