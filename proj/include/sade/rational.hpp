#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <optional>
#include <string>

namespace sade {

// Exact rational arithmetic. Model weights, constraint literals and solver
// values are kept as rationals end to end; doubles are derived views.
using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

// Parses "12", "-3.25", "1/3", "-7/2". Decimal strings convert exactly
// (e.g. "0.1" -> 1/10). Returns nullopt on malformed input.
std::optional<Rational> try_parse_rational(const std::string& text);

// Same as try_parse_rational but throws std::invalid_argument.
Rational parse_rational(const std::string& text);

// Exact conversion of a finite double (doubles are dyadic rationals).
Rational rational_from_double(double v);

// Rational obtained from the shortest decimal string that round-trips `v`,
// so 0.1 becomes 1/10 rather than the dyadic 3602879701896397/2^55.
// Intended for human-entered config values.
Rational rational_from_decimal_of(double v);

double to_double(const Rational& r);

// "p/q" for non-integers, "p" for integers. Canonical serialization form.
std::string fraction_string(const Rational& r);

// SMT-LIB 2 term: "2", "(- 2)", "(/ 1 3)", "(- (/ 1 3))".
std::string smt_literal(const Rational& r);

}  // namespace sade
