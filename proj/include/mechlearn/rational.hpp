#pragma once

#include <boost/multiprecision/gmp.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "mechlearn/errors.hpp"

namespace mechlearn {

using Rational = boost::multiprecision::mpq_rational;

inline double to_double(const Rational& q) { return q.convert_to<double>(); }

/// Exact conversion: every finite double is a dyadic rational.
inline Rational exact_rational(double d) {
  if (!std::isfinite(d)) throw DomainError("cannot convert non-finite value to a rational");
  return Rational(d);
}

/// Shortest decimal string that parses back to the identical double.
inline std::string format_double(double d) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), d);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double out = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("not a number: '" + std::string(s) + "'");
  }
  return out;
}

/// Parses "a/b", or a decimal such as "-0.125" / "1e-3", exactly.
inline Rational parse_rational(std::string_view s) {
  auto fail = [&] { return ParseError("not a rational: '" + std::string(s) + "'"); };
  if (s.empty()) throw fail();
  if (auto slash = s.find('/'); slash != std::string_view::npos) {
    try {
      Rational num(std::string(s.substr(0, slash)));
      Rational den(std::string(s.substr(slash + 1)));
      if (den == 0) throw fail();
      return num / den;
    } catch (const std::runtime_error&) {
      throw fail();
    }
  }
  std::size_t pos = 0;
  bool negative = false;
  if (s[pos] == '+' || s[pos] == '-') negative = s[pos++] == '-';
  std::string digits;
  long exponent = 0;
  bool seen_digit = false;
  bool seen_point = false;
  for (; pos < s.size(); ++pos) {
    char c = s[pos];
    if (c >= '0' && c <= '9') {
      digits.push_back(c);
      seen_digit = true;
      if (seen_point) --exponent;
    } else if (c == '.' && !seen_point) {
      seen_point = true;
    } else if (c == 'e' || c == 'E') {
      long e = 0;
      auto tail = s.substr(pos + 1);
      if (!tail.empty() && tail.front() == '+') tail.remove_prefix(1);
      auto res = std::from_chars(tail.data(), tail.data() + tail.size(), e);
      if (res.ec != std::errc() || res.ptr != tail.data() + tail.size()) throw fail();
      exponent += e;
      pos = s.size();
      break;
    } else {
      throw fail();
    }
  }
  if (!seen_digit) throw fail();
  Rational value{boost::multiprecision::mpz_int(digits)};
  boost::multiprecision::mpz_int scale = boost::multiprecision::pow(
      boost::multiprecision::mpz_int(10), static_cast<unsigned>(exponent < 0 ? -exponent : exponent));
  value = exponent < 0 ? value / Rational(scale) : value * Rational(scale);
  return negative ? Rational(-value) : value;
}

inline std::string format_rational(const Rational& q) {
  if (boost::multiprecision::denominator(q) == 1) return boost::multiprecision::numerator(q).str();
  return boost::multiprecision::numerator(q).str() + "/" + boost::multiprecision::denominator(q).str();
}

}  // namespace mechlearn
