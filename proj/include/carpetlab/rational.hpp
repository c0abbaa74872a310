#pragma once
#include <cstdint>
#include <cstdlib>
#include <string>

#include "carpetlab/error.hpp"

namespace carpetlab {

// Exact rational arithmetic on 64-bit numerator/denominator. Denominators in
// this project are powers of the subdivision base (N^level <= N^12), so
// values fit comfortably; intermediates run through __int128 and anything
// that cannot be reduced back into 64 bits throws "out-of-range" instead of
// wrapping. Comparisons are integer cross-multiplications, never floats.
struct Rational {
  long long num = 0;
  long long den = 1;  // > 0, gcd(|num|, den) == 1

  Rational() = default;
  Rational(long long n) : num(n), den(1) {}
  Rational(long long n, long long d) { *this = make(n, d); }

  static Rational make(__int128 n, __int128 d) {
    if (d == 0) fail_validation("out-of-range", "rational with zero denominator");
    if (d < 0) { n = -n; d = -d; }
    __int128 a = n < 0 ? -n : n, b = d;
    while (b != 0) { __int128 t = a % b; a = b; b = t; }
    if (a > 1) { n /= a; d /= a; }
    const __int128 lim = (__int128)1 << 62;
    if (n >= lim || n <= -lim || d >= lim)
      fail_validation("out-of-range", "rational exceeds 64-bit range after reduction");
    Rational r;
    r.num = (long long)n;
    r.den = (long long)d;
    return r;
  }

  double to_double() const { return (double)num / (double)den; }

  std::string str() const {
    return std::to_string(num) + "/" + std::to_string(den);
  }
};

inline Rational operator+(const Rational& a, const Rational& b) {
  return Rational::make((__int128)a.num * b.den + (__int128)b.num * a.den,
                        (__int128)a.den * b.den);
}
inline Rational operator-(const Rational& a, const Rational& b) {
  return Rational::make((__int128)a.num * b.den - (__int128)b.num * a.den,
                        (__int128)a.den * b.den);
}
inline Rational operator*(const Rational& a, const Rational& b) {
  return Rational::make((__int128)a.num * b.num, (__int128)a.den * b.den);
}
inline Rational operator/(const Rational& a, const Rational& b) {
  if (b.num == 0) fail_validation("out-of-range", "rational division by zero");
  return Rational::make((__int128)a.num * b.den, (__int128)a.den * b.num);
}
inline Rational operator-(const Rational& a) { return Rational::make(-(__int128)a.num, a.den); }

inline bool operator==(const Rational& a, const Rational& b) {
  return a.num == b.num && a.den == b.den;
}
inline bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }
inline bool operator<(const Rational& a, const Rational& b) {
  return (__int128)a.num * b.den < (__int128)b.num * a.den;
}
inline bool operator>(const Rational& a, const Rational& b) { return b < a; }
inline bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
inline bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }

inline Rational rat_abs(const Rational& a) { return a.num < 0 ? -a : a; }
inline Rational rat_min(const Rational& a, const Rational& b) { return a < b ? a : b; }
inline Rational rat_max(const Rational& a, const Rational& b) { return a < b ? b : a; }

// Parse "num/den" or "num"; the inverse of Rational::str().
inline Rational rat_parse(const std::string& s) {
  auto slash = s.find('/');
  try {
    if (slash == std::string::npos) return Rational(std::stoll(s));
    return Rational(std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1)));
  } catch (const std::logic_error&) {
    fail_validation("out-of-range", "cannot parse rational '" + s + "'");
  }
}

// base^exp for box denominators, overflow-checked.
inline long long ipow_checked(long long base, int exp) {
  __int128 v = 1;
  const __int128 lim = (__int128)1 << 62;
  for (int k = 0; k < exp; ++k) {
    v *= base;
    if (v >= lim) fail_validation("out-of-range", "integer power exceeds 64-bit range");
  }
  return (long long)v;
}

}  // namespace carpetlab
