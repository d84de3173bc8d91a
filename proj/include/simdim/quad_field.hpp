#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>

#include "simdim/common.hpp"

namespace simdim {

// Exact number (a + b*sqrt(5)) / c with 64-bit components, normalized so
// that c > 0 and gcd(a, b, c) = 1. Rationals are the b = 0 case; the golden
// ratio systems live in Q(sqrt 5). Intermediates use 128-bit arithmetic and
// overflow raises ExactOverflow instead of wrapping.
struct Quad {
  std::int64_t a = 0;
  std::int64_t b = 0;
  std::int64_t c = 1;

  Quad() = default;
  Quad(std::int64_t a_, std::int64_t b_, std::int64_t c_) : a(a_), b(b_), c(c_) { normalize(); }

  static Quad from_int(std::int64_t v) { return Quad(v, 0, 1); }
  static Quad from_fraction(std::int64_t num, std::int64_t den) { return Quad(num, 0, den); }
  // lambda = 1/phi = (sqrt(5) - 1) / 2, the golden Bernoulli parameter.
  static Quad golden_lambda() { return Quad(-1, 1, 2); }

  void normalize() {
    if (c == 0) throw ExactOverflow("Quad: zero denominator");
    if (c < 0) {
      a = -a;
      b = -b;
      c = -c;
    }
    std::int64_t g = std::gcd(std::gcd(std::abs(a), std::abs(b)), c);
    if (g > 1) {
      a /= g;
      b /= g;
      c /= g;
    }
  }

  bool is_zero() const { return a == 0 && b == 0; }
  bool is_rational() const { return b == 0; }

  double to_double() const {
    const long double s5 = 2.23606797749978969640917366873L;
    return static_cast<double>((static_cast<long double>(a) + static_cast<long double>(b) * s5) /
                               static_cast<long double>(c));
  }

  bool operator==(const Quad& o) const { return a == o.a && b == o.b && c == o.c; }
};

namespace detail {

inline std::int64_t narrow_i128(__int128 v, const char* what) {
  if (v > static_cast<__int128>(INT64_MAX) || v < static_cast<__int128>(INT64_MIN))
    throw ExactOverflow(std::string("exact arithmetic overflow in ") + what);
  return static_cast<std::int64_t>(v);
}

inline Quad make_checked(__int128 a, __int128 b, __int128 c, const char* what) {
  if (c == 0) throw ExactOverflow("Quad: zero denominator");
  if (c < 0) {
    a = -a;
    b = -b;
    c = -c;
  }
  auto abs128 = [](__int128 v) { return v < 0 ? -v : v; };
  auto gcd128 = [&](__int128 x, __int128 y) {
    x = abs128(x);
    y = abs128(y);
    while (y != 0) {
      const __int128 t = x % y;
      x = y;
      y = t;
    }
    return x;
  };
  __int128 g = gcd128(gcd128(a, b), c);
  if (g > 1) {
    a /= g;
    b /= g;
    c /= g;
  }
  Quad q;
  q.a = narrow_i128(a, what);
  q.b = narrow_i128(b, what);
  q.c = narrow_i128(c, what);
  return q;
}

}  // namespace detail

inline Quad operator+(const Quad& x, const Quad& y) {
  const __int128 a = static_cast<__int128>(x.a) * y.c + static_cast<__int128>(y.a) * x.c;
  const __int128 b = static_cast<__int128>(x.b) * y.c + static_cast<__int128>(y.b) * x.c;
  const __int128 c = static_cast<__int128>(x.c) * y.c;
  return detail::make_checked(a, b, c, "add");
}

inline Quad operator-(const Quad& x) { return Quad(-x.a, -x.b, x.c); }
inline Quad operator-(const Quad& x, const Quad& y) { return x + (-y); }

inline Quad operator*(const Quad& x, const Quad& y) {
  const __int128 a = static_cast<__int128>(x.a) * y.a + 5 * static_cast<__int128>(x.b) * y.b;
  const __int128 b = static_cast<__int128>(x.a) * y.b + static_cast<__int128>(x.b) * y.a;
  const __int128 c = static_cast<__int128>(x.c) * y.c;
  return detail::make_checked(a, b, c, "mul");
}

// Sign of a + b sqrt(5) (denominator is positive).
inline int sign(const Quad& x) {
  if (x.a == 0 && x.b == 0) return 0;
  if (x.a >= 0 && x.b >= 0) return 1;
  if (x.a <= 0 && x.b <= 0) return -1;
  const __int128 a2 = static_cast<__int128>(x.a) * x.a;
  const __int128 b2 = 5 * static_cast<__int128>(x.b) * x.b;
  if (x.a > 0) return a2 > b2 ? 1 : (a2 < b2 ? -1 : 0);
  return a2 < b2 ? 1 : (a2 > b2 ? -1 : 0);
}

inline bool operator<(const Quad& x, const Quad& y) { return sign(x - y) < 0; }

inline Quad abs(const Quad& x) { return sign(x) < 0 ? -x : x; }

struct QuadHash {
  std::size_t operator()(const Quad& q) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::int64_t v : {q.a, q.b, q.c}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace simdim
