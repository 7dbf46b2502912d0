#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <limits>
#include <ostream>

namespace cbfmpc {

/// Closed interval [lo, hi] used as a scalar type by the natural interval
/// extensions of the barrier functions and the verifier's branch-and-bound.
struct Interval {
  double lo{0.0};
  double hi{0.0};

  Interval() = default;
  Interval(double point) : lo(point), hi(point) {}  // NOLINT(google-explicit-constructor)
  Interval(double lo_, double hi_) : lo(lo_), hi(hi_) { assert(lo <= hi); }

  double mid() const { return 0.5 * (lo + hi); }
  double width() const { return hi - lo; }
  bool contains(double x) const { return lo <= x && x <= hi; }
  bool is_point() const { return lo == hi; }

  Interval& operator+=(const Interval& r) {
    lo += r.lo;
    hi += r.hi;
    return *this;
  }
};

inline Interval operator+(Interval a, const Interval& b) { return {a.lo + b.lo, a.hi + b.hi}; }
inline Interval operator-(const Interval& a, const Interval& b) { return {a.lo - b.hi, a.hi - b.lo}; }
inline Interval operator-(const Interval& a) { return {-a.hi, -a.lo}; }

inline Interval operator*(const Interval& a, const Interval& b) {
  const double p1 = a.lo * b.lo;
  const double p2 = a.lo * b.hi;
  const double p3 = a.hi * b.lo;
  const double p4 = a.hi * b.hi;
  return {std::min(std::min(p1, p2), std::min(p3, p4)),
          std::max(std::max(p1, p2), std::max(p3, p4))};
}

inline Interval operator*(double c, const Interval& a) {
  return c >= 0.0 ? Interval{c * a.lo, c * a.hi} : Interval{c * a.hi, c * a.lo};
}
inline Interval operator*(const Interval& a, double c) { return c * a; }
inline Interval operator/(const Interval& a, double c) {
  assert(c != 0.0);
  return (1.0 / c) * a;
}

/// Tight range of x^2 over the interval (tighter than a * a).
inline Interval sqr(const Interval& a) {
  const double l2 = a.lo * a.lo;
  const double h2 = a.hi * a.hi;
  if (a.lo >= 0.0) return {l2, h2};
  if (a.hi <= 0.0) return {h2, l2};
  return {0.0, std::max(l2, h2)};
}

inline Interval exp(const Interval& a) { return {std::exp(a.lo), std::exp(a.hi)}; }

inline Interval min(const Interval& a, const Interval& b) {
  return {std::min(a.lo, b.lo), std::min(a.hi, b.hi)};
}
inline Interval max(const Interval& a, const Interval& b) {
  return {std::max(a.lo, b.lo), std::max(a.hi, b.hi)};
}

inline Interval hull(const Interval& a, const Interval& b) {
  return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
}

/// Intersection; empty results collapse to the nearer endpoint so that
/// downstream arithmetic stays well defined (callers check emptiness first).
inline Interval intersect(const Interval& a, const Interval& b) {
  const double lo = std::max(a.lo, b.lo);
  const double hi = std::min(a.hi, b.hi);
  if (lo > hi) return {0.5 * (lo + hi), 0.5 * (lo + hi)};
  return {lo, hi};
}

inline bool disjoint(const Interval& a, const Interval& b) { return a.hi < b.lo || b.hi < a.lo; }

inline std::ostream& operator<<(std::ostream& os, const Interval& a) {
  return os << '[' << a.lo << ", " << a.hi << ']';
}

/// Axis-aligned box over the lumped state, dimension order (s1, v1, s2, v2).
struct Box {
  std::array<Interval, 4> dims{};

  Interval& operator[](int i) { return dims[static_cast<std::size_t>(i)]; }
  const Interval& operator[](int i) const { return dims[static_cast<std::size_t>(i)]; }

  double max_scaled_width(const std::array<double, 4>& scale) const {
    double w = 0.0;
    for (int i = 0; i < 4; ++i) w = std::max(w, dims[static_cast<std::size_t>(i)].width() * scale[static_cast<std::size_t>(i)]);
    return w;
  }

  int widest_scaled_dim(const std::array<double, 4>& scale) const {
    int best = 0;
    double w = -1.0;
    for (int i = 0; i < 4; ++i) {
      const double wi = dims[static_cast<std::size_t>(i)].width() * scale[static_cast<std::size_t>(i)];
      if (wi > w) {
        w = wi;
        best = i;
      }
    }
    return best;
  }
};

}  // namespace cbfmpc
