#pragma once

#include <Eigen/Core>
#include <cmath>

namespace cbfmpc {

/// Forward-mode dual number carrying a value and N partial derivatives.
/// Seeding the state components of a LumpedState<Dual<4>> yields exact
/// gradients of every smooth constraint function with a single evaluation.
template <int N>
struct Dual {
  using Partials = Eigen::Matrix<double, N, 1>;

  double v{0.0};
  Partials d{Partials::Zero()};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT(google-explicit-constructor)
  Dual(double value, const Partials& partials) : v(value), d(partials) {}

  static Dual seed(double value, int index) {
    Dual r(value);
    r.d[index] = 1.0;
    return r;
  }

  Dual& operator+=(const Dual& r) {
    v += r.v;
    d += r.d;
    return *this;
  }
  Dual& operator-=(const Dual& r) {
    v -= r.v;
    d -= r.d;
    return *this;
  }
};

template <int N>
Dual<N> operator+(Dual<N> a, const Dual<N>& b) {
  a += b;
  return a;
}
template <int N>
Dual<N> operator-(const Dual<N>& a, const Dual<N>& b) {
  return {a.v - b.v, a.d - b.d};
}
template <int N>
Dual<N> operator-(const Dual<N>& a) {
  return {-a.v, -a.d};
}
template <int N>
Dual<N> operator*(const Dual<N>& a, const Dual<N>& b) {
  return {a.v * b.v, a.v * b.d + b.v * a.d};
}
template <int N>
Dual<N> operator*(double c, const Dual<N>& a) {
  return {c * a.v, c * a.d};
}
template <int N>
Dual<N> operator*(const Dual<N>& a, double c) {
  return c * a;
}
template <int N>
Dual<N> operator+(double c, const Dual<N>& a) {
  return {c + a.v, a.d};
}
template <int N>
Dual<N> operator+(const Dual<N>& a, double c) {
  return {a.v + c, a.d};
}
template <int N>
Dual<N> operator-(double c, const Dual<N>& a) {
  return {c - a.v, -a.d};
}
template <int N>
Dual<N> operator-(const Dual<N>& a, double c) {
  return {a.v - c, a.d};
}
template <int N>
Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
  const double inv = 1.0 / b.v;
  return {a.v * inv, inv * a.d - (a.v * inv * inv) * b.d};
}
template <int N>
Dual<N> operator/(const Dual<N>& a, double c) {
  return (1.0 / c) * a;
}
template <int N>
Dual<N> operator/(double c, const Dual<N>& b) {
  const double inv = 1.0 / b.v;
  return {c * inv, (-c * inv * inv) * b.d};
}

template <int N>
Dual<N> exp(const Dual<N>& a) {
  const double e = std::exp(a.v);
  return {e, e * a.d};
}

using Dual4 = Dual<4>;

}  // namespace cbfmpc
