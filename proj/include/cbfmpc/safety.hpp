#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "cbfmpc/dual.hpp"
#include "cbfmpc/dynamics.hpp"
#include "cbfmpc/interval.hpp"

namespace cbfmpc {

/// Logistic activation parameters, L(s1) = 1 / (1 + exp(-m_d (s1 - c_d))).
struct ActivationParams {
  double m_d{0.0};  ///< slope [1/m], > 0
  double c_d{0.0};  ///< offset [m]
};

/// Parameters of the smooth safety-distance machinery.
struct SafetyParams {
  double d0{5.0};           ///< stopping distance [m]
  double t_h{1.0};          ///< headway time [s]
  double m_lf{10.0};        ///< leader/follower activation slope [1/m]
  ActivationParams p0{0.4, -45.0};   ///< activation of the in-horizon constraint
  ActivationParams pN{0.06, -75.0};  ///< activation of the terminal certificate
  double eps_d{0.0025};     ///< interpolation margin, > 0
  double v_max{15.0};       ///< velocity bound [m/s]

  void validate() const {
    if (!(d0 > 0.0) || !(t_h > 0.0) || !(m_lf > 0.0) || !(eps_d > 0.0) || !(v_max > 0.0))
      throw std::invalid_argument("SafetyParams: d0, t_h, m_lf, eps_d, v_max must be positive");
    if (!(p0.m_d > 0.0) || !(pN.m_d > 0.0))
      throw std::invalid_argument("SafetyParams: activation slopes must be positive");
  }
};

inline double sqr(double x) { return x * x; }
template <int N>
Dual<N> sqr(const Dual<N>& x) {
  return x * x;
}

// Exponent arguments are clamped to [-500, 500]; within the clamp the
// logistic is exact to double precision, outside it saturates.
inline constexpr double kLogisticClamp = 500.0;

inline double logistic(double y) {
  y = std::clamp(y, -kLogisticClamp, kLogisticClamp);
  if (y >= 0.0) return 1.0 / (1.0 + std::exp(-y));
  const double e = std::exp(y);
  return e / (1.0 + e);
}

template <int N>
Dual<N> logistic(const Dual<N>& y) {
  const double s = logistic(y.v);
  return {s, (s * (1.0 - s)) * y.d};
}

inline Interval logistic(const Interval& y) { return {logistic(y.lo), logistic(y.hi)}; }

/// Velocity lower-bound constraint function, h_vmin(v) = v.
template <typename T>
T h_vmin(const T& v) {
  return v;
}

/// Velocity upper-bound constraint function, h_vmax(v) = v_max - v.
template <typename T>
T h_vmax(const T& v, double v_max) {
  return v_max - v;
}

/// Merge-zone activation L_d(x; p), monotone increasing in s1.
template <typename T>
T logistic_Ld(const LumpedState<T>& x, const ActivationParams& p) {
  return logistic(p.m_d * (x.agent1.s - p.c_d));
}

/// Leader/follower activation L_lf(x); 1 when agent 2 leads, 0 when agent 1 leads.
template <typename T>
T logistic_Llf(const LumpedState<T>& x, double m_lf) {
  return logistic(m_lf * (x.agent2.s - x.agent1.s));
}

/// Smoothed follower velocity, v_f = L_lf v1 + (1 - L_lf) v2.
template <typename T>
T v_follower(const LumpedState<T>& x, double m_lf) {
  const T L = logistic_Llf(x, m_lf);
  return x.agent2.v + L * (x.agent1.v - x.agent2.v);
}

/// Smooth minimum safety distance, d_safe = d0 + v_f t_h.
template <typename T>
T d_safe_smooth(const LumpedState<T>& x, const SafetyParams& sp) {
  return sp.d0 + sp.t_h * v_follower(x, sp.m_lf);
}

/// Safety-distance constraint function h_d(x; p) = (s1-s2)^2 - (L_d d_safe)^2.
template <typename T>
T h_d(const LumpedState<T>& x, const ActivationParams& p, const SafetyParams& sp) {
  const T delta = x.agent1.s - x.agent2.s;
  const T required = logistic_Ld(x, p) * d_safe_smooth(x, sp);
  return sqr(delta) - sqr(required);
}

/// Interpolated activation Lbar_d = L_d(p0) (1 + L_d(pN) - L_d(p0) - eps_d).
template <typename T>
T Lbar_d(const LumpedState<T>& x, const ActivationParams& p0, const ActivationParams& pN,
         double eps_d) {
  const T a = logistic_Ld(x, p0);
  const T b = logistic_Ld(x, pN);
  return a * (1.0 + b - a - eps_d);
}

/// Minimum safety distance of the relaxed in-horizon constraint, Lbar_d * d_safe.
template <typename T>
T dbar_s(const LumpedState<T>& x, const SafetyParams& sp) {
  return Lbar_d(x, sp.p0, sp.pN, sp.eps_d) * d_safe_smooth(x, sp);
}

/// Relaxed in-horizon constraint H_d(x; p0, pN) = (s1-s2)^2 - dbar_s^2.
template <typename T>
T H_d(const LumpedState<T>& x, const ActivationParams& p0, const ActivationParams& pN,
      const SafetyParams& sp) {
  const T delta = x.agent1.s - x.agent2.s;
  const T a = logistic_Ld(x, p0);
  const T b = logistic_Ld(x, pN);
  const T lbar = a * (1.0 + b - a - sp.eps_d);
  return sqr(delta) - sqr(lbar * d_safe_smooth(x, sp));
}

/// Smooth leader-minus-follower velocity gap, (2 L_lf - 1)(v2 - v1).
template <typename T>
T delta_v(const LumpedState<T>& x, double m_lf) {
  const T L = logistic_Llf(x, m_lf);
  return (2.0 * L - 1.0) * (x.agent2.v - x.agent1.v);
}

/// Registry of the smooth constraint functions for generic evaluation with
/// exact forward-mode gradients (consumed by tests and diagnostics; the OCP
/// transcription calls the typed functions directly).
enum class SafetyFn {
  h_vmin,
  h_vmax,
  logistic_Ld,
  logistic_Llf,
  v_follower,
  d_safe_smooth,
  h_d,
  Lbar_d,
  H_d,
  delta_v,
};

inline SafetyFn safety_fn_from_string(const std::string& name) {
  if (name == "h_vmin") return SafetyFn::h_vmin;
  if (name == "h_vmax") return SafetyFn::h_vmax;
  if (name == "logistic_Ld") return SafetyFn::logistic_Ld;
  if (name == "logistic_Llf") return SafetyFn::logistic_Llf;
  if (name == "v_follower") return SafetyFn::v_follower;
  if (name == "d_safe_smooth") return SafetyFn::d_safe_smooth;
  if (name == "h_d") return SafetyFn::h_d;
  if (name == "Lbar_d") return SafetyFn::Lbar_d;
  if (name == "H_d") return SafetyFn::H_d;
  if (name == "delta_v") return SafetyFn::delta_v;
  throw std::invalid_argument("unknown safety function id: " + name);
}

struct ValueAndGradient {
  double value{0.0};
  Eigen::Vector4d gradient{Eigen::Vector4d::Zero()};
};

/// Evaluates a registered function and its gradient over (s1, v1, s2, v2).
/// Velocity-bound functions refer to agent 1; `p` selects the activation for
/// the single-activation functions and is ignored by the others.
inline ValueAndGradient eval_with_gradient(SafetyFn f, const StateD& x, const SafetyParams& sp,
                                           const ActivationParams& p) {
  const LumpedState<Dual4> xs = seed_state(x);
  Dual4 r;
  switch (f) {
    case SafetyFn::h_vmin: r = h_vmin(xs.agent1.v); break;
    case SafetyFn::h_vmax: r = h_vmax(xs.agent1.v, sp.v_max); break;
    case SafetyFn::logistic_Ld: r = logistic_Ld(xs, p); break;
    case SafetyFn::logistic_Llf: r = logistic_Llf(xs, sp.m_lf); break;
    case SafetyFn::v_follower: r = v_follower(xs, sp.m_lf); break;
    case SafetyFn::d_safe_smooth: r = d_safe_smooth(xs, sp); break;
    case SafetyFn::h_d: r = h_d(xs, p, sp); break;
    case SafetyFn::Lbar_d: r = Lbar_d(xs, sp.p0, sp.pN, sp.eps_d); break;
    case SafetyFn::H_d: r = H_d(xs, sp.p0, sp.pN, sp); break;
    case SafetyFn::delta_v: r = delta_v(xs, sp.m_lf); break;
    default: throw std::invalid_argument("eval_with_gradient: unknown function id");
  }
  return {r.v, r.d};
}

}  // namespace cbfmpc
