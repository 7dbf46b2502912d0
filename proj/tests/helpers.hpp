#pragma once

#include <Eigen/Core>
#include <functional>
#include <random>

#include "cbfmpc/ocp.hpp"
#include "cbfmpc/simloop.hpp"

namespace cbfmpc::test {

inline SafetyParams scenario1_safety() {
  SafetyParams sp;
  sp.d0 = 5.0;
  sp.t_h = 1.0;
  sp.m_lf = 10.0;
  sp.p0 = {0.4, -45.0};
  sp.pN = {0.06, -75.0};
  sp.eps_d = 0.0025;
  sp.v_max = 15.0;
  return sp;
}

inline OcpConfig scenario1_ocp() {
  OcpConfig cfg;
  cfg.N = 15;
  cfg.Ts = 0.1;
  cfg.q_diag = {0.0, 10.0, 0.0, 10.0};
  cfg.qN_diag = cfg.q_diag;
  cfg.r_diag = {1.0, 1.0};
  cfg.v1_ref = 13.0;
  cfg.v2_ref = 12.5;
  cfg.u_lo = {-3.0, -3.0};
  cfg.u_hi = {3.0, 3.0};
  cfg.v_max = 15.0;
  cfg.safety = scenario1_safety();
  cfg.cert = {0.8, 0.15, {0.06, -75.0}, 0.01};
  cfg.mode = OcpMode::certified;
  return cfg;
}

inline StateD scenario1_x0() { return {{-165.0, 13.0}, {-160.0, 12.5}}; }

inline SafetyParams scenario2_safety() {
  SafetyParams sp = scenario1_safety();
  sp.pN = {0.045, -85.0};
  sp.v_max = 14.5;
  return sp;
}

inline OcpConfig scenario2_ocp(double gamma_d = 0.6, int N = 4) {
  OcpConfig cfg;
  cfg.N = N;
  cfg.Ts = 0.1;
  cfg.q_diag = {0.0, 1.0, 0.0, 1.0};
  cfg.qN_diag = cfg.q_diag;
  cfg.r_diag = {1.0, 1.0};
  cfg.v1_ref = 13.5;
  cfg.v2_ref = 13.5;
  cfg.u_lo = {-4.8, -4.8};
  cfg.u_hi = {4.8, 4.8};
  cfg.v_max = 14.5;
  cfg.safety = scenario2_safety();
  cfg.cert = {0.8, gamma_d, {0.045, -85.0}, 0.01};
  cfg.mode = OcpMode::certified;
  return cfg;
}

inline StateD scenario2_x0() { return {{-115.0, 13.5}, {-105.0, 13.5}}; }

inline ScenarioConfig scenario1_config() {
  ScenarioConfig sc;
  sc.x0 = scenario1_x0();
  sc.duration = 12.0;
  sc.ocp = scenario1_ocp();
  return sc;
}

inline ScenarioConfig scenario2_config(double gamma_d = 0.6, int N = 4) {
  ScenarioConfig sc;
  sc.x0 = scenario2_x0();
  sc.duration = 12.0;
  sc.ocp = scenario2_ocp(gamma_d, N);
  return sc;
}

/// Central finite differences with the spec step 1e-6 * max(1, |x_i|).
inline Eigen::Vector4d fd_gradient(const std::function<double(const StateD&)>& f,
                                   const StateD& x) {
  Eigen::Vector4d g;
  Eigen::Vector4d base = to_vector(x);
  for (int i = 0; i < 4; ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(base(i)));
    Eigen::Vector4d lo = base, hi = base;
    lo(i) -= h;
    hi(i) += h;
    g(i) = (f(state_from_vector(hi)) - f(state_from_vector(lo))) / (2.0 * h);
  }
  return g;
}

/// Hard-indicator reference for the safety distance (test oracle only):
/// d_s = 1_d(s1 >= s_lc) * (d0 + v_f t_h) with 1_lf choosing the follower.
inline double ds_indicator(const StateD& x, const SafetyParams& sp, double s_lc) {
  if (x.agent1.s < s_lc) return 0.0;
  const double vf = (x.agent2.s >= x.agent1.s) ? x.agent1.v : x.agent2.v;
  return sp.d0 + vf * sp.t_h;
}

inline StateD random_state(std::mt19937_64& rng, double s_lo = -200.0, double s_hi = 50.0,
                           double v_lo = 0.0, double v_hi = 15.0) {
  std::uniform_real_distribution<double> sdist(s_lo, s_hi);
  std::uniform_real_distribution<double> vdist(v_lo, v_hi);
  return {{sdist(rng), vdist(rng)}, {sdist(rng), vdist(rng)}};
}

}  // namespace cbfmpc::test
