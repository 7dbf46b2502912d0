#pragma once

#include <Eigen/Core>
#include <stdexcept>

#include "cbfmpc/dual.hpp"
#include "cbfmpc/interval.hpp"

namespace cbfmpc {

/// Longitudinal state of one agent along its path.
template <typename T>
struct AgentState {
  T s{};  ///< position along path [m]
  T v{};  ///< velocity [m/s]
};

/// Lumped two-agent state, canonical component order (s1, v1, s2, v2).
template <typename T>
struct LumpedState {
  AgentState<T> agent1;
  AgentState<T> agent2;
};

/// Lumped acceleration input (a1, a2) [m/s^2].
template <typename T>
struct ControlInput {
  T a1{};
  T a2{};
};

using StateD = LumpedState<double>;
using InputD = ControlInput<double>;

/// Exact zero-order-hold discretization of the per-agent double integrator:
/// A = [[1, Ts], [0, 1]], B = [[Ts^2/2], [Ts]].
struct DiscreteDynamics {
  double Ts{0.0};
  Eigen::Matrix2d A;
  Eigen::Vector2d B;
};

inline DiscreteDynamics zoh_discretize(double Ts) {
  if (!(Ts > 0.0)) throw std::invalid_argument("zoh_discretize: sample time must be positive");
  DiscreteDynamics dyn;
  dyn.Ts = Ts;
  dyn.A << 1.0, Ts, 0.0, 1.0;
  dyn.B << 0.5 * Ts * Ts, Ts;
  return dyn;
}

/// Advances both agents one sample; the agents are decoupled in dynamics
/// (coupling enters only through constraints).
template <typename T>
LumpedState<T> step(const LumpedState<T>& x, const ControlInput<T>& u, const DiscreteDynamics& dyn) {
  LumpedState<T> next;
  next.agent1.s = dyn.A(0, 0) * x.agent1.s + dyn.A(0, 1) * x.agent1.v + dyn.B(0) * u.a1;
  next.agent1.v = dyn.A(1, 1) * x.agent1.v + dyn.B(1) * u.a1;
  next.agent2.s = dyn.A(0, 0) * x.agent2.s + dyn.A(0, 1) * x.agent2.v + dyn.B(0) * u.a2;
  next.agent2.v = dyn.A(1, 1) * x.agent2.v + dyn.B(1) * u.a2;
  return next;
}

inline Eigen::Vector4d to_vector(const StateD& x) {
  return {x.agent1.s, x.agent1.v, x.agent2.s, x.agent2.v};
}

inline StateD state_from_vector(const Eigen::Vector4d& z) {
  return {{z[0], z[1]}, {z[2], z[3]}};
}

/// State with each component seeded as an independent differentiation
/// direction, so partials come out in canonical (s1, v1, s2, v2) order.
inline LumpedState<Dual4> seed_state(const StateD& x) {
  LumpedState<Dual4> xs;
  xs.agent1.s = Dual4::seed(x.agent1.s, 0);
  xs.agent1.v = Dual4::seed(x.agent1.v, 1);
  xs.agent2.s = Dual4::seed(x.agent2.s, 2);
  xs.agent2.v = Dual4::seed(x.agent2.v, 3);
  return xs;
}

inline LumpedState<Interval> state_from_box(const Box& b) {
  return {{b[0], b[1]}, {b[2], b[3]}};
}

}  // namespace cbfmpc
