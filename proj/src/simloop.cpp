#include "cbfmpc/simloop.hpp"

#include <chrono>
#include <cmath>

namespace cbfmpc {

TrajectoryLog run_scenario(const ScenarioConfig& sc, const SolverOptions& opts) {
  sc.validate();
  const OcpConfig& cfg = sc.ocp;
  const DiscreteDynamics dyn = zoh_discretize(cfg.Ts);
  const int n_steps = static_cast<int>(std::llround(sc.duration / cfg.Ts));

  TrajectoryLog log;
  log.steps.reserve(static_cast<std::size_t>(n_steps));
  log.v_max = cfg.v_max;
  log.u_lo = cfg.u_lo;
  log.u_hi = cfg.u_hi;
  log.Ts = cfg.Ts;

  StateD x = sc.x0;
  SolveResult warm;
  bool have_warm = false;

  for (int k = 0; k < n_steps; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    const MpcStepResult res = mpc_step(cfg, x, have_warm ? &warm : nullptr, opts);
    const double solve_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const bool usable =
        res.sol.status == SolveStatus::converged ||
        (res.sol.status == SolveStatus::max_iter && res.sol.kkt.feasibility <= opts.kkt_tol);

    StepRecord rec;
    rec.t = k * cfg.Ts;
    rec.x = x;
    rec.u = res.u0;
    const Eigen::Vector4d e = to_vector(x) - cfg.x_ref();
    rec.tracking_cost = e.dot(cfg.q_diag.asDiagonal() * e);
    rec.actuation_cost =
        cfg.r_diag(0) * res.u0.a1 * res.u0.a1 + cfg.r_diag(1) * res.u0.a2 * res.u0.a2;
    rec.dist = std::abs(x.agent1.s - x.agent2.s);
    rec.min_dist = dbar_s(x, cfg.safety);
    rec.margin = rec.dist - rec.min_dist;
    rec.solve_iterations = res.sol.iterations;
    rec.solve_time_s = solve_time;
    rec.status = res.sol.status;
    rec.kkt_feasibility = res.sol.kkt.feasibility;

    if (!usable) {
      log.aborted = true;
      log.abort_step = k;
      log.abort_reason = (res.sol.status == SolveStatus::infeasible_detected)
                             ? "solver reported an infeasible OCP at step " + std::to_string(k)
                             : "solver failed to converge at step " + std::to_string(k);
      log.steps.push_back(rec);
      break;
    }

    log.steps.push_back(rec);
    x = step(x, res.u0, dyn);
    warm = res.sol;
    have_warm = true;
  }
  log.final_state = x;
  return log;
}

CumulativeCosts cumulative_costs(const TrajectoryLog& log) {
  CumulativeCosts c;
  for (const StepRecord& r : log.steps) {
    c.tracking += r.tracking_cost;
    c.actuation += r.actuation_cost;
  }
  c.stage = c.tracking + c.actuation;
  return c;
}

SafetyAudit audit_safety(const TrajectoryLog& log, const SafetyParams& sp) {
  SafetyAudit a;
  for (std::size_t k = 0; k < log.steps.size(); ++k) {
    const StepRecord& r = log.steps[k];
    const double min_dist = dbar_s(r.x, sp);
    const double margin = std::abs(r.x.agent1.s - r.x.agent2.s) - min_dist;
    a.min_margin = std::min(a.min_margin, margin);
    if (margin < -a.tol && a.first_violation < 0) a.first_violation = static_cast<int>(k);
    for (const double v : {r.x.agent1.v, r.x.agent2.v})
      if (v < -a.tol || v > sp.v_max + a.tol) ++a.velocity_violations;
    if (r.u.a1 < log.u_lo(0) - a.tol || r.u.a1 > log.u_hi(0) + a.tol) ++a.input_violations;
    if (r.u.a2 < log.u_lo(1) - a.tol || r.u.a2 > log.u_hi(1) + a.tol) ++a.input_violations;
  }
  return a;
}

int overtake_step(const TrajectoryLog& log, double hysteresis) {
  bool armed = false;
  for (std::size_t k = 0; k < log.steps.size(); ++k) {
    const double gap = log.steps[k].x.agent1.s - log.steps[k].x.agent2.s;
    if (gap <= -hysteresis) armed = true;
    if (armed && gap >= hysteresis) return static_cast<int>(k);
  }
  return -1;
}

std::optional<StateD> sample_feasible_start(const OcpConfig& cfg, std::mt19937_64& rng,
                                            int max_tries) {
  std::uniform_real_distribution<double> s1_dist(-200.0, -60.0);
  std::uniform_real_distribution<double> gap_dist(-30.0, 30.0);
  std::uniform_real_distribution<double> v_dist(5.0, cfg.v_max);
  for (int t = 0; t < max_tries; ++t) {
    StateD x;
    x.agent1.s = s1_dist(rng);
    x.agent2.s = x.agent1.s - gap_dist(rng);
    x.agent1.v = v_dist(rng);
    x.agent2.v = v_dist(rng);
    const MpcStepResult res = mpc_step(cfg, x, nullptr);
    if (res.sol.status == SolveStatus::converged) return x;
  }
  return std::nullopt;
}

}  // namespace cbfmpc
