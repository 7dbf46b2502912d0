#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cbfmpc/ocp.hpp"

namespace cbfmpc {

/// One closed-loop experiment: initial state, duration and the OCP to solve
/// every sample. Geometry fields are reporting metadata only.
struct ScenarioConfig {
  StateD x0{{-165.0, 13.0}, {-160.0, 12.5}};
  double duration{12.0};
  OcpConfig ocp;
  std::uint64_t seed{1};
  double s_lc{-39.5};        ///< lane-change point [m], derived scenario metadata
  double agent_length{4.2};  ///< [m]
  double agent_width{2.0};   ///< [m]

  void validate() const {
    if (!(duration > 0.0)) throw std::invalid_argument("ScenarioConfig: duration must be positive");
    ocp.validate();
  }
};

struct StepRecord {
  double t{0.0};
  StateD x;  ///< state at t (before the update)
  InputD u;  ///< input applied at t
  double tracking_cost{0.0};
  double actuation_cost{0.0};
  double dist{0.0};      ///< |s1 - s2|
  double min_dist{0.0};  ///< dbar_s(x)
  double margin{0.0};    ///< dist - min_dist
  int solve_iterations{0};
  double solve_time_s{0.0};
  SolveStatus status{SolveStatus::converged};
  double kkt_feasibility{0.0};
};

struct TrajectoryLog {
  std::vector<StepRecord> steps;
  bool aborted{false};
  int abort_step{-1};
  std::string abort_reason;
  StateD final_state;
  // audit metadata
  double v_max{15.0};
  Eigen::Vector2d u_lo{-3.0, -3.0};
  Eigen::Vector2d u_hi{3.0, 3.0};
  double Ts{0.1};
};

/// Runs the receding-horizon loop with the plant propagated by the same exact
/// dynamics as the prediction model. Solver infeasibility aborts the run with
/// the step index recorded (it would falsify the recursive-feasibility
/// guarantee, so it is never papered over).
TrajectoryLog run_scenario(const ScenarioConfig& sc, const SolverOptions& opts = {});

struct CumulativeCosts {
  double tracking{0.0};
  double actuation{0.0};
  double stage{0.0};
};

/// Sums e'Qe and u'Ru over the logged steps.
CumulativeCosts cumulative_costs(const TrajectoryLog& log);

struct SafetyAudit {
  double min_margin{std::numeric_limits<double>::infinity()};
  int first_violation{-1};  ///< step index of the first distance violation, -1 if none
  int velocity_violations{0};
  int input_violations{0};
  double tol{1e-6};

  bool clean() const {
    return first_violation < 0 && velocity_violations == 0 && input_violations == 0;
  }
};

/// Re-checks |s1 - s2| >= dbar_s(x) and the velocity/input bounds per step,
/// within an absolute audit tolerance of 1e-6.
SafetyAudit audit_safety(const TrajectoryLog& log, const SafetyParams& sp);

/// First step at which s1 - s2 crosses from below -hysteresis to above
/// +hysteresis (agent 1 moves in front); -1 if it never does.
int overtake_step(const TrajectoryLog& log, double hysteresis = 0.1);

/// Rejection-samples an initial state that is feasible for the given OCP:
/// s1 - s2 uniform in [-30, 30] m, velocities uniform in [5, v_max].
std::optional<StateD> sample_feasible_start(const OcpConfig& cfg, std::mt19937_64& rng,
                                            int max_tries = 200);

}  // namespace cbfmpc
