#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "cbfmpc/dynamics.hpp"
#include "cbfmpc/nlp.hpp"
#include "cbfmpc/safety.hpp"

namespace cbfmpc {

/// Terminal-ingredient parameters: linear class-K decay rates of the
/// certificates, the terminal activation and the relative-velocity floor.
struct CertificateParams {
  double gamma_v{0.8};
  double gamma_d{0.15};
  ActivationParams pN{0.06, -75.0};
  double dv_min{0.01};

  void validate() const {
    if (!(gamma_v > 0.0 && gamma_v <= 1.0) || !(gamma_d > 0.0 && gamma_d <= 1.0))
      throw std::invalid_argument("CertificateParams: gamma values must lie in (0, 1]");
  }
};

enum class OcpMode { baseline, certified };

struct OcpConfig {
  int N{15};
  double Ts{0.1};
  Eigen::Vector4d q_diag{0.0, 10.0, 0.0, 10.0};
  Eigen::Vector4d qN_diag{0.0, 10.0, 0.0, 10.0};
  Eigen::Vector2d r_diag{1.0, 1.0};
  double v1_ref{13.0};
  double v2_ref{12.5};
  Eigen::Vector2d u_lo{-3.0, -3.0};  ///< per-agent lower input bounds
  Eigen::Vector2d u_hi{3.0, 3.0};    ///< per-agent upper input bounds
  double v_max{15.0};
  SafetyParams safety;
  CertificateParams cert;
  OcpMode mode{OcpMode::certified};

  Eigen::Vector4d x_ref() const { return {0.0, v1_ref, 0.0, v2_ref}; }
  void validate() const;
};

/// Decision-vector layout: inputs first, then shooting states.
///   z = (u_0, ..., u_{N-1}, x_1, ..., x_N),  dim = 2N + 4N.
struct OcpLayout {
  int N{0};
  int n{0};
  int m_eq{0};
  int m_ineq{0};

  int u_index(int j) const { return 2 * j; }
  int x_index(int j) const { return 2 * N + 4 * (j - 1); }  // j in [1, N]

  static OcpLayout make(const OcpConfig& cfg);
};

NlpProblem build_baseline(const OcpConfig& cfg, const StateD& x_k);
NlpProblem build_certified(const OcpConfig& cfg, const StateD& x_k);
NlpProblem build_ocp(const OcpConfig& cfg, const StateD& x_k);

std::vector<std::string> constraint_labels(const OcpConfig& cfg);

/// Default cold start: zero inputs and the matching dynamics rollout.
Eigen::VectorXd cold_start_guess(const OcpConfig& cfg, const StateD& x_k);

/// Shifts a solved trajectory one stage, repeats the last input and extends
/// the terminal state with the dynamics, so all defects stay exactly zero.
Eigen::VectorXd shift_warm_start(const OcpConfig& cfg, const Eigen::VectorXd& z_prev,
                                 const StateD& x_k);

struct MpcStepResult {
  InputD u0;
  SolveResult sol;
};

/// One receding-horizon step: builds the OCP at x_k, warm starts from the
/// previous solution when given, and returns the first optimal input.
MpcStepResult mpc_step(const OcpConfig& cfg, const StateD& x_k, const SolveResult* warm = nullptr,
                       const SolverOptions& opts = {});

}  // namespace cbfmpc
