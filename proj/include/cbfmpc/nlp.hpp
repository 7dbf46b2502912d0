#pragma once

#include <Eigen/Core>
#include <functional>
#include <limits>
#include <vector>

namespace cbfmpc {

/// Flattened smooth NLP:
///   min f(z)  s.t.  c_eq(z) = 0,  c_ineq(z) >= 0,  lb <= z <= ub.
/// All callbacks must be defined on all of R^n.
struct NlpProblem {
  int n{0};
  int m_eq{0};
  int m_ineq{0};
  std::function<double(const Eigen::VectorXd&)> objective;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> objective_grad;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> eq;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> eq_jac;    // m_eq x n
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> ineq;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> ineq_jac;  // m_ineq x n
  Eigen::VectorXd lb;  ///< per-variable lower bounds (-inf allowed)
  Eigen::VectorXd ub;  ///< per-variable upper bounds (+inf allowed)
};

enum class SolveStatus { converged, max_iter, infeasible_detected };

struct KktResiduals {
  double stationarity{std::numeric_limits<double>::infinity()};
  double feasibility{std::numeric_limits<double>::infinity()};
  double complementarity{std::numeric_limits<double>::infinity()};

  double worst() const { return std::max(stationarity, std::max(feasibility, complementarity)); }
};

struct SolverOptions {
  double kkt_tol{1e-6};
  int max_iter{200};
  int max_qp_pivots{500};
  int bfgs_reset_after{5};  ///< reset B to identity after this many consecutive curvature failures
  double armijo_c1{1e-4};
  double backtrack_ratio{0.5};
  double min_step{1e-12};
  bool record_trace{false};
};

struct SolveResult {
  Eigen::VectorXd z;
  double objective{0.0};
  SolveStatus status{SolveStatus::max_iter};
  int iterations{0};
  KktResiduals kkt;
  Eigen::VectorXd lambda_eq;
  Eigen::VectorXd mu_ineq;
  Eigen::VectorXd mu_lo;
  Eigen::VectorXd mu_hi;
  double infeasibility{0.0};
  std::vector<Eigen::VectorXd> trace;
};

/// Sequential quadratic programming with damped BFGS Lagrangian Hessian,
/// l1-penalty Armijo line search and a dual active-set QP subproblem solver;
/// an elastic (slack) subproblem takes over when a QP is infeasible.
/// Deterministic: identical inputs produce identical iterate sequences.
SolveResult solve_nlp(const NlpProblem& problem, const Eigen::VectorXd& z0,
                      const SolverOptions& opts = {},
                      const Eigen::VectorXd* warm_lambda_eq = nullptr,
                      const Eigen::VectorXd* warm_mu_ineq = nullptr);

}  // namespace cbfmpc
