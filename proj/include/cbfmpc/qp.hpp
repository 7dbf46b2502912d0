#pragma once

#include <Eigen/Core>

namespace cbfmpc {

/// Strictly convex quadratic program in Goldfarb-Idnani form:
///   min 1/2 x' G x + g0' x   s.t.   CE' x + ce0 = 0,   CI' x + ci0 >= 0
/// with G symmetric positive definite; constraint normals are the COLUMNS of
/// CE (n x me) and CI (n x mi).
struct QpProblem {
  Eigen::MatrixXd G;
  Eigen::VectorXd g0;
  Eigen::MatrixXd CE;
  Eigen::VectorXd ce0;
  Eigen::MatrixXd CI;
  Eigen::VectorXd ci0;
};

enum class QpStatus { optimal, infeasible, max_pivots };

struct QpResult {
  QpStatus status{QpStatus::infeasible};
  Eigen::VectorXd x;
  Eigen::VectorXd lambda_eq;  ///< equality multipliers: G x + g0 = CE*lambda + CI*mu
  Eigen::VectorXd mu;         ///< inequality multipliers, >= 0
  double objective{0.0};
  int pivots{0};
};

/// Dual active-set method (Goldfarb & Idnani). Starts from the unconstrained
/// minimizer and adds violated constraints one at a time, so no feasible
/// starting point is required; detects primal infeasibility as an unbounded
/// dual step.
QpResult solve_qp(const QpProblem& qp, int max_pivots = 500);

}  // namespace cbfmpc
