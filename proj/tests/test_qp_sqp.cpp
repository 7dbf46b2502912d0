#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "cbfmpc/nlp.hpp"
#include "cbfmpc/qp.hpp"

using namespace cbfmpc;

namespace {

// Independent KKT recomputation for a QP in Goldfarb-Idnani form.
void check_qp_kkt(const QpProblem& qp, const QpResult& r, double tol = 1e-8) {
  Eigen::VectorXd stat = qp.G * r.x + qp.g0;
  if (qp.ce0.size() > 0) stat -= qp.CE * r.lambda_eq;
  if (qp.ci0.size() > 0) stat -= qp.CI * r.mu;
  CHECK(stat.lpNorm<Eigen::Infinity>() <= tol * (1.0 + qp.g0.lpNorm<Eigen::Infinity>()));
  for (int i = 0; i < qp.ce0.size(); ++i)
    CHECK(std::abs(qp.CE.col(i).dot(r.x) + qp.ce0(i)) <= tol * (1.0 + std::abs(qp.ce0(i))));
  for (int i = 0; i < qp.ci0.size(); ++i) {
    const double s = qp.CI.col(i).dot(r.x) + qp.ci0(i);
    CHECK(s >= -tol * (1.0 + std::abs(qp.ci0(i))));
    CHECK(r.mu(i) >= -tol);
    CHECK(std::abs(r.mu(i) * s) <= 1e-6 * (1.0 + std::abs(r.mu(i))));
  }
}

NlpProblem quadratic_1d(double target) {
  NlpProblem p;
  p.n = 1;
  p.m_eq = 0;
  p.m_ineq = 0;
  p.objective = [target](const Eigen::VectorXd& z) {
    return (z(0) - target) * (z(0) - target);
  };
  p.objective_grad = [target](const Eigen::VectorXd& z) {
    return Eigen::VectorXd::Constant(1, 2.0 * (z(0) - target));
  };
  p.lb = Eigen::VectorXd::Constant(1, -std::numeric_limits<double>::infinity());
  p.ub = Eigen::VectorXd::Constant(1, std::numeric_limits<double>::infinity());
  return p;
}

}  // namespace

TEST_CASE("qp: unconstrained scalar quadratic") {
  QpProblem qp;
  qp.G = Eigen::MatrixXd::Constant(1, 1, 2.0);
  qp.g0 = Eigen::VectorXd::Constant(1, -6.0);
  qp.CE.resize(1, 0);
  qp.ce0.resize(0);
  qp.CI.resize(1, 0);
  qp.ci0.resize(0);
  const QpResult r = solve_qp(qp);
  REQUIRE(r.status == QpStatus::optimal);
  CHECK(r.x(0) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("qp: active bound with multiplier 2") {
  QpProblem qp;
  qp.G = Eigen::MatrixXd::Constant(1, 1, 2.0);
  qp.g0 = Eigen::VectorXd::Zero(1);
  qp.CE.resize(1, 0);
  qp.ce0.resize(0);
  qp.CI = Eigen::MatrixXd::Constant(1, 1, 1.0);
  qp.ci0 = Eigen::VectorXd::Constant(1, -1.0);
  const QpResult r = solve_qp(qp);
  REQUIRE(r.status == QpStatus::optimal);
  CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.mu(0) == doctest::Approx(2.0).epsilon(1e-10));
  check_qp_kkt(qp, r);
}

TEST_CASE("qp: equality-constrained projection") {
  QpProblem qp;
  qp.G = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  qp.g0 = Eigen::Vector2d(-2.0, -4.0);
  qp.CE = Eigen::MatrixXd::Constant(2, 1, 1.0);
  qp.ce0 = Eigen::VectorXd::Constant(1, -1.0);
  qp.CI.resize(2, 0);
  qp.ci0.resize(0);
  const QpResult r = solve_qp(qp);
  REQUIRE(r.status == QpStatus::optimal);
  CHECK(r.x(0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(r.x(1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.lambda_eq(0) == doctest::Approx(-2.0).epsilon(1e-10));
  check_qp_kkt(qp, r);
}

TEST_CASE("qp: infeasible inequalities are detected") {
  QpProblem qp;
  qp.G = Eigen::MatrixXd::Identity(1, 1);
  qp.g0 = Eigen::VectorXd::Zero(1);
  qp.CE.resize(1, 0);
  qp.ce0.resize(0);
  qp.CI.resize(1, 2);
  qp.CI << 1.0, -1.0;
  qp.ci0.resize(2);
  qp.ci0 << -1.0, -0.5;  // z >= 1 and z <= -0.5
  const QpResult r = solve_qp(qp);
  CHECK(r.status == QpStatus::infeasible);
}

TEST_CASE("qp: random strictly convex programs satisfy KKT") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 6);
    const int me = static_cast<int>(rng() % std::min(3, n));
    const int mi = 1 + static_cast<int>(rng() % 6);
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) M(i, j) = gauss(rng);
    QpProblem qp;
    qp.G = M.transpose() * M + Eigen::MatrixXd::Identity(n, n);
    qp.g0.resize(n);
    for (int i = 0; i < n; ++i) qp.g0(i) = gauss(rng);
    qp.CE.resize(n, me);
    qp.ce0.resize(me);
    for (int c = 0; c < me; ++c) {
      for (int i = 0; i < n; ++i) qp.CE(i, c) = gauss(rng);
      qp.ce0(c) = gauss(rng);
    }
    qp.CI.resize(n, mi);
    qp.ci0.resize(mi);
    for (int c = 0; c < mi; ++c) {
      for (int i = 0; i < n; ++i) qp.CI(i, c) = gauss(rng);
      qp.ci0(c) = gauss(rng) + 2.0;  // keep most problems feasible
    }
    const QpResult r = solve_qp(qp);
    if (r.status != QpStatus::optimal) continue;  // genuinely infeasible draws
    check_qp_kkt(qp, r);
  }
}

TEST_CASE("sqp: scalar quadratic from zero") {
  const NlpProblem p = quadratic_1d(3.0);
  const SolveResult r = solve_nlp(p, Eigen::VectorXd::Zero(1));
  REQUIRE(r.status == SolveStatus::converged);
  CHECK(r.z(0) == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(r.objective == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(r.kkt.stationarity <= 1e-6);
}

TEST_CASE("sqp: active inequality with multiplier 2") {
  NlpProblem p;
  p.n = 1;
  p.m_eq = 0;
  p.m_ineq = 1;
  p.objective = [](const Eigen::VectorXd& z) { return z(0) * z(0); };
  p.objective_grad = [](const Eigen::VectorXd& z) {
    return Eigen::VectorXd::Constant(1, 2.0 * z(0));
  };
  p.ineq = [](const Eigen::VectorXd& z) { return Eigen::VectorXd::Constant(1, z(0) - 1.0); };
  p.ineq_jac = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Constant(1, 1, 1.0); };
  p.lb = Eigen::VectorXd::Constant(1, -std::numeric_limits<double>::infinity());
  p.ub = Eigen::VectorXd::Constant(1, std::numeric_limits<double>::infinity());
  const SolveResult r = solve_nlp(p, Eigen::VectorXd::Zero(1));
  REQUIRE(r.status == SolveStatus::converged);
  CHECK(r.z(0) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(r.mu_ineq(0) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("sqp: equality-constrained projection") {
  NlpProblem p;
  p.n = 2;
  p.m_eq = 1;
  p.m_ineq = 0;
  p.objective = [](const Eigen::VectorXd& z) {
    return (z(0) - 1.0) * (z(0) - 1.0) + (z(1) - 2.0) * (z(1) - 2.0);
  };
  p.objective_grad = [](const Eigen::VectorXd& z) {
    Eigen::VectorXd g(2);
    g << 2.0 * (z(0) - 1.0), 2.0 * (z(1) - 2.0);
    return g;
  };
  p.eq = [](const Eigen::VectorXd& z) {
    return Eigen::VectorXd::Constant(1, z(0) + z(1) - 1.0);
  };
  p.eq_jac = [](const Eigen::VectorXd&) {
    Eigen::MatrixXd J(1, 2);
    J << 1.0, 1.0;
    return J;
  };
  p.lb = Eigen::VectorXd::Constant(2, -std::numeric_limits<double>::infinity());
  p.ub = Eigen::VectorXd::Constant(2, std::numeric_limits<double>::infinity());
  const SolveResult r = solve_nlp(p, Eigen::VectorXd::Zero(2));
  REQUIRE(r.status == SolveStatus::converged);
  CHECK(r.z(0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-8));
  CHECK(r.z(1) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("sqp: independent KKT certification of a converged run") {
  // Nonlinear inequality active at the optimum: min x+y s.t. x^2+y^2 <= 2.
  NlpProblem p;
  p.n = 2;
  p.m_eq = 0;
  p.m_ineq = 1;
  p.objective = [](const Eigen::VectorXd& z) { return z(0) + z(1); };
  p.objective_grad = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Ones(2); };
  p.ineq = [](const Eigen::VectorXd& z) {
    return Eigen::VectorXd::Constant(1, 2.0 - z.squaredNorm());
  };
  p.ineq_jac = [](const Eigen::VectorXd& z) {
    Eigen::MatrixXd J(1, 2);
    J << -2.0 * z(0), -2.0 * z(1);
    return J;
  };
  p.lb = Eigen::VectorXd::Constant(2, -std::numeric_limits<double>::infinity());
  p.ub = Eigen::VectorXd::Constant(2, std::numeric_limits<double>::infinity());
  const SolveResult r = solve_nlp(p, Eigen::VectorXd::Zero(2));
  REQUIRE(r.status == SolveStatus::converged);
  CHECK(r.z(0) == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(r.z(1) == doctest::Approx(-1.0).epsilon(1e-7));

  // re-derive the residuals from raw callbacks
  const Eigen::VectorXd g = p.objective_grad(r.z);
  const Eigen::MatrixXd Ji = p.ineq_jac(r.z);
  const Eigen::VectorXd ci = p.ineq(r.z);
  const Eigen::VectorXd stat = g - Ji.transpose() * r.mu_ineq;
  CHECK(stat.lpNorm<Eigen::Infinity>() <= 1e-6);
  CHECK(ci(0) >= -1e-6);
  CHECK(r.mu_ineq(0) >= -1e-6);
  CHECK(std::abs(r.mu_ineq(0) * ci(0)) <= 1e-6);
}

TEST_CASE("sqp: bounds work as box constraints") {
  NlpProblem p = quadratic_1d(3.0);
  p.ub(0) = 1.0;
  const SolveResult r = solve_nlp(p, Eigen::VectorXd::Zero(1));
  REQUIRE(r.status == SolveStatus::converged);
  CHECK(r.z(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.mu_hi(0) == doctest::Approx(4.0).epsilon(1e-6));  // grad 2(z-3) = -4 at z=1
}

TEST_CASE("sqp: deterministic iterate traces") {
  NlpProblem p;
  p.n = 2;
  p.m_eq = 0;
  p.m_ineq = 1;
  p.objective = [](const Eigen::VectorXd& z) {
    const double a = z(1) - z(0) * z(0);
    return (1.0 - z(0)) * (1.0 - z(0)) + 10.0 * a * a;
  };
  p.objective_grad = [](const Eigen::VectorXd& z) {
    const double a = z(1) - z(0) * z(0);
    Eigen::VectorXd g(2);
    g << -2.0 * (1.0 - z(0)) - 40.0 * a * z(0), 20.0 * a;
    return g;
  };
  p.ineq = [](const Eigen::VectorXd& z) { return Eigen::VectorXd::Constant(1, z(0) + 2.0); };
  p.ineq_jac = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Constant(1, 1, 1.0); };
  p.lb = Eigen::VectorXd::Constant(2, -std::numeric_limits<double>::infinity());
  p.ub = Eigen::VectorXd::Constant(2, std::numeric_limits<double>::infinity());
  SolverOptions opts;
  opts.record_trace = true;
  opts.max_iter = 400;
  const Eigen::VectorXd z0 = Eigen::Vector2d(-1.2, 1.0);
  const SolveResult a = solve_nlp(p, z0, opts);
  const SolveResult b = solve_nlp(p, z0, opts);
  REQUIRE(a.status == SolveStatus::converged);
  CHECK(a.z(0) == doctest::Approx(1.0).epsilon(1e-6));
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i] == b.trace[i]);
}

TEST_CASE("sqp: strictly convex QP reaches the analytic optimum") {
  std::mt19937_64 rng(123);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n = 6;
  Eigen::MatrixXd M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = gauss(rng);
  const Eigen::MatrixXd G = M.transpose() * M + Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd c(n);
  for (int i = 0; i < n; ++i) c(i) = gauss(rng);

  QpProblem qp;
  qp.G = G;
  qp.g0 = c;
  qp.CE.resize(n, 0);
  qp.ce0.resize(0);
  qp.CI = Eigen::MatrixXd::Identity(n, n);  // x >= -1 elementwise
  qp.ci0 = Eigen::VectorXd::Constant(n, 1.0);
  const QpResult direct = solve_qp(qp);
  REQUIRE(direct.status == QpStatus::optimal);

  NlpProblem p;
  p.n = n;
  p.m_eq = 0;
  p.m_ineq = n;
  p.objective = [G, c](const Eigen::VectorXd& z) { return 0.5 * z.dot(G * z) + c.dot(z); };
  p.objective_grad = [G, c](const Eigen::VectorXd& z) -> Eigen::VectorXd { return G * z + c; };
  p.ineq = [](const Eigen::VectorXd& z) -> Eigen::VectorXd {
    return z + Eigen::VectorXd::Constant(z.size(), 1.0);
  };
  p.ineq_jac = [n](const Eigen::VectorXd&) -> Eigen::MatrixXd {
    return Eigen::MatrixXd::Identity(n, n);
  };
  p.lb = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
  p.ub = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  const SolveResult r = solve_nlp(p, Eigen::VectorXd::Zero(n));
  REQUIRE(r.status == SolveStatus::converged);
  CHECK(r.objective <= direct.objective + 1e-8);
  CHECK(r.objective >= direct.objective - 1e-8);
}

TEST_CASE("sqp: local infeasibility certificate") {
  NlpProblem p;
  p.n = 1;
  p.m_eq = 0;
  p.m_ineq = 1;
  p.objective = [](const Eigen::VectorXd& z) { return z(0) * z(0); };
  p.objective_grad = [](const Eigen::VectorXd& z) {
    return Eigen::VectorXd::Constant(1, 2.0 * z(0));
  };
  p.ineq = [](const Eigen::VectorXd& z) {
    return Eigen::VectorXd::Constant(1, -z(0) * z(0) - 1.0);
  };
  p.ineq_jac = [](const Eigen::VectorXd& z) {
    return Eigen::MatrixXd::Constant(1, 1, -2.0 * z(0));
  };
  p.lb = Eigen::VectorXd::Constant(1, -std::numeric_limits<double>::infinity());
  p.ub = Eigen::VectorXd::Constant(1, std::numeric_limits<double>::infinity());
  const SolveResult r = solve_nlp(p, Eigen::VectorXd::Constant(1, 0.7));
  CHECK(r.status == SolveStatus::infeasible_detected);
  CHECK(r.infeasibility > 0.5);
}

TEST_CASE("sqp: iteration cap returns the best iterate") {
  NlpProblem p = quadratic_1d(100.0);
  SolverOptions opts;
  opts.max_iter = 1;
  const SolveResult r = solve_nlp(p, Eigen::VectorXd::Zero(1), opts);
  CHECK((r.status == SolveStatus::max_iter || r.status == SolveStatus::converged));
  CHECK(r.z.size() == 1);
}
