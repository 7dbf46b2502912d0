#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "cbfmpc/nlp.hpp"
#include "cbfmpc/qp.hpp"

namespace cbfmpc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Evaluation {
  double f{0.0};
  Eigen::VectorXd g;
  Eigen::VectorXd ce;
  Eigen::MatrixXd Je;
  Eigen::VectorXd ci;
  Eigen::MatrixXd Ji;
};

Evaluation evaluate(const NlpProblem& p, const Eigen::VectorXd& z) {
  Evaluation e;
  e.f = p.objective(z);
  e.g = p.objective_grad(z);
  if (p.m_eq > 0) {
    e.ce = p.eq(z);
    e.Je = p.eq_jac(z);
  } else {
    e.ce.resize(0);
    e.Je.resize(0, p.n);
  }
  if (p.m_ineq > 0) {
    e.ci = p.ineq(z);
    e.Ji = p.ineq_jac(z);
  } else {
    e.ci.resize(0);
    e.Ji.resize(0, p.n);
  }
  return e;
}

double bound_violation(const NlpProblem& p, const Eigen::VectorXd& z) {
  double v = 0.0;
  for (int k = 0; k < p.n; ++k) {
    if (std::isfinite(p.lb(k))) v += std::max(0.0, p.lb(k) - z(k));
    if (std::isfinite(p.ub(k))) v += std::max(0.0, z(k) - p.ub(k));
  }
  return v;
}

double violation_l1(const NlpProblem& p, const Eigen::VectorXd& ce, const Eigen::VectorXd& ci,
                    const Eigen::VectorXd& z) {
  double v = ce.lpNorm<1>();
  for (int j = 0; j < ci.size(); ++j) v += std::max(0.0, -ci(j));
  return v + bound_violation(p, z);
}

KktResiduals residuals(const NlpProblem& p, const Evaluation& e, const Eigen::VectorXd& z,
                       const Eigen::VectorXd& lambda, const Eigen::VectorXd& mu,
                       const Eigen::VectorXd& mu_lo, const Eigen::VectorXd& mu_hi) {
  KktResiduals k;
  Eigen::VectorXd grad_lag = e.g;
  if (p.m_eq > 0) grad_lag.noalias() -= e.Je.transpose() * lambda;
  if (p.m_ineq > 0) grad_lag.noalias() -= e.Ji.transpose() * mu;
  grad_lag -= mu_lo;
  grad_lag += mu_hi;
  k.stationarity = grad_lag.lpNorm<Eigen::Infinity>();

  double feas = (p.m_eq > 0) ? e.ce.lpNorm<Eigen::Infinity>() : 0.0;
  for (int j = 0; j < p.m_ineq; ++j) feas = std::max(feas, -e.ci(j));
  for (int i = 0; i < p.n; ++i) {
    if (std::isfinite(p.lb(i))) feas = std::max(feas, p.lb(i) - z(i));
    if (std::isfinite(p.ub(i))) feas = std::max(feas, z(i) - p.ub(i));
  }
  k.feasibility = std::max(feas, 0.0);

  double comp = 0.0;
  for (int j = 0; j < p.m_ineq; ++j) {
    comp = std::max(comp, std::abs(mu(j) * e.ci(j)));
    comp = std::max(comp, -mu(j));
  }
  for (int i = 0; i < p.n; ++i) {
    if (std::isfinite(p.lb(i))) comp = std::max(comp, std::abs(mu_lo(i) * (z(i) - p.lb(i))));
    if (std::isfinite(p.ub(i))) comp = std::max(comp, std::abs(mu_hi(i) * (p.ub(i) - z(i))));
  }
  k.complementarity = comp;
  return k;
}

}  // namespace

SolveResult solve_nlp(const NlpProblem& p, const Eigen::VectorXd& z0, const SolverOptions& opts,
                      const Eigen::VectorXd* warm_lambda_eq, const Eigen::VectorXd* warm_mu_ineq) {
  const int n = p.n;
  const int me = p.m_eq;
  const int mi = p.m_ineq;

  // Finite-bound bookkeeping: bounds enter the QP as unit-normal rows.
  std::vector<int> lo_idx, hi_idx;
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(p.lb(i))) lo_idx.push_back(i);
    if (std::isfinite(p.ub(i))) hi_idx.push_back(i);
  }
  const int nlo = static_cast<int>(lo_idx.size());
  const int nhi = static_cast<int>(hi_idx.size());

  SolveResult res;
  res.z = z0;
  res.lambda_eq = (warm_lambda_eq && warm_lambda_eq->size() == me)
                      ? *warm_lambda_eq
                      : Eigen::VectorXd::Zero(me);
  res.mu_ineq =
      (warm_mu_ineq && warm_mu_ineq->size() == mi) ? *warm_mu_ineq : Eigen::VectorXd::Zero(mi);
  res.mu_lo = Eigen::VectorXd::Zero(n);
  res.mu_hi = Eigen::VectorXd::Zero(n);

  Eigen::VectorXd z = z0;
  Evaluation e = evaluate(p, z);
  Eigen::MatrixXd B = Eigen::MatrixXd::Identity(n, n);
  bool b_scaled = false;
  int curvature_failures = 0;
  int line_search_failures = 0;
  double nu = 1.0;

  if (opts.record_trace) res.trace.push_back(z);

  int iter = 0;
  for (iter = 0; iter < opts.max_iter; ++iter) {
    res.kkt = residuals(p, e, z, res.lambda_eq, res.mu_ineq, res.mu_lo, res.mu_hi);
    if (res.kkt.stationarity <= opts.kkt_tol && res.kkt.feasibility <= opts.kkt_tol &&
        res.kkt.complementarity <= opts.kkt_tol) {
      res.status = SolveStatus::converged;
      break;
    }

    // QP subproblem in the step d.
    QpProblem qp;
    qp.G = B;
    qp.g0 = e.g;
    qp.CE = e.Je.transpose();
    qp.ce0 = e.ce;
    qp.CI.resize(n, mi + nlo + nhi);
    qp.ci0.resize(mi + nlo + nhi);
    if (mi > 0) {
      qp.CI.leftCols(mi) = e.Ji.transpose();
      qp.ci0.head(mi) = e.ci;
    }
    for (int k = 0; k < nlo; ++k) {
      qp.CI.col(mi + k) = Eigen::VectorXd::Unit(n, lo_idx[static_cast<std::size_t>(k)]);
      qp.ci0(mi + k) = z(lo_idx[static_cast<std::size_t>(k)]) - p.lb(lo_idx[static_cast<std::size_t>(k)]);
    }
    for (int k = 0; k < nhi; ++k) {
      qp.CI.col(mi + nlo + k) = -Eigen::VectorXd::Unit(n, hi_idx[static_cast<std::size_t>(k)]);
      qp.ci0(mi + nlo + k) = p.ub(hi_idx[static_cast<std::size_t>(k)]) - z(hi_idx[static_cast<std::size_t>(k)]);
    }

    QpResult qpr = solve_qp(qp, opts.max_qp_pivots);

    Eigen::VectorXd d;
    Eigen::VectorXd lambda_new, mu_new, mu_lo_new, mu_hi_new;
    bool elastic = false;

    if (qpr.status == QpStatus::optimal) {
      d = qpr.x;
      lambda_new = qpr.lambda_eq;
      mu_new = qpr.mu.head(mi);
      mu_lo_new = Eigen::VectorXd::Zero(n);
      mu_hi_new = Eigen::VectorXd::Zero(n);
      for (int k = 0; k < nlo; ++k) mu_lo_new(lo_idx[static_cast<std::size_t>(k)]) = qpr.mu(mi + k);
      for (int k = 0; k < nhi; ++k) mu_hi_new(hi_idx[static_cast<std::size_t>(k)]) = qpr.mu(mi + nlo + k);
    } else {
      // Elastic subproblem: slacks absorb the linearized constraints.
      elastic = true;
      const int ns = 2 * me + mi;
      const int ne = n + ns;
      const double rho = std::max(1e4, 100.0 * nu);
      QpProblem el;
      el.G = Eigen::MatrixXd::Zero(ne, ne);
      el.G.topLeftCorner(n, n) = B;
      el.G.bottomRightCorner(ns, ns) = 1e-6 * Eigen::MatrixXd::Identity(ns, ns);
      el.g0.resize(ne);
      el.g0.head(n) = e.g;
      el.g0.tail(ns).setConstant(rho);
      el.CE = Eigen::MatrixXd::Zero(ne, me);
      el.ce0 = e.ce;
      if (me > 0) {
        el.CE.topRows(n) = e.Je.transpose();
        for (int i = 0; i < me; ++i) {
          el.CE(n + i, i) = -1.0;       // s_e_plus
          el.CE(n + me + i, i) = 1.0;   // s_e_minus
        }
      }
      const int nci = mi + nlo + nhi + ns;
      el.CI = Eigen::MatrixXd::Zero(ne, nci);
      el.ci0.resize(nci);
      for (int j = 0; j < mi; ++j) {
        el.CI.col(j).head(n) = e.Ji.row(j).transpose();
        el.CI(n + 2 * me + j, j) = 1.0;  // s_i
        el.ci0(j) = e.ci(j);
      }
      for (int k = 0; k < nlo; ++k) {
        el.CI.col(mi + k) = Eigen::VectorXd::Unit(ne, lo_idx[static_cast<std::size_t>(k)]);
        el.ci0(mi + k) = z(lo_idx[static_cast<std::size_t>(k)]) - p.lb(lo_idx[static_cast<std::size_t>(k)]);
      }
      for (int k = 0; k < nhi; ++k) {
        el.CI.col(mi + nlo + k) = -Eigen::VectorXd::Unit(ne, hi_idx[static_cast<std::size_t>(k)]);
        el.ci0(mi + nlo + k) = p.ub(hi_idx[static_cast<std::size_t>(k)]) - z(hi_idx[static_cast<std::size_t>(k)]);
      }
      for (int s = 0; s < ns; ++s) {
        el.CI.col(mi + nlo + nhi + s) = Eigen::VectorXd::Unit(ne, n + s);
        el.ci0(mi + nlo + nhi + s) = 0.0;
      }

      QpResult elr = solve_qp(el, 4 * opts.max_qp_pivots);
      if (elr.status != QpStatus::optimal) {
        res.status = SolveStatus::max_iter;
        break;
      }
      const double viol_now = violation_l1(p, e.ce, e.ci, z);
      const double viol_pred = elr.x.tail(ns).sum();
      if (viol_pred >= viol_now * (1.0 - 1e-6) - 1e-12) {
        // The linearization cannot reduce infeasibility: local certificate.
        res.status = SolveStatus::infeasible_detected;
        res.infeasibility = viol_now;
        break;
      }
      d = elr.x.head(n);
      lambda_new = elr.lambda_eq;
      mu_new = elr.mu.head(mi);
      mu_lo_new = Eigen::VectorXd::Zero(n);
      mu_hi_new = Eigen::VectorXd::Zero(n);
      for (int k = 0; k < nlo; ++k) mu_lo_new(lo_idx[static_cast<std::size_t>(k)]) = elr.mu(mi + k);
      for (int k = 0; k < nhi; ++k) mu_hi_new(hi_idx[static_cast<std::size_t>(k)]) = elr.mu(mi + nlo + k);
      nu = std::max(nu, rho);
    }

    // l1 penalty large enough to make d a descent direction for the merit.
    double mult_inf = 0.0;
    if (me > 0) mult_inf = std::max(mult_inf, lambda_new.lpNorm<Eigen::Infinity>());
    if (mi > 0) mult_inf = std::max(mult_inf, mu_new.lpNorm<Eigen::Infinity>());
    mult_inf = std::max(mult_inf, mu_lo_new.lpNorm<Eigen::Infinity>());
    mult_inf = std::max(mult_inf, mu_hi_new.lpNorm<Eigen::Infinity>());
    nu = std::max(nu, 2.0 * mult_inf + 1e-6);

    const double viol0 = violation_l1(p, e.ce, e.ci, z);
    const double phi0 = e.f + nu * viol0;
    const double dderiv = e.g.dot(d) - nu * viol0;

    const double dnorm = d.lpNorm<Eigen::Infinity>();
    if (dnorm < 1e-14 * (1.0 + z.lpNorm<Eigen::Infinity>()) && viol0 <= opts.kkt_tol) {
      // Numerically stationary; accept current multipliers and re-test.
      res.lambda_eq = lambda_new;
      res.mu_ineq = mu_new;
      res.mu_lo = mu_lo_new;
      res.mu_hi = mu_hi_new;
      res.kkt = residuals(p, e, z, res.lambda_eq, res.mu_ineq, res.mu_lo, res.mu_hi);
      res.status = (res.kkt.worst() <= opts.kkt_tol) ? SolveStatus::converged : SolveStatus::max_iter;
      ++iter;
      break;
    }

    double alpha = 1.0;
    bool accepted = false;
    double f_new = 0.0, viol_new = 0.0;
    Eigen::VectorXd z_new, ce_new, ci_new;
    while (alpha >= opts.min_step) {
      z_new = z + alpha * d;
      f_new = p.objective(z_new);
      ce_new = (me > 0) ? p.eq(z_new) : Eigen::VectorXd();
      ci_new = (mi > 0) ? p.ineq(z_new) : Eigen::VectorXd();
      viol_new = violation_l1(p, ce_new, ci_new, z_new);
      if (f_new + nu * viol_new <= phi0 + opts.armijo_c1 * alpha * dderiv) {
        accepted = true;
        break;
      }
      alpha *= opts.backtrack_ratio;
    }

    if (!accepted) {
      if (++line_search_failures >= 2) {
        res.status = SolveStatus::max_iter;
        break;
      }
      B = Eigen::MatrixXd::Identity(n, n);  // restart the local model and retry
      b_scaled = false;
      curvature_failures = 0;
      continue;
    }
    line_search_failures = 0;

    // Damped BFGS on the Lagrangian gradient difference.
    Eigen::VectorXd grad_lag_old = e.g;
    if (me > 0) grad_lag_old.noalias() -= e.Je.transpose() * lambda_new;
    if (mi > 0) grad_lag_old.noalias() -= e.Ji.transpose() * mu_new;

    Evaluation e_new = evaluate(p, z_new);
    Eigen::VectorXd grad_lag_new = e_new.g;
    if (me > 0) grad_lag_new.noalias() -= e_new.Je.transpose() * lambda_new;
    if (mi > 0) grad_lag_new.noalias() -= e_new.Ji.transpose() * mu_new;

    Eigen::VectorXd s = z_new - z;
    Eigen::VectorXd y = grad_lag_new - grad_lag_old;
    const double ss = s.squaredNorm();
    if (ss > 0.0) {
      if (!b_scaled) {
        const double sy0 = s.dot(y);
        if (sy0 > 1e-12 * ss) {
          B *= std::max(1e-3, std::min(1e6, y.squaredNorm() / sy0));
          b_scaled = true;
        }
      }
      Eigen::VectorXd Bs = B * s;
      const double sBs = s.dot(Bs);
      double sy = s.dot(y);
      if (sy < 0.2 * sBs) {
        const double denom = sBs - sy;
        if (denom > 0.0) {
          const double theta = 0.8 * sBs / denom;
          y = theta * y + (1.0 - theta) * Bs;
          sy = s.dot(y);
        }
      }
      if (sy > 1e-12 * std::max(1.0, sBs)) {
        B.noalias() -= (Bs * Bs.transpose()) / sBs;
        B.noalias() += (y * y.transpose()) / sy;
        B = 0.5 * (B + B.transpose());
        curvature_failures = 0;
      } else if (++curvature_failures >= opts.bfgs_reset_after) {
        B = Eigen::MatrixXd::Identity(n, n);
        b_scaled = false;
        curvature_failures = 0;
      }
    }

    z = z_new;
    e = e_new;
    res.lambda_eq = lambda_new;
    res.mu_ineq = mu_new;
    res.mu_lo = mu_lo_new;
    res.mu_hi = mu_hi_new;
    if (opts.record_trace) res.trace.push_back(z);
    (void)elastic;
  }

  res.z = z;
  res.objective = e.f;
  res.iterations = std::min(iter, opts.max_iter);
  res.infeasibility = violation_l1(p, e.ce, e.ci, z);
  if (res.status != SolveStatus::converged && res.status != SolveStatus::infeasible_detected) {
    // Final residual check in case the loop exhausted iterations right at the solution.
    res.kkt = residuals(p, e, z, res.lambda_eq, res.mu_ineq, res.mu_lo, res.mu_hi);
    if (res.kkt.worst() <= opts.kkt_tol) res.status = SolveStatus::converged;
  }
  return res;
}

}  // namespace cbfmpc
