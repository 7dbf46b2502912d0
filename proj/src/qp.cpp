#include "cbfmpc/qp.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace cbfmpc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Rotates d(j) into d(j-1) and applies the matching orthogonal update to the
// columns of J, preserving d = J^T np for the active-set factorization.
void triangularize_step(Eigen::MatrixXd& J, Eigen::VectorXd& d, int j) {
  const double cc = d(j - 1);
  const double ss = d(j);
  const double h = std::hypot(cc, ss);
  if (h == 0.0) return;
  double c = cc / h;
  double s = ss / h;
  d(j) = 0.0;
  if (c < 0.0) {
    c = -c;
    s = -s;
    d(j - 1) = -h;
  } else {
    d(j - 1) = h;
  }
  const int n = static_cast<int>(J.rows());
  for (int k = 0; k < n; ++k) {
    const double t1 = J(k, j - 1);
    const double t2 = J(k, j);
    J(k, j - 1) = c * t1 + s * t2;
    J(k, j) = -s * t1 + c * t2;
  }
}

}  // namespace

QpResult solve_qp(const QpProblem& qp, int max_pivots) {
  const int n = static_cast<int>(qp.G.rows());
  const int me = static_cast<int>(qp.ce0.size());
  const int mi = static_cast<int>(qp.ci0.size());

  QpResult res;
  res.lambda_eq = Eigen::VectorXd::Zero(me);
  res.mu = Eigen::VectorXd::Zero(mi);

  // Normalized constraint columns keep the pivot tolerances scale free.
  Eigen::MatrixXd CE = qp.CE;
  Eigen::VectorXd ce0 = qp.ce0;
  Eigen::MatrixXd CI = qp.CI;
  Eigen::VectorXd ci0 = qp.ci0;
  Eigen::VectorXd escale = Eigen::VectorXd::Ones(me);
  Eigen::VectorXd iscale = Eigen::VectorXd::Ones(mi);
  for (int i = 0; i < me; ++i) {
    const double nrm = CE.col(i).norm();
    if (nrm > 0.0) {
      CE.col(i) /= nrm;
      ce0(i) /= nrm;
      escale(i) = nrm;
    }
  }
  for (int i = 0; i < mi; ++i) {
    const double nrm = CI.col(i).norm();
    if (nrm > 0.0) {
      CI.col(i) /= nrm;
      ci0(i) /= nrm;
      iscale(i) = nrm;
    } else if (ci0(i) < 0.0) {
      res.status = QpStatus::infeasible;  // 0 >= -ci0 impossible
      return res;
    }
  }

  Eigen::LLT<Eigen::MatrixXd> llt(qp.G);
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(n, n);
  llt.matrixU().solveInPlace(J);  // J = L^{-T}

  Eigen::VectorXd x = llt.solve(-qp.g0);

  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, n);
  double R_norm = 1.0;

  std::vector<int> active;  // first slots equalities (stored as -1-i), then CI indices
  active.reserve(static_cast<std::size_t>(n));
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n + 1);
  int iq = 0;

  Eigen::VectorXd d(n), z(n), r(n), np(n);

  const double eps = 1e-13;

  auto compute_directions = [&](void) {
    d.noalias() = J.transpose() * np;
    z.setZero();
    for (int k = iq; k < n; ++k) z += J.col(k) * d(k);
    if (iq > 0)
      r.head(iq) =
          R.topLeftCorner(iq, iq).triangularView<Eigen::Upper>().solve(d.head(iq));
  };

  auto add_constraint = [&](void) -> bool {
    for (int j = n - 1; j >= iq + 1; --j) triangularize_step(J, d, j);
    if (std::abs(d(iq)) <= eps * R_norm) return false;
    R.col(iq).head(iq + 1) = d.head(iq + 1);
    R_norm = std::max(R_norm, std::abs(d(iq)));
    ++iq;
    return true;
  };

  auto delete_constraint = [&](int pos) {
    for (int i = pos; i < iq - 1; ++i) {
      active[static_cast<std::size_t>(i)] = active[static_cast<std::size_t>(i + 1)];
      u(i) = u(i + 1);
      R.col(i) = R.col(i + 1);
    }
    active.pop_back();
    --iq;
    u(iq) = 0.0;
    R.col(iq).setZero();
    for (int j = pos; j < iq; ++j) {
      const double cc = R(j, j);
      const double ss = R(j + 1, j);
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      double c = cc / h;
      double s = ss / h;
      R(j + 1, j) = 0.0;
      if (c < 0.0) {
        c = -c;
        s = -s;
        R(j, j) = -h;
      } else {
        R(j, j) = h;
      }
      for (int k = j + 1; k < iq; ++k) {
        const double t1 = R(j, k);
        const double t2 = R(j + 1, k);
        R(j, k) = c * t1 + s * t2;
        R(j + 1, k) = -s * t1 + c * t2;
      }
      for (int k = 0; k < n; ++k) {
        const double t1 = J(k, j);
        const double t2 = J(k, j + 1);
        J(k, j) = c * t1 + s * t2;
        J(k, j + 1) = -s * t1 + c * t2;
      }
    }
  };

  // Phase 1: drive in the equality constraints.
  for (int i = 0; i < me; ++i) {
    np = CE.col(i);
    compute_directions();
    const double resid = np.dot(x) + ce0(i);
    const double z2 = z.dot(np);
    if (z2 > eps) {
      const double t2 = -resid / z2;
      x += t2 * z;
      u.head(iq) -= t2 * r.head(iq);
      u(iq) = t2;
      active.push_back(-1 - i);
      if (!add_constraint()) {
        active.pop_back();
        u(iq) = 0.0;
        if (std::abs(np.dot(x) + ce0(i)) > 1e-9 * (1.0 + std::abs(ce0(i)))) {
          res.status = QpStatus::infeasible;
          return res;
        }
      }
    } else {
      // Dependent equality: consistent rows are redundant, inconsistent ones
      // make the problem infeasible.
      if (std::abs(resid) > 1e-9 * (1.0 + std::abs(ce0(i)))) {
        res.status = QpStatus::infeasible;
        return res;
      }
    }
  }

  int pivots = 0;
  std::vector<char> excluded(static_cast<std::size_t>(mi), 0);

  while (true) {
    if (++pivots > max_pivots) {
      res.status = QpStatus::max_pivots;
      break;
    }

    // Most violated inactive inequality.
    const double feas_tol = 1e-10 * (1.0 + x.lpNorm<Eigen::Infinity>());
    int ip = -1;
    double smin = -feas_tol;
    for (int i = 0; i < mi; ++i) {
      if (excluded[static_cast<std::size_t>(i)]) continue;
      bool is_active = false;
      for (int k = me; k < iq; ++k)
        if (active[static_cast<std::size_t>(k)] == i) {
          is_active = true;
          break;
        }
      if (is_active) continue;
      const double s = CI.col(i).dot(x) + ci0(i);
      if (s < smin) {
        smin = s;
        ip = i;
      }
    }
    if (ip < 0) {
      res.status = QpStatus::optimal;
      break;
    }

    np = CI.col(ip);
    double u_ip = 0.0;
    double s_ip = smin;

    while (true) {
      compute_directions();

      double t1 = kInf;
      int drop = -1;
      for (int k = me; k < iq; ++k) {
        if (r(k) > eps) {
          const double ratio = u(k) / r(k);
          if (ratio < t1) {
            t1 = ratio;
            drop = k;
          }
        }
      }
      const double z2 = z.dot(np);
      const double t2 = (z2 > eps) ? -s_ip / z2 : kInf;
      const double t = std::min(t1, t2);

      if (t >= kInf) {
        res.status = QpStatus::infeasible;  // dual unbounded
        res.x = x;
        res.pivots = pivots;
        return res;
      }

      if (t2 >= kInf) {
        // Dual-only step: drop the blocking constraint and retry.
        u.head(iq) -= t * r.head(iq);
        u_ip += t;
        delete_constraint(drop);
        if (++pivots > max_pivots) {
          res.status = QpStatus::max_pivots;
          goto finish;
        }
        continue;
      }

      x += t * z;
      u.head(iq) -= t * r.head(iq);
      u_ip += t;
      s_ip = np.dot(x) + ci0(ip);
      if (t > 0.0) std::fill(excluded.begin(), excluded.end(), 0);

      if (t == t2) {
        u(iq) = u_ip;
        active.push_back(ip);
        if (!add_constraint()) {
          active.pop_back();
          u(iq) = 0.0;
          excluded[static_cast<std::size_t>(ip)] = 1;  // dependent; satisfied now
        }
        break;
      }

      delete_constraint(drop);
      if (++pivots > max_pivots) {
        res.status = QpStatus::max_pivots;
        goto finish;
      }
    }
  }

finish:
  res.x = x;
  res.pivots = pivots;
  res.objective = 0.5 * x.dot(qp.G * x) + qp.g0.dot(x);
  for (int k = 0; k < iq; ++k) {
    const int id = active[static_cast<std::size_t>(k)];
    if (id < 0)
      res.lambda_eq(-1 - id) = u(k) / escale(-1 - id);
    else
      res.mu(id) = u(k) / iscale(id);
  }
  return res;
}

}  // namespace cbfmpc
