#include "cbfmpc/ocp.hpp"

#include <memory>
#include <stdexcept>

namespace cbfmpc {

void OcpConfig::validate() const {
  if (N < 1) throw std::invalid_argument("OcpConfig: horizon must be positive");
  if (mode == OcpMode::certified && N < 3)
    throw std::invalid_argument("OcpConfig: certified mode requires N >= 3");
  if (!(Ts > 0.0)) throw std::invalid_argument("OcpConfig: Ts must be positive");
  if ((q_diag.array() < 0.0).any() || (qN_diag.array() < 0.0).any() ||
      (r_diag.array() < 0.0).any())
    throw std::invalid_argument("OcpConfig: weight diagonals must be nonnegative");
  if ((u_lo.array() > 0.0).any() || (u_hi.array() < 0.0).any())
    throw std::invalid_argument("OcpConfig: input bounds must satisfy u_lo <= 0 <= u_hi");
  if (!(v_max > 0.0)) throw std::invalid_argument("OcpConfig: v_max must be positive");
  if (v_max != safety.v_max)
    throw std::invalid_argument("OcpConfig: v_max and safety.v_max must agree");
  safety.validate();
  cert.validate();
}

OcpLayout OcpLayout::make(const OcpConfig& cfg) {
  OcpLayout lay;
  lay.N = cfg.N;
  lay.n = 6 * cfg.N;
  lay.m_eq = 4 * cfg.N;
  lay.m_ineq = (cfg.mode == OcpMode::baseline) ? 5 * cfg.N : 5 * cfg.N + 1;
  return lay;
}

namespace {

// Everything the NLP callbacks need, shared by value through a shared_ptr.
struct Transcription {
  OcpConfig cfg;
  StateD x0;
  DiscreteDynamics dyn;
  OcpLayout lay;
  Eigen::MatrixXd Je;  // constant: dynamics are linear

  StateD state_at(const Eigen::VectorXd& z, int j) const {
    if (j == 0) return x0;
    const int b = lay.x_index(j);
    return {{z(b), z(b + 1)}, {z(b + 2), z(b + 3)}};
  }
  InputD input_at(const Eigen::VectorXd& z, int j) const {
    const int b = lay.u_index(j);
    return {z(b), z(b + 1)};
  }
};

std::shared_ptr<const Transcription> make_transcription(const OcpConfig& cfg, const StateD& x_k) {
  cfg.validate();
  auto tr = std::make_shared<Transcription>();
  tr->cfg = cfg;
  tr->x0 = x_k;
  tr->dyn = zoh_discretize(cfg.Ts);
  tr->lay = OcpLayout::make(cfg);

  const int N = cfg.N;
  const auto& lay = tr->lay;
  Eigen::MatrixXd& Je = tr->Je;
  Je = Eigen::MatrixXd::Zero(lay.m_eq, lay.n);
  const Eigen::Matrix2d A = tr->dyn.A;
  const Eigen::Vector2d B = tr->dyn.B;
  for (int j = 0; j < N; ++j) {
    const int row = 4 * j;
    const int xj1 = lay.x_index(j + 1);
    Je.block<4, 4>(row, xj1).setIdentity();
    if (j > 0) {
      const int xj = lay.x_index(j);
      Je.block<2, 2>(row, xj) = -A;
      Je.block<2, 2>(row + 2, xj + 2) = -A;
    }
    const int uj = lay.u_index(j);
    Je.block<2, 1>(row, uj) = -B;
    Je.block<2, 1>(row + 2, uj + 1) = -B;
  }
  return tr;
}

double stage_cost(const OcpConfig& cfg, const StateD& x, const Eigen::Vector4d& qd) {
  const Eigen::Vector4d e = to_vector(x) - cfg.x_ref();
  return e.dot(qd.asDiagonal() * e);
}

NlpProblem assemble(std::shared_ptr<const Transcription> tr) {
  const OcpConfig& cfg = tr->cfg;
  const OcpLayout lay = tr->lay;
  const int N = cfg.N;
  const bool certified = cfg.mode == OcpMode::certified;

  NlpProblem p;
  p.n = lay.n;
  p.m_eq = lay.m_eq;
  p.m_ineq = lay.m_ineq;

  p.objective = [tr](const Eigen::VectorXd& z) {
    const OcpConfig& c = tr->cfg;
    double f = stage_cost(c, tr->x0, c.q_diag);
    for (int j = 1; j < c.N; ++j) f += stage_cost(c, tr->state_at(z, j), c.q_diag);
    f += stage_cost(c, tr->state_at(z, c.N), c.qN_diag);
    for (int j = 0; j < c.N; ++j) {
      const InputD u = tr->input_at(z, j);
      f += c.r_diag(0) * u.a1 * u.a1 + c.r_diag(1) * u.a2 * u.a2;
    }
    return f;
  };

  p.objective_grad = [tr](const Eigen::VectorXd& z) {
    const OcpConfig& c = tr->cfg;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(tr->lay.n);
    for (int j = 1; j <= c.N; ++j) {
      const Eigen::Vector4d qd = (j == c.N) ? c.qN_diag : c.q_diag;
      const int b = tr->lay.x_index(j);
      const Eigen::Vector4d e = to_vector(tr->state_at(z, j)) - c.x_ref();
      g.segment<4>(b) = 2.0 * qd.asDiagonal() * e;
    }
    for (int j = 0; j < c.N; ++j) {
      const int b = tr->lay.u_index(j);
      g(b) = 2.0 * c.r_diag(0) * z(b);
      g(b + 1) = 2.0 * c.r_diag(1) * z(b + 1);
    }
    return g;
  };

  p.eq = [tr](const Eigen::VectorXd& z) {
    const int N = tr->cfg.N;
    Eigen::VectorXd ce(tr->lay.m_eq);
    for (int j = 0; j < N; ++j) {
      const StateD xj = tr->state_at(z, j);
      const InputD uj = tr->input_at(z, j);
      const StateD pred = step(xj, uj, tr->dyn);
      const StateD xj1 = tr->state_at(z, j + 1);
      ce.segment<4>(4 * j) = to_vector(xj1) - to_vector(pred);
    }
    return ce;
  };

  p.eq_jac = [tr](const Eigen::VectorXd&) { return tr->Je; };

  p.ineq = [tr, certified](const Eigen::VectorXd& z) {
    const OcpConfig& c = tr->cfg;
    const int N = c.N;
    Eigen::VectorXd g(tr->lay.m_ineq);
    int row = 0;
    if (!certified) {
      for (int j = 1; j <= N; ++j) g(row++) = h_d(tr->state_at(z, j), c.safety.p0, c.safety);
      for (int j = 1; j <= N; ++j) {
        const StateD xj = tr->state_at(z, j);
        g(row++) = h_vmin(xj.agent1.v);
        g(row++) = h_vmin(xj.agent2.v);
      }
      for (int j = 1; j <= N; ++j) {
        const StateD xj = tr->state_at(z, j);
        g(row++) = h_vmax(xj.agent1.v, c.v_max);
        g(row++) = h_vmax(xj.agent2.v, c.v_max);
      }
    } else {
      for (int j = 1; j <= N - 2; ++j)
        g(row++) = H_d(tr->state_at(z, j), c.safety.p0, c.cert.pN, c.safety);
      const StateD xNm1 = tr->state_at(z, N - 1);
      const StateD xN = tr->state_at(z, N);
      g(row++) = h_d(xNm1, c.cert.pN, c.safety);
      for (int j = 1; j <= N - 1; ++j) {
        const StateD xj = tr->state_at(z, j);
        g(row++) = h_vmin(xj.agent1.v);
        g(row++) = h_vmin(xj.agent2.v);
      }
      for (int j = 1; j <= N - 1; ++j) {
        const StateD xj = tr->state_at(z, j);
        g(row++) = h_vmax(xj.agent1.v, c.v_max);
        g(row++) = h_vmax(xj.agent2.v, c.v_max);
      }
      g(row++) = h_d(xN, c.cert.pN, c.safety) -
                 (1.0 - c.cert.gamma_d) * h_d(xNm1, c.cert.pN, c.safety);
      g(row++) = h_vmin(xN.agent1.v) - (1.0 - c.cert.gamma_v) * h_vmin(xNm1.agent1.v);
      g(row++) = h_vmin(xN.agent2.v) - (1.0 - c.cert.gamma_v) * h_vmin(xNm1.agent2.v);
      g(row++) = h_vmax(xN.agent1.v, c.v_max) -
                 (1.0 - c.cert.gamma_v) * h_vmax(xNm1.agent1.v, c.v_max);
      g(row++) = h_vmax(xN.agent2.v, c.v_max) -
                 (1.0 - c.cert.gamma_v) * h_vmax(xNm1.agent2.v, c.v_max);
      g(row++) = delta_v(xNm1, c.safety.m_lf) - c.cert.dv_min;
    }
    return g;
  };

  p.ineq_jac = [tr, certified](const Eigen::VectorXd& z) {
    const OcpConfig& c = tr->cfg;
    const int N = c.N;
    const OcpLayout& lay = tr->lay;
    Eigen::MatrixXd Ji = Eigen::MatrixXd::Zero(lay.m_ineq, lay.n);
    int row = 0;
    if (!certified) {
      for (int j = 1; j <= N; ++j) {
        const auto xs = seed_state(tr->state_at(z, j));
        Ji.block<1, 4>(row++, lay.x_index(j)) = h_d(xs, c.safety.p0, c.safety).d.transpose();
      }
      for (int j = 1; j <= N; ++j) {
        Ji(row++, lay.x_index(j) + 1) = 1.0;
        Ji(row++, lay.x_index(j) + 3) = 1.0;
      }
      for (int j = 1; j <= N; ++j) {
        Ji(row++, lay.x_index(j) + 1) = -1.0;
        Ji(row++, lay.x_index(j) + 3) = -1.0;
      }
    } else {
      for (int j = 1; j <= N - 2; ++j) {
        const auto xs = seed_state(tr->state_at(z, j));
        Ji.block<1, 4>(row++, lay.x_index(j)) =
            H_d(xs, c.safety.p0, c.cert.pN, c.safety).d.transpose();
      }
      const int bNm1 = lay.x_index(N - 1);
      const int bN = lay.x_index(N);
      const auto xsNm1 = seed_state(tr->state_at(z, N - 1));
      const auto xsN = seed_state(tr->state_at(z, N));
      Ji.block<1, 4>(row++, bNm1) = h_d(xsNm1, c.cert.pN, c.safety).d.transpose();
      for (int j = 1; j <= N - 1; ++j) {
        Ji(row++, lay.x_index(j) + 1) = 1.0;
        Ji(row++, lay.x_index(j) + 3) = 1.0;
      }
      for (int j = 1; j <= N - 1; ++j) {
        Ji(row++, lay.x_index(j) + 1) = -1.0;
        Ji(row++, lay.x_index(j) + 3) = -1.0;
      }
      const Dual4 hN = h_d(xsN, c.cert.pN, c.safety);
      const Dual4 hNm1 = h_d(xsNm1, c.cert.pN, c.safety);
      Ji.block<1, 4>(row, bN) = hN.d.transpose();
      Ji.block<1, 4>(row, bNm1) = (-(1.0 - c.cert.gamma_d) * hNm1.d).transpose();
      ++row;
      Ji(row, bN + 1) = 1.0;
      Ji(row, bNm1 + 1) = -(1.0 - c.cert.gamma_v);
      ++row;
      Ji(row, bN + 3) = 1.0;
      Ji(row, bNm1 + 3) = -(1.0 - c.cert.gamma_v);
      ++row;
      Ji(row, bN + 1) = -1.0;
      Ji(row, bNm1 + 1) = (1.0 - c.cert.gamma_v);
      ++row;
      Ji(row, bN + 3) = -1.0;
      Ji(row, bNm1 + 3) = (1.0 - c.cert.gamma_v);
      ++row;
      Ji.block<1, 4>(row, bNm1) = delta_v(xsNm1, c.safety.m_lf).d.transpose();
      ++row;
    }
    return Ji;
  };

  constexpr double inf = std::numeric_limits<double>::infinity();
  p.lb = Eigen::VectorXd::Constant(lay.n, -inf);
  p.ub = Eigen::VectorXd::Constant(lay.n, inf);
  for (int j = 0; j < N; ++j) {
    const int b = lay.u_index(j);
    p.lb(b) = cfg.u_lo(0);
    p.ub(b) = cfg.u_hi(0);
    p.lb(b + 1) = cfg.u_lo(1);
    p.ub(b + 1) = cfg.u_hi(1);
  }
  return p;
}

}  // namespace

NlpProblem build_baseline(const OcpConfig& cfg, const StateD& x_k) {
  if (cfg.mode != OcpMode::baseline)
    throw std::invalid_argument("build_baseline: config mode must be baseline");
  return assemble(make_transcription(cfg, x_k));
}

NlpProblem build_certified(const OcpConfig& cfg, const StateD& x_k) {
  if (cfg.mode != OcpMode::certified)
    throw std::invalid_argument("build_certified: config mode must be certified");
  return assemble(make_transcription(cfg, x_k));
}

NlpProblem build_ocp(const OcpConfig& cfg, const StateD& x_k) {
  return assemble(make_transcription(cfg, x_k));
}

std::vector<std::string> constraint_labels(const OcpConfig& cfg) {
  std::vector<std::string> labels;
  const int N = cfg.N;
  if (cfg.mode == OcpMode::baseline) {
    for (int j = 1; j <= N; ++j) labels.push_back("h_d_p0[j=" + std::to_string(j) + "]");
    for (int j = 1; j <= N; ++j)
      for (int i = 1; i <= 2; ++i)
        labels.push_back("h_vmin[i=" + std::to_string(i) + ",j=" + std::to_string(j) + "]");
    for (int j = 1; j <= N; ++j)
      for (int i = 1; i <= 2; ++i)
        labels.push_back("h_vmax[i=" + std::to_string(i) + ",j=" + std::to_string(j) + "]");
  } else {
    for (int j = 1; j <= N - 2; ++j) labels.push_back("H_d[j=" + std::to_string(j) + "]");
    labels.push_back("h_d_pN[j=" + std::to_string(N - 1) + "]");
    for (int j = 1; j <= N - 1; ++j)
      for (int i = 1; i <= 2; ++i)
        labels.push_back("h_vmin[i=" + std::to_string(i) + ",j=" + std::to_string(j) + "]");
    for (int j = 1; j <= N - 1; ++j)
      for (int i = 1; i <= 2; ++i)
        labels.push_back("h_vmax[i=" + std::to_string(i) + ",j=" + std::to_string(j) + "]");
    labels.push_back("cert_h_d");
    labels.push_back("cert_h_vmin[i=1]");
    labels.push_back("cert_h_vmin[i=2]");
    labels.push_back("cert_h_vmax[i=1]");
    labels.push_back("cert_h_vmax[i=2]");
    labels.push_back("delta_v[j=" + std::to_string(N - 1) + "]");
  }
  return labels;
}

Eigen::VectorXd cold_start_guess(const OcpConfig& cfg, const StateD& x_k) {
  const OcpLayout lay = OcpLayout::make(cfg);
  const DiscreteDynamics dyn = zoh_discretize(cfg.Ts);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(lay.n);
  StateD x = x_k;
  for (int j = 1; j <= cfg.N; ++j) {
    x = step(x, InputD{0.0, 0.0}, dyn);
    z.segment<4>(lay.x_index(j)) = to_vector(x);
  }
  return z;
}

Eigen::VectorXd shift_warm_start(const OcpConfig& cfg, const Eigen::VectorXd& z_prev,
                                 const StateD& x_k) {
  const OcpLayout lay = OcpLayout::make(cfg);
  if (z_prev.size() != lay.n) return cold_start_guess(cfg, x_k);
  const DiscreteDynamics dyn = zoh_discretize(cfg.Ts);
  const int N = cfg.N;
  Eigen::VectorXd z(lay.n);
  for (int j = 0; j < N - 1; ++j) z.segment<2>(lay.u_index(j)) = z_prev.segment<2>(lay.u_index(j + 1));
  z.segment<2>(lay.u_index(N - 1)) = z_prev.segment<2>(lay.u_index(N - 1));
  for (int j = 1; j <= N - 1; ++j)
    z.segment<4>(lay.x_index(j)) = z_prev.segment<4>(lay.x_index(j + 1));
  const StateD x_last = state_from_vector(z_prev.segment<4>(lay.x_index(N)));
  const InputD u_last{z(lay.u_index(N - 1)), z(lay.u_index(N - 1) + 1)};
  z.segment<4>(lay.x_index(N)) = to_vector(step(x_last, u_last, dyn));
  return z;
}

MpcStepResult mpc_step(const OcpConfig& cfg, const StateD& x_k, const SolveResult* warm,
                       const SolverOptions& opts) {
  NlpProblem p = build_ocp(cfg, x_k);
  Eigen::VectorXd z0;
  const Eigen::VectorXd* wl = nullptr;
  const Eigen::VectorXd* wm = nullptr;
  if (warm != nullptr && warm->z.size() == p.n) {
    z0 = shift_warm_start(cfg, warm->z, x_k);
    wl = &warm->lambda_eq;
    wm = &warm->mu_ineq;
  } else {
    z0 = cold_start_guess(cfg, x_k);
  }
  MpcStepResult out;
  out.sol = solve_nlp(p, z0, opts, wl, wm);
  out.u0 = InputD{out.sol.z(0), out.sol.z(1)};
  return out;
}

}  // namespace cbfmpc
