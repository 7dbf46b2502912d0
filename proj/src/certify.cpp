#include "cbfmpc/certify.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace cbfmpc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFeasTol = 1e-8;  ///< slack when validating counterexample feasibility

struct BoxState {
  Interval s1, v1, s2, v2;
  Interval delta;  ///< s1 - s2, carried so certificate differences stay correlated
};

BoxState box_state(const Box& b) {
  BoxState s;
  s.s1 = b[0];
  s.v1 = b[1];
  s.s2 = b[2];
  s.v2 = b[3];
  s.delta = b[0] - b[2];
  return s;
}

/// Required distance L_d(s1; p) * (d0 + t_h v_f). The leader/follower blend
/// uses the tracked gap: s2 - s1 = -delta.
Interval required_distance(const BoxState& s, const SafetyParams& sp, const ActivationParams& p) {
  const Interval Ld = logistic(p.m_d * (s.s1 - p.c_d));
  const Interval Llf = logistic((-sp.m_lf) * s.delta);
  const Interval vf = s.v2 + Llf * (s.v1 - s.v2);
  return Ld * (sp.d0 + sp.t_h * vf);
}

Interval delta_v_bounds(const BoxState& s, const SafetyParams& sp) {
  const Interval Llf = logistic((-sp.m_lf) * s.delta);
  return (2.0 * Llf - 1.0) * (s.v2 - s.v1);
}

struct SteppedBox {
  BoxState next;
  Interval increment;  ///< delta' - delta
};

/// kappa policy + one exact ZOH step on intervals. Velocity ranges are
/// tightened with the admissible-interval bound v' in
/// [(1-gamma_v) v, vbar - (1-gamma_v)(vbar - v)], valid when the pre-step
/// velocities lie in [0, vbar] (the clamp interval is then nonempty).
SteppedBox kappa_step_bounds(const BoxState& s, const VerifierParams& vp) {
  const double Ts = vp.Ts;
  const double q = 0.5 * Ts * Ts;
  const double k = vp.cert.gamma_v / Ts;
  const double vbar = vp.safety.v_max;
  const double gv = vp.cert.gamma_v;

  const Interval L = logistic((-vp.safety.m_lf) * s.delta);
  const Interval dec1 = max(Interval(vp.u_min), (-k) * s.v1);
  const Interval acc1 = min(Interval(vp.u_max), k * (vbar - s.v1));
  Interval a1 = acc1 + L * (dec1 - acc1);
  a1 = intersect(a1, Interval(std::min(dec1.lo, acc1.lo), std::max(dec1.hi, acc1.hi)));
  const Interval dec2 = max(Interval(vp.u_min), (-k) * s.v2);
  const Interval acc2 = min(Interval(vp.u_max), k * (vbar - s.v2));
  Interval a2 = dec2 + L * (acc2 - dec2);
  a2 = intersect(a2, Interval(std::min(dec2.lo, acc2.lo), std::max(dec2.hi, acc2.hi)));

  SteppedBox out;
  out.next.s1 = s.s1 + Ts * s.v1 + q * a1;
  out.next.s2 = s.s2 + Ts * s.v2 + q * a2;
  out.next.v1 = s.v1 + Ts * a1;
  out.next.v2 = s.v2 + Ts * a2;
  if (s.v1.lo >= 0.0 && s.v1.hi <= vbar)
    out.next.v1 = intersect(out.next.v1,
                            Interval((1.0 - gv) * s.v1.lo, vbar - (1.0 - gv) * (vbar - s.v1.hi)));
  if (s.v2.lo >= 0.0 && s.v2.hi <= vbar)
    out.next.v2 = intersect(out.next.v2,
                            Interval((1.0 - gv) * s.v2.lo, vbar - (1.0 - gv) * (vbar - s.v2.hi)));
  out.increment = Ts * (s.v1 - s.v2) + q * (a1 - a2);
  out.next.delta = s.delta + out.increment;
  return out;
}

/// Factored certificate difference gamma d^2 + 2 d c + c^2 - T'^2 + (1-gamma) T^2,
/// algebraically equal to h_d(x') - (1-gamma) h_d(x) but far tighter on boxes
/// because the quadratic gap terms share the tracked delta.
Interval certificate_bounds(const Interval& delta, const Interval& increment, const Interval& T0,
                            const Interval& T1, double gamma) {
  return gamma * sqr(delta) + 2.0 * (delta * increment) + sqr(increment) - sqr(T1) +
         (1.0 - gamma) * sqr(T0);
}

}  // namespace

int effective_jobs(int requested) {
  if (const char* env = std::getenv("CBF_MPC_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

TwoStepGap two_step_gap(const StateD& x, const VerifierParams& vp) {
  const DiscreteDynamics dyn = zoh_discretize(vp.Ts);
  const InputD u0 = kappa(x, vp);
  const StateD x1 = step(x, u0, dyn);
  const InputD u1 = kappa(x1, vp);
  const StateD x2 = step(x1, u1, dyn);
  const double h0 = h_d(x, vp.cert.pN, vp.safety);
  const double h1 = h_d(x1, vp.cert.pN, vp.safety);
  const double h2 = h_d(x2, vp.cert.pN, vp.safety);
  TwoStepGap g;
  g.gap17a = h2 - (1.0 - vp.cert.gamma_d) * h1;
  g.res17b = h1 - (1.0 - vp.cert.gamma_d) * h0;
  g.res17c = h0;
  g.res17d = delta_v(x, vp.safety.m_lf) - vp.cert.dv_min;
  return g;
}

TwoStepGapBounds two_step_gap_bounds(const Box& domain, const VerifierParams& vp) {
  const double gd = vp.cert.gamma_d;
  const BoxState x0 = box_state(domain);
  const Interval T0 = required_distance(x0, vp.safety, vp.cert.pN);

  TwoStepGapBounds out;
  out.res17c = sqr(x0.delta) - sqr(T0);
  out.res17d = delta_v_bounds(x0, vp.safety) - vp.cert.dv_min;

  const SteppedBox st1 = kappa_step_bounds(x0, vp);
  const Interval T1 = required_distance(st1.next, vp.safety, vp.cert.pN);
  out.res17b = certificate_bounds(x0.delta, st1.increment, T0, T1, gd);

  const SteppedBox st2 = kappa_step_bounds(st1.next, vp);
  const Interval T2 = required_distance(st2.next, vp.safety, vp.cert.pN);
  out.gap17a = certificate_bounds(st1.next.delta, st2.increment, T1, T2, gd);
  return out;
}

double dtcbf_cert_value(const StateD& x, const InputD& u, const VerifierParams& vp) {
  const DiscreteDynamics dyn = zoh_discretize(vp.Ts);
  const StateD x1 = step(x, u, dyn);
  return h_d(x1, vp.cert.pN, vp.safety) - (1.0 - vp.cert.gamma_d) * h_d(x, vp.cert.pN, vp.safety);
}

namespace {

Interval dtcbf_cert_bounds_iv(const Box& domain, const Interval& a1, const Interval& a2,
                              const VerifierParams& vp) {
  const double Ts = vp.Ts;
  const double q = 0.5 * Ts * Ts;
  const BoxState s = box_state(domain);
  const Interval T0 = required_distance(s, vp.safety, vp.cert.pN);
  BoxState n;
  n.s1 = s.s1 + Ts * s.v1 + q * a1;
  n.s2 = s.s2 + Ts * s.v2 + q * a2;
  n.v1 = s.v1 + Ts * a1;
  n.v2 = s.v2 + Ts * a2;
  const Interval inc = Ts * (s.v1 - s.v2) + q * (a1 - a2);
  n.delta = s.delta + inc;
  const Interval T1 = required_distance(n, vp.safety, vp.cert.pN);
  return certificate_bounds(s.delta, inc, T0, T1, vp.cert.gamma_d);
}

}  // namespace

Interval dtcbf_cert_bounds(const Box& domain, const InputD& u, const VerifierParams& vp) {
  return dtcbf_cert_bounds_iv(domain, Interval(u.a1), Interval(u.a2), vp);
}

double dtcbf_best_response_upper_bound(const StateD& x, const VerifierParams& vp, double tol) {
  // Maximize the one-step certificate over the input box by bisection on u;
  // the returned value is a certified upper bound of the maximum.
  struct UBox {
    Interval a1, a2;
  };
  Box xbox;
  xbox[0] = Interval(x.agent1.s);
  xbox[1] = Interval(x.agent1.v);
  xbox[2] = Interval(x.agent2.s);
  xbox[3] = Interval(x.agent2.v);

  std::vector<UBox> stack{{Interval(vp.u_min, vp.u_max), Interval(vp.u_min, vp.u_max)}};
  double best_point = -kInf;
  double upper = -kInf;
  int nodes = 0;
  std::vector<UBox> undecided;
  while (!stack.empty() && ++nodes < 20000) {
    const UBox ub = stack.back();
    stack.pop_back();
    const Interval bound =
        dtcbf_cert_bounds_iv(xbox, ub.a1, ub.a2, vp);
    const InputD umid{ub.a1.mid(), ub.a2.mid()};
    best_point = std::max(best_point, dtcbf_cert_value(x, umid, vp));
    if (bound.hi <= best_point + tol) {
      upper = std::max(upper, bound.hi);
      continue;
    }
    if (ub.a1.width() < 1e-9 && ub.a2.width() < 1e-9) {
      upper = std::max(upper, bound.hi);
      continue;
    }
    UBox left = ub, right = ub;
    if (ub.a1.width() >= ub.a2.width()) {
      left.a1 = Interval(ub.a1.lo, ub.a1.mid());
      right.a1 = Interval(ub.a1.mid(), ub.a1.hi);
    } else {
      left.a2 = Interval(ub.a2.lo, ub.a2.mid());
      right.a2 = Interval(ub.a2.mid(), ub.a2.hi);
    }
    stack.push_back(left);
    stack.push_back(right);
  }
  for (const UBox& ub : stack) {
    const Interval bound = dtcbf_cert_bounds_iv(xbox, ub.a1, ub.a2, vp);
    upper = std::max(upper, bound.hi);
  }
  return std::max(upper, best_point);
}

namespace {

enum class BoxOutcome { infeasible, certified, undecided };

struct BoxEval {
  BoxOutcome outcome{BoxOutcome::undecided};
  double lb{-kInf};
};

struct Falsification {
  StateD x;
  double gap{0.0};
};

/// Shared branch-and-bound over the state box. The Problem policy supplies
/// per-box screening and pointwise falsification.
template <typename Problem>
VerificationReport branch_and_bound(const Problem& prob, const Box& domain,
                                    const VerifyOptions& opts, CertMode mode) {
  const auto t_start = std::chrono::steady_clock::now();
  VerificationReport rep;
  rep.mode = mode;
  rep.domain = domain;

  struct Shared {
    std::mutex m;
    std::vector<Box> stack;
    long in_flight{0};
    long nodes{0};
    double min_lb{kInf};
    bool any_certified{false};
    bool falsified{false};
    Falsification cex;
    bool budget_exceeded{false};
  } sh;

  // Deterministic coarse falsification sweep before any splitting.
  {
    constexpr int kGrid = 7;
    for (int i0 = 0; i0 < kGrid && !sh.falsified; ++i0)
      for (int i1 = 0; i1 < kGrid && !sh.falsified; ++i1)
        for (int i2 = 0; i2 < kGrid && !sh.falsified; ++i2)
          for (int i3 = 0; i3 < kGrid && !sh.falsified; ++i3) {
            StateD x{{domain[0].lo + domain[0].width() * i0 / (kGrid - 1),
                      domain[1].lo + domain[1].width() * i1 / (kGrid - 1)},
                     {domain[2].lo + domain[2].width() * i2 / (kGrid - 1),
                      domain[3].lo + domain[3].width() * i3 / (kGrid - 1)}};
            Falsification f;
            if (prob.falsifies(x, &f)) {
              sh.falsified = true;
              sh.cex = f;
            }
          }
  }

  if (!sh.falsified) {
    sh.stack.push_back(domain);
    const int jobs = effective_jobs(opts.jobs);
    auto worker = [&]() {
      std::vector<Box> batch, children;
      long local_nodes = 0;
      double local_min_lb = kInf;
      bool local_any_cert = false;
      bool owe_batch = false;
      while (true) {
        batch.clear();
        {
          std::lock_guard<std::mutex> lk(sh.m);
          sh.nodes += local_nodes;
          if (sh.nodes > opts.budget) sh.budget_exceeded = true;
          local_nodes = 0;
          sh.min_lb = std::min(sh.min_lb, local_min_lb);
          sh.any_certified = sh.any_certified || local_any_cert;
          local_min_lb = kInf;
          local_any_cert = false;
          for (const Box& c : children) sh.stack.push_back(c);
          children.clear();
          if (owe_batch) {
            sh.in_flight -= 1;
            owe_batch = false;
          }
          if (sh.falsified || sh.budget_exceeded) return;
          if (sh.stack.empty()) {
            if (sh.in_flight == 0) return;
          } else {
            const int take = static_cast<int>(std::min<std::size_t>(16, sh.stack.size()));
            for (int i = 0; i < take; ++i) {
              batch.push_back(sh.stack.back());
              sh.stack.pop_back();
            }
            sh.in_flight += 1;
            owe_batch = true;
          }
        }
        if (batch.empty()) {
          std::this_thread::yield();
          continue;
        }
        for (std::size_t bi = 0; bi < batch.size(); ++bi) {
          const Box& box = batch[bi];
          ++local_nodes;
          const BoxEval ev = prob.evaluate(box);
          if (ev.outcome == BoxOutcome::infeasible) continue;
          if (ev.outcome == BoxOutcome::certified) {
            local_min_lb = std::min(local_min_lb, ev.lb);
            local_any_cert = true;
            continue;
          }
          Falsification f;
          if (prob.falsifies_in(box, local_nodes, &f)) {
            std::lock_guard<std::mutex> lk(sh.m);
            if (!sh.falsified) {
              sh.falsified = true;
              sh.cex = f;
            }
            break;
          }
          const int dim = box.widest_scaled_dim(opts.split_scale);
          const double mid = box[dim].mid();
          Box left = box, right = box;
          left[dim] = Interval(box[dim].lo, mid);
          right[dim] = Interval(mid, box[dim].hi);
          children.push_back(left);
          children.push_back(right);
        }
      }
    };

    if (jobs <= 1) {
      sh.in_flight = 0;
      worker();
    } else {
      std::vector<std::thread> threads;
      threads.reserve(static_cast<std::size_t>(jobs));
      for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
      for (auto& t : threads) t.join();
    }
  }

  rep.nodes_explored = sh.nodes;
  if (sh.falsified) {
    rep.verdict = Verdict::falsified;
    rep.counterexample = sh.cex.x;
    rep.counterexample_gap = sh.cex.gap;
  } else if (sh.budget_exceeded) {
    rep.verdict = Verdict::inconclusive;
    rep.certified_lower_bound = sh.min_lb;
  } else {
    rep.verdict = Verdict::certified;
    rep.certified_lower_bound = sh.any_certified ? sh.min_lb : kInf;
    rep.vacuous = !sh.any_certified;
  }
  rep.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return rep;
}

/// Pattern search minimizing gap subject to a feasibility penalty; returns a
/// candidate, validity is re-checked by the caller.
template <typename Value>
StateD pattern_search(const Box& box, const Value& value, int max_evals) {
  StateD x{{box[0].mid(), box[1].mid()}, {box[2].mid(), box[3].mid()}};
  std::array<double, 4> step{box[0].width() * 0.25, box[1].width() * 0.25, box[2].width() * 0.25,
                             box[3].width() * 0.25};
  double best = value(x);
  int evals = 0;
  while (evals < max_evals) {
    bool improved = false;
    for (int d = 0; d < 4; ++d) {
      for (double sgn : {1.0, -1.0}) {
        StateD cand = x;
        double* comp = d == 0   ? &cand.agent1.s
                       : d == 1 ? &cand.agent1.v
                       : d == 2 ? &cand.agent2.s
                                : &cand.agent2.v;
        *comp = std::clamp(*comp + sgn * step[static_cast<std::size_t>(d)], box[d].lo, box[d].hi);
        const double v = value(cand);
        ++evals;
        if (v < best) {
          best = v;
          x = cand;
          improved = true;
        }
      }
    }
    if (!improved) {
      bool all_small = true;
      for (int d = 0; d < 4; ++d) {
        step[static_cast<std::size_t>(d)] *= 0.5;
        if (step[static_cast<std::size_t>(d)] > 1e-9 * (1.0 + box[d].width())) all_small = false;
      }
      if (all_small) break;
    }
  }
  return x;
}

struct QdtcbfProblem {
  VerifierParams vp;
  double tol;

  BoxEval evaluate(const Box& box) const {
    const TwoStepGapBounds b = two_step_gap_bounds(box, vp);
    if (b.res17c.hi < 0.0 || b.res17b.hi < 0.0 || b.res17d.hi < 0.0)
      return {BoxOutcome::infeasible, 0.0};
    if (b.gap17a.lo >= 0.0) return {BoxOutcome::certified, b.gap17a.lo};
    return {BoxOutcome::undecided, b.gap17a.lo};
  }

  bool falsifies(const StateD& x, Falsification* out) const {
    const TwoStepGap g = two_step_gap(x, vp);
    if (g.res17b >= -kFeasTol && g.res17c >= -kFeasTol && g.res17d >= -kFeasTol &&
        g.gap17a < -tol) {
      out->x = x;
      out->gap = g.gap17a;
      return true;
    }
    return false;
  }

  bool falsifies_in(const Box& box, long node_count, Falsification* out) const {
    const StateD mid{{box[0].mid(), box[1].mid()}, {box[2].mid(), box[3].mid()}};
    if (falsifies(mid, out)) return true;
    if (node_count % 128 != 0) return false;
    const auto value = [this](const StateD& x) {
      const TwoStepGap g = two_step_gap(x, vp);
      const double viol = std::max(0.0, -g.res17b) + std::max(0.0, -g.res17c) +
                          std::max(0.0, -g.res17d);
      return g.gap17a + 1e4 * viol;
    };
    const StateD cand = pattern_search(box, value, 120);
    return falsifies(cand, out);
  }
};

struct DtcbfProblem {
  VerifierParams vp;
  double tol;

  std::array<InputD, 4> corners() const {
    return {InputD{vp.u_min, vp.u_min}, InputD{vp.u_min, vp.u_max}, InputD{vp.u_max, vp.u_min},
            InputD{vp.u_max, vp.u_max}};
  }

  BoxEval evaluate(const Box& box) const {
    const BoxState s = box_state(box);
    const Interval T0 = required_distance(s, vp.safety, vp.cert.pN);
    const Interval hd = sqr(s.delta) - sqr(T0);
    const Interval dv = delta_v_bounds(s, vp.safety) - vp.cert.dv_min;
    if (hd.hi < 0.0 || dv.hi < 0.0) return {BoxOutcome::infeasible, 0.0};

    const StateD mid{{box[0].mid(), box[1].mid()}, {box[2].mid(), box[3].mid()}};
    double best_lb = -kInf;
    const InputD umid = kappa(mid, vp);
    best_lb = std::max(best_lb, dtcbf_cert_bounds(box, umid, vp).lo);
    if (best_lb >= 0.0) return {BoxOutcome::certified, best_lb};
    for (const InputD& u : corners()) {
      best_lb = std::max(best_lb, dtcbf_cert_bounds(box, u, vp).lo);
      if (best_lb >= 0.0) return {BoxOutcome::certified, best_lb};
    }
    return {BoxOutcome::undecided, best_lb};
  }

  bool feasible_point(const StateD& x) const {
    return h_d(x, vp.cert.pN, vp.safety) >= -kFeasTol &&
           (delta_v(x, vp.safety.m_lf) - vp.cert.dv_min) >= -kFeasTol;
  }

  bool falsifies(const StateD& x, Falsification* out) const {
    if (!feasible_point(x)) return false;
    // Cheap necessary screen before the rigorous best-response bound.
    double best = dtcbf_cert_value(x, kappa(x, vp), vp);
    for (const InputD& u : corners()) best = std::max(best, dtcbf_cert_value(x, u, vp));
    if (best >= -tol) return false;
    const double ub = dtcbf_best_response_upper_bound(x, vp, 0.5 * tol);
    if (ub < -tol) {
      out->x = x;
      out->gap = ub;
      return true;
    }
    return false;
  }

  bool falsifies_in(const Box& box, long node_count, Falsification* out) const {
    const StateD mid{{box[0].mid(), box[1].mid()}, {box[2].mid(), box[3].mid()}};
    if (falsifies(mid, out)) return true;
    if (node_count % 128 != 0) return false;
    const auto value = [this](const StateD& x) {
      double best = dtcbf_cert_value(x, kappa(x, vp), vp);
      for (const InputD& u : corners()) best = std::max(best, dtcbf_cert_value(x, u, vp));
      const double viol = std::max(0.0, -h_d(x, vp.cert.pN, vp.safety)) +
                          std::max(0.0, -(delta_v(x, vp.safety.m_lf) - vp.cert.dv_min));
      return best + 1e4 * viol;
    };
    const StateD cand = pattern_search(box, value, 120);
    return falsifies(cand, out);
  }
};

const char* kQuantifierNote =
    "two-step condition checked with the fixed policy kappa at both steps (verification-problem "
    "form); the definition's existential input quantifier is under-approximated by kappa";

}  // namespace

VerificationReport verify_qdtcbf(const VerifierParams& vp, const Box& domain,
                                 const VerifyOptions& opts) {
  QdtcbfProblem prob{vp, opts.tol};
  VerificationReport rep = branch_and_bound(prob, domain, opts, CertMode::qdtcbf);
  rep.notes = kQuantifierNote;
  return rep;
}

VerificationReport verify_dtcbf(const VerifierParams& vp, const Box& domain,
                                const VerifyOptions& opts) {
  DtcbfProblem prob{vp, opts.tol};
  VerificationReport rep = branch_and_bound(prob, domain, opts, CertMode::dtcbf);
  rep.notes =
      "one-step condition; the existential input is under-approximated by kappa(mid) and the "
      "input-box corners, counterexamples are validated against a certified best-response bound";
  return rep;
}

Box default_verification_domain(const VerifierParams& vp, double s_lo, double s_hi) {
  Box b;
  b[0] = Interval(s_lo, s_hi);
  b[1] = Interval(0.0, vp.safety.v_max);
  b[2] = Interval(s_lo, s_hi);
  b[3] = Interval(0.0, vp.safety.v_max);
  return b;
}

double least_input_bound(CertMode mode, double gamma_d, VerifierParams base, const Box& domain,
                         double lo, double hi, double bisect_tol, const VerifyOptions& opts) {
  if (!(lo > 0.0) || !(hi > lo)) throw std::invalid_argument("least_input_bound: need 0 < lo < hi");
  base.cert.gamma_d = gamma_d;
  std::vector<StateD> counterexamples;

  const auto certified_at = [&](double bound) {
    base.u_min = -bound;
    base.u_max = bound;
    // Stored counterexamples from weaker bounds often transfer; check first.
    for (const StateD& x : counterexamples) {
      if (mode == CertMode::qdtcbf) {
        QdtcbfProblem prob{base, opts.tol};
        Falsification f;
        if (prob.falsifies(x, &f)) return false;
      } else {
        DtcbfProblem prob{base, opts.tol};
        Falsification f;
        if (prob.falsifies(x, &f)) return false;
      }
    }
    const VerificationReport rep = (mode == CertMode::qdtcbf) ? verify_qdtcbf(base, domain, opts)
                                                              : verify_dtcbf(base, domain, opts);
    if (rep.verdict == Verdict::falsified && rep.counterexample)
      counterexamples.push_back(*rep.counterexample);
    return rep.verdict == Verdict::certified;
  };

  while (hi - lo > bisect_tol) {
    const double mid = 0.5 * (lo + hi);
    if (certified_at(mid))
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace cbfmpc
