#pragma once

#include <optional>
#include <string>

#include "cbfmpc/dynamics.hpp"
#include "cbfmpc/interval.hpp"
#include "cbfmpc/ocp.hpp"
#include "cbfmpc/safety.hpp"

namespace cbfmpc {

/// Everything the verification problems depend on. The input box is the same
/// for both agents and symmetric bounds are the common case (u_min = -u_max).
struct VerifierParams {
  SafetyParams safety;
  CertificateParams cert;
  double Ts{0.1};
  double u_min{-3.0};
  double u_max{3.0};
};

namespace detail {
inline double vmin(double a, double b) { return a < b ? a : b; }
inline double vmax(double a, double b) { return a > b ? a : b; }
inline Interval vmin(const Interval& a, const Interval& b) { return min(a, b); }
inline Interval vmax(const Interval& a, const Interval& b) { return max(a, b); }
}  // namespace detail

/// Feedback policy: the leading agent accelerates and the following agent
/// decelerates as hard as the input box and the velocity-certificate
/// admissible interval allow, blended by the leader/follower activation.
template <typename T>
ControlInput<T> kappa(const LumpedState<T>& x, const VerifierParams& vp) {
  using detail::vmax;
  using detail::vmin;
  const double k = vp.cert.gamma_v / vp.Ts;
  const T L = logistic_Llf(x, vp.safety.m_lf);
  const T dec1 = vmax(T(vp.u_min), (-k) * x.agent1.v);
  const T acc1 = vmin(T(vp.u_max), k * (vp.safety.v_max - x.agent1.v));
  const T dec2 = vmax(T(vp.u_min), (-k) * x.agent2.v);
  const T acc2 = vmin(T(vp.u_max), k * (vp.safety.v_max - x.agent2.v));
  ControlInput<T> u;
  u.a1 = acc1 + L * (dec1 - acc1);  // leader 2 => follower 1 decelerates
  u.a2 = dec2 + L * (acc2 - dec2);  // leader 2 accelerates
  return u;
}

/// Two-step verification quantities at a point, with u = kappa at both steps:
///   gap17a = h_d(x_{k+2}) - (1-gamma_d) h_d(x_{k+1})
///   res17b = h_d(x_{k+1}) - (1-gamma_d) h_d(x_k)   (one-step certificate)
///   res17c = h_d(x_k)
///   res17d = delta_v(x_k) - dv_min
struct TwoStepGap {
  double gap17a{0.0};
  double res17b{0.0};
  double res17c{0.0};
  double res17d{0.0};
};

TwoStepGap two_step_gap(const StateD& x, const VerifierParams& vp);

/// Interval bounds of the same quantities over a state box (factored forms;
/// sound outer enclosures of the pointwise values).
struct TwoStepGapBounds {
  Interval gap17a;
  Interval res17b;
  Interval res17c;
  Interval res17d;
};

TwoStepGapBounds two_step_gap_bounds(const Box& domain, const VerifierParams& vp);

/// One-step DTCBF certificate value h_d(f(x,u)) - (1-gamma_d) h_d(x) at a
/// point and its interval bound over a box with the input frozen.
double dtcbf_cert_value(const StateD& x, const InputD& u, const VerifierParams& vp);
Interval dtcbf_cert_bounds(const Box& domain, const InputD& u, const VerifierParams& vp);

/// Certified upper bound of max_{u in U} dtcbf_cert_value(x, u) at a fixed x,
/// used to validate DTCBF counterexamples rigorously.
double dtcbf_best_response_upper_bound(const StateD& x, const VerifierParams& vp, double tol);

enum class Verdict { certified, falsified, inconclusive };
enum class CertMode { dtcbf, qdtcbf };

struct VerifyOptions {
  double tol{1e-6};
  long budget{5'000'000};
  int jobs{0};  ///< 0: CBF_MPC_THREADS env or hardware concurrency
  std::array<double, 4> split_scale{1.0, 10.0, 1.0, 10.0};  ///< velocity dims weighted 10 m per m/s
};

struct VerificationReport {
  Verdict verdict{Verdict::inconclusive};
  CertMode mode{CertMode::qdtcbf};
  std::optional<StateD> counterexample;
  double counterexample_gap{0.0};
  double certified_lower_bound{std::numeric_limits<double>::infinity()};
  long nodes_explored{0};
  double wall_time_s{0.0};
  Box domain;
  bool vacuous{false};  ///< no point of the domain satisfies the side constraints
  std::string notes;
};

/// Global check of the two-step condition (quasi-DTCBF) over a compact box:
/// certified   => every x in the domain satisfying res17b/c/d >= 0 has gap17a >= 0;
/// falsified   => a concrete counterexample with gap < -tol is returned;
/// inconclusive => the node budget ran out before a verdict.
VerificationReport verify_qdtcbf(const VerifierParams& vp, const Box& domain,
                                 const VerifyOptions& opts = {});

/// Global check of the one-step DTCBF condition with the existential input
/// under-approximated by a fixed candidate set (sound for certification).
VerificationReport verify_dtcbf(const VerifierParams& vp, const Box& domain,
                                const VerifyOptions& opts = {});

/// Default verification domain (positions in meters, velocities in [0, v_max]).
Box default_verification_domain(const VerifierParams& vp, double s_lo = -250.0, double s_hi = 60.0);

/// Worker count: the CBF_MPC_THREADS environment variable overrides the
/// requested value; zero requests fall back to the hardware concurrency.
int effective_jobs(int requested);

/// Least symmetric input bound b = |u_min| = |u_max| for which verification
/// succeeds, found by bisection on the verification verdict; inconclusive
/// verdicts count as not certified. Returns the midpoint of the final bracket.
double least_input_bound(CertMode mode, double gamma_d, VerifierParams base, const Box& domain,
                         double lo, double hi, double bisect_tol, const VerifyOptions& opts = {});

}  // namespace cbfmpc
