#include <doctest.h>

#include <random>

#include "cbfmpc/safety.hpp"
#include "helpers.hpp"

using namespace cbfmpc;
using cbfmpc::test::fd_gradient;
using cbfmpc::test::scenario1_safety;

TEST_CASE("dual number arithmetic") {
  const Dual4 x = Dual4::seed(2.0, 0);
  const Dual4 y = Dual4::seed(3.0, 1);
  const Dual4 q = (x * y + 1.0) / (x - 0.5);
  // f = (xy+1)/(x-1/2); df/dx = y/(x-1/2) - (xy+1)/(x-1/2)^2
  CHECK(q.v == doctest::Approx(7.0 / 1.5));
  CHECK(q.d[0] == doctest::Approx(3.0 / 1.5 - 7.0 / 2.25));
  CHECK(q.d[1] == doctest::Approx(2.0 / 1.5));
  const Dual4 e = exp(0.5 * x);
  CHECK(e.v == doctest::Approx(std::exp(1.0)));
  CHECK(e.d[0] == doctest::Approx(0.5 * std::exp(1.0)));
}

TEST_CASE("gradient of h_vmin is the unit vector of v1") {
  const SafetyParams sp = scenario1_safety();
  const auto r = eval_with_gradient(SafetyFn::h_vmin, {{-100.0, 7.0}, {-90.0, 8.0}}, sp, sp.p0);
  CHECK(r.value == 7.0);
  CHECK(r.gradient(0) == 0.0);
  CHECK(r.gradient(1) == 1.0);
  CHECK(r.gradient(2) == 0.0);
  CHECK(r.gradient(3) == 0.0);
}

TEST_CASE("L_lf slope at equal positions is m_lf/4") {
  const SafetyParams sp = scenario1_safety();
  const auto r =
      eval_with_gradient(SafetyFn::logistic_Llf, {{-80.0, 10.0}, {-80.0, 11.0}}, sp, sp.p0);
  CHECK(r.value == 0.5);
  CHECK(r.gradient(2) == doctest::Approx(sp.m_lf / 4.0).epsilon(1e-12));
  CHECK(r.gradient(0) == doctest::Approx(-sp.m_lf / 4.0).epsilon(1e-12));
}

TEST_CASE("registered gradients match central finite differences") {
  const SafetyParams sp = scenario1_safety();
  const SafetyFn fns[] = {SafetyFn::h_vmin,      SafetyFn::h_vmax,   SafetyFn::logistic_Ld,
                          SafetyFn::logistic_Llf, SafetyFn::v_follower, SafetyFn::d_safe_smooth,
                          SafetyFn::h_d,         SafetyFn::Lbar_d,   SafetyFn::H_d,
                          SafetyFn::delta_v};
  std::mt19937_64 rng(2024);
  for (const SafetyFn fn : fns) {
    for (int i = 0; i < 100; ++i) {
      const StateD x = cbfmpc::test::random_state(rng, -110.0, -20.0, 0.5, 14.5);
      const auto r = eval_with_gradient(fn, x, sp, sp.pN);
      const Eigen::Vector4d fd = fd_gradient(
          [&](const StateD& q) { return eval_with_gradient(fn, q, sp, sp.pN).value; }, x);
      const double scale = std::max(1.0, r.gradient.lpNorm<Eigen::Infinity>());
      CHECK((r.gradient - fd).lpNorm<Eigen::Infinity>() / scale <= 1e-6);
    }
  }
}

TEST_CASE("unknown function id is rejected") {
  CHECK_THROWS_AS(safety_fn_from_string("not_a_function"), std::invalid_argument);
  CHECK(safety_fn_from_string("H_d") == SafetyFn::H_d);
  CHECK(safety_fn_from_string("delta_v") == SafetyFn::delta_v);
}
