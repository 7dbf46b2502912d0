#include <doctest.h>

#include <random>

#include "cbfmpc/dynamics.hpp"
#include "helpers.hpp"

using namespace cbfmpc;

TEST_CASE("zoh discretization closed form") {
  const DiscreteDynamics dyn = zoh_discretize(0.1);
  CHECK(dyn.A(0, 0) == 1.0);
  CHECK(dyn.A(0, 1) == 0.1);
  CHECK(dyn.A(1, 0) == 0.0);
  CHECK(dyn.A(1, 1) == 1.0);
  CHECK(dyn.B(0) == 0.5 * 0.1 * 0.1);  // bit-for-bit closed form
  CHECK(dyn.B(1) == 0.1);
  CHECK(dyn.B(0) == doctest::Approx(0.005).epsilon(1e-15));

  const DiscreteDynamics unit = zoh_discretize(1.0);
  CHECK(unit.A(0, 1) == 1.0);
  CHECK(unit.B(0) == 0.5);
  CHECK(unit.B(1) == 1.0);
}

TEST_CASE("zoh rejects non-positive sample time") {
  CHECK_THROWS_AS(zoh_discretize(0.0), std::invalid_argument);
  CHECK_THROWS_AS(zoh_discretize(-0.1), std::invalid_argument);
}

TEST_CASE("step examples") {
  const DiscreteDynamics dyn = zoh_discretize(0.1);

  const StateD rest{{0.0, 0.0}, {0.0, 0.0}};
  const StateD still = step(rest, InputD{0.0, 0.0}, dyn);
  CHECK(still.agent1.s == 0.0);
  CHECK(still.agent1.v == 0.0);
  CHECK(still.agent2.s == 0.0);

  const StateD gliding{{0.0, 10.0}, {0.0, 0.0}};
  const StateD glided = step(gliding, InputD{0.0, 0.0}, dyn);
  CHECK(glided.agent1.s == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(glided.agent1.v == 10.0);

  const StateD pushed = step(rest, InputD{2.0, 0.0}, dyn);
  CHECK(pushed.agent1.s == doctest::Approx(0.01).epsilon(1e-14));
  CHECK(pushed.agent1.v == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(pushed.agent2.s == 0.0);
}

TEST_CASE("double-integrator flow: two half steps equal one full step") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> dist(-20.0, 20.0);
  const DiscreteDynamics half = zoh_discretize(0.05);
  const DiscreteDynamics full = zoh_discretize(0.1);
  for (int i = 0; i < 50; ++i) {
    const StateD x{{dist(rng), dist(rng)}, {dist(rng), dist(rng)}};
    const InputD u{dist(rng) / 5.0, dist(rng) / 5.0};
    const StateD two = step(step(x, u, half), u, half);
    const StateD one = step(x, u, full);
    CHECK(two.agent1.s == doctest::Approx(one.agent1.s).epsilon(1e-13));
    CHECK(two.agent1.v == doctest::Approx(one.agent1.v).epsilon(1e-13));
    CHECK(two.agent2.s == doctest::Approx(one.agent2.s).epsilon(1e-13));
    CHECK(two.agent2.v == doctest::Approx(one.agent2.v).epsilon(1e-13));
  }
}

TEST_CASE("superposition of the linear update") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  const DiscreteDynamics dyn = zoh_discretize(0.1);
  for (int i = 0; i < 25; ++i) {
    const Eigen::Vector4d xa{dist(rng), dist(rng), dist(rng), dist(rng)};
    const Eigen::Vector4d xb{dist(rng), dist(rng), dist(rng), dist(rng)};
    const Eigen::Vector2d ua{dist(rng), dist(rng)};
    const Eigen::Vector2d ub{dist(rng), dist(rng)};
    const double al = dist(rng) / 10.0;
    const double be = dist(rng) / 10.0;
    const Eigen::Vector4d mixed = to_vector(step(
        state_from_vector(al * xa + be * xb),
        InputD{al * ua(0) + be * ub(0), al * ua(1) + be * ub(1)}, dyn));
    const Eigen::Vector4d split =
        al * to_vector(step(state_from_vector(xa), InputD{ua(0), ua(1)}, dyn)) +
        be * to_vector(step(state_from_vector(xb), InputD{ub(0), ub(1)}, dyn));
    for (int k = 0; k < 4; ++k) CHECK(mixed(k) == doctest::Approx(split(k)).epsilon(1e-12));
  }
}
