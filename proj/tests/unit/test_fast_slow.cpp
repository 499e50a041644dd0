#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "mmlimit/analysis.hpp"
#include "mmlimit/fast_slow.hpp"
#include "mmlimit/spatial_ops.hpp"

using namespace mmlimit;

namespace {

StateField random_state(std::mt19937_64& rng, std::size_t n, double hi = 3.0) {
  std::uniform_real_distribution<double> u(0.0, hi);
  StateField s(n);
  for (auto& f : s.u)
    for (double& x : f) x = u(rng);
  return s;
}

StateField constant_state(std::size_t n, double a, double b, double c, double d) {
  return StateField(Field(n, a), Field(n, b), Field(n, c), Field(n, d));
}

double max_diff(const Field& a, const Field& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("diffusion step basics") {
  const Grid g = Grid::interval(50);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Field f(50);
  for (double& x : f) x = u(rng);
  CHECK(diffusion_step(f, 0.0, 0.1, g) == f);
  for (double x : diffusion_step(Field(50, 1.7), 2.0, 0.1, g)) CHECK(x == doctest::Approx(1.7).epsilon(1e-14));

  for (auto method : {DiffusionMethod::ImplicitEuler, DiffusionMethod::CrankNicolson}) {
    const Field out = diffusion_step(f, 1.0, 1e-4, g, method);
    CHECK(integrate(out, g) == doctest::Approx(integrate(f, g)).epsilon(1e-14));
    for (double x : out) CHECK(x >= 0.0);
  }
  CHECK_THROWS_AS(diffusion_step(f, -1.0, 0.1, g), Error);
  CHECK_THROWS_AS(diffusion_step(f, 1.0, 1.0, g, DiffusionMethod::CrankNicolson), Error);
}

TEST_CASE("cosine is an eigenvector of the implicit step") {
  const int n = 40;
  const Grid g = Grid::interval(n);
  const double d = 0.7, dt = 0.05, h = g.h();
  Field f(n);
  for (int i = 0; i < n; ++i) f[i] = std::cos(std::numbers::pi * g.center(i));
  const double lambda = 2.0 / (h * h) * (1.0 - std::cos(std::numbers::pi * h));
  const double factor = 1.0 / (1.0 + dt * d * lambda);
  const Field out = diffusion_step(f, d, dt, g);
  for (int i = 0; i < n; ++i) CHECK(out[i] == doctest::Approx(factor * f[i]).epsilon(1e-12));
}

TEST_CASE("2D diffusion keeps mass and sign") {
  const Grid g = Grid::square(16);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Field f(g.cells(), 0.0);
  for (std::size_t i = 0; i < f.size(); i += 7) f[i] = u(rng);
  const Field out = diffusion_step(f, 1.0, 0.01, g);
  CHECK(integrate(out, g) == doctest::Approx(integrate(f, g)).epsilon(1e-12));
  for (double x : out) CHECK(x >= 0.0);
}

TEST_CASE("fast reaction step") {
  const KineticParams kin{1.0, 1.0, 1.0, 0.0};  // A3 = 2
  SUBCASE("relaxes to the closed-form equilibrium") {
    // A2 = k1 u1 = 1, A3 = 2.
    StateField s = constant_state(3, 1.0, 3.0, 0.0, 0.0);
    const StateField out = fast_reaction_step(s, kin, 1e-12, 1.0);
    for (int i = 0; i < 3; ++i) {
      CHECK(out[1][i] == doctest::Approx(2.0).epsilon(1e-15));
      CHECK(out[2][i] == doctest::Approx(1.0).epsilon(1e-15));
      CHECK(out[0][i] == 1.0);
      CHECK(out[3][i] == 0.0);
    }
  }
  SUBCASE("states on the manifold do not move") {
    StateField s = constant_state(3, 1.0, 2.0, 1.0, 0.0);
    const StateField out = fast_reaction_step(s, kin, 0.01, 0.3);
    CHECK(out[1] == s[1]);
    CHECK(out[2] == s[2]);
  }
  SUBCASE("pair sum conserved, nonnegative") {
    std::mt19937_64 rng(4);
    const KineticParams rev{1.3, 0.4, 2.1, 0.5};
    for (int rep = 0; rep < 100; ++rep) {
      const StateField s = random_state(rng, 20);
      const StateField out = fast_reaction_step(s, rev, std::pow(10.0, -(rep % 8)), 0.01);
      for (int i = 0; i < 20; ++i) {
        CHECK(out[1][i] + out[2][i] == doctest::Approx(s[1][i] + s[2][i]).epsilon(1e-15));
        CHECK(out[1][i] >= 0.0);
        CHECK(out[2][i] >= 0.0);
      }
    }
  }
  SUBCASE("decay of the residual matches the exponential") {
    StateField s = constant_state(1, 1.0, 3.0, 0.0, 0.0);
    const double eps = 0.1, dt = 0.02;
    const StateField out = fast_reaction_step(s, kin, eps, dt);
    const double m0 = manifold_residual(s, kin)[0];
    const double m1 = manifold_residual(out, kin)[0];
    CHECK(m1 == doctest::Approx(m0 * std::exp(-3.0 * dt / eps)).epsilon(1e-13));
  }
}

TEST_CASE("slow reaction step") {
  const KineticParams kin{1.0, 1.0, 1.0, 0.0};
  for (auto method : {SlowMethod::Exact, SlowMethod::SemiImplicit}) {
    CAPTURE(int(method));
    const StateField out = slow_reaction_step(constant_state(2, 1.0, 1.0, 1.0, 0.0), kin, 0.1, method);
    CHECK(out[0][0] == doctest::Approx(1.0).epsilon(1e-15));

    const StateField none = slow_reaction_step(constant_state(2, 2.5, 0.0, 0.0, 0.7), KineticParams{1, 1, 1, 0.5},
                                               0.3, method);
    CHECK(none[0][0] == 2.5);
    CHECK(none[3][0] == 0.7);

    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 50; ++rep) {
      const StateField s = random_state(rng, 16, 10.0);
      const StateField o = slow_reaction_step(s, KineticParams{2.0, 0.5, 1.5, 0.8}, 0.5, method);
      CHECK(o.min_value() >= 0.0);
      CHECK(o[1] == s[1]);
      CHECK(o[2] == s[2]);
    }
  }
  SUBCASE("semi-implicit formula") {
    const StateField s = constant_state(1, 2.0, 0.5, 0.25, 1.0);
    const KineticParams k{1.5, 0.3, 0.7, 0.4};
    const double dt = 0.2;
    const StateField o = slow_reaction_step(s, k, dt, SlowMethod::SemiImplicit);
    CHECK(o[0][0] == doctest::Approx((2.0 + dt * 0.3 * 0.25) / (1.0 + dt * 1.5 * 0.5)));
    CHECK(o[3][0] == doctest::Approx((1.0 + dt * 0.7 * 0.25) / (1.0 + dt * 0.4 * 0.5)));
  }
  SUBCASE("exact flow agrees with the linear ODE solution") {
    const StateField s = constant_state(1, 2.0, 0.5, 0.25, 1.0);
    const KineticParams k{1.5, 0.3, 0.7, 0.4};
    const double dt = 0.2;
    const StateField o = slow_reaction_step(s, k, dt, SlowMethod::Exact);
    const double a = 1.5 * 0.5, b = 0.3 * 0.25;
    CHECK(o[0][0] == doctest::Approx(b / a + (2.0 - b / a) * std::exp(-a * dt)).epsilon(1e-14));
    const double c = 0.4 * 0.5, e = 0.7 * 0.25;
    CHECK(o[3][0] == doctest::Approx(e / c + (1.0 - e / c) * std::exp(-c * dt)).epsilon(1e-14));
  }
}

TEST_CASE("composite step") {
  const Grid g = Grid::interval(8);
  SUBCASE("balanced constant state is a fixed point") {
    // k1 u1 u2 = l1 u3 and l2 u2 u4 = k2 u3; on the manifold since M = (1 + 1) 1 - 2 * 1 = 0.
    const KineticParams kin{1.0, 1.0, 1.0, 1.0};
    const StateField s = constant_state(8, 1.0, 1.0, 1.0, 1.0);
    for (auto scheme : {Scheme::Lie, Scheme::Strang}) {
      const StateField out = step(s, kin, DiffusionParams{}, 0.01, 0.01, g, scheme);
      for (int j = 0; j < 4; ++j) CHECK(max_diff(out[j], s[j]) <= 1e-14);
    }
  }
  SUBCASE("zero state stays zero") {
    const StateField out = step(StateField(8), KineticParams{}, DiffusionParams{}, 0.1, 0.01, g, Scheme::Strang);
    CHECK(out.min_value() == 0.0);
    for (const auto& f : out.u)
      for (double x : f) CHECK(x == 0.0);
  }
  SUBCASE("huge eps leaves only diffusion and slow kinetics") {
    std::mt19937_64 rng(8);
    const StateField s = random_state(rng, 8);
    const KineticParams kin{1.0, 1.0, 1.0, 0.3};
    const double dt = 0.01;
    const StateField out = step(s, kin, DiffusionParams{}, 1e300, dt, g, Scheme::Lie);
    StateField ref = slow_reaction_step(s, kin, dt);
    for (int j = 0; j < 4; ++j) ref[j] = diffusion_step(ref[j], 1.0, dt, g);
    for (int j = 0; j < 4; ++j) CHECK(max_diff(out[j], ref[j]) <= 1e-14);
  }
}

TEST_CASE("simulate") {
  const Grid g = Grid::interval(16);
  const KineticParams kin{};
  const DiffusionParams dif{};
  std::mt19937_64 rng(10);
  const StateField init = random_state(rng, 16);

  SUBCASE("T = 0 gives the initial snapshot") {
    SplitStepConfig cfg;
    cfg.T = 0.0;
    const auto traj = simulate(init, kin, dif, 0.1, cfg, g);
    REQUIRE(traj.size() == 1);
    CHECK(traj.times[0] == 0.0);
    CHECK(traj.states[0].u == init.u);
  }
  SUBCASE("zero init stays zero") {
    SplitStepConfig cfg;
    cfg.T = 0.1;
    cfg.dt = 0.01;
    cfg.snapshot_every = 2;
    const auto traj = simulate(StateField(16), kin, dif, 0.1, cfg, g);
    CHECK(traj.times.back() == doctest::Approx(0.1));
    for (const auto& s : traj.states)
      for (const auto& f : s.u)
        for (double x : f) CHECK(x == 0.0);
  }
  SUBCASE("no enzyme: constants stay constant") {
    SplitStepConfig cfg;
    cfg.T = 0.2;
    cfg.dt = 0.01;
    DiffusionParams d;
    d.d = {0.3, 2.0, 5.0, 1.7};
    const auto traj = simulate(constant_state(16, 0.8, 0.0, 0.0, 0.4), KineticParams{1, 1, 1, 0}, d, 0.01, cfg, g);
    for (const auto& s : traj.states) {
      for (double x : s[0]) CHECK(x == doctest::Approx(0.8).epsilon(1e-15));
      for (double x : s[3]) CHECK(x == doctest::Approx(0.4).epsilon(1e-15));
    }
  }
  SUBCASE("robust in eps at fixed dt") {
    SplitStepConfig cfg;
    cfg.T = 0.1;
    cfg.dt = 0.01;
    for (double eps : {1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
      const auto traj = simulate(init, KineticParams{1, 1, 1, 0.5}, dif, eps, cfg, g);
      double e0 = 0.0, e1 = 0.0;
      for (std::size_t i = 0; i < 16; ++i) {
        e0 += traj.states.front()[1][i] + traj.states.front()[2][i];
        e1 += traj.states.back()[1][i] + traj.states.back()[2][i];
      }
      CHECK(std::abs(e1 - e0) <= 1e-12 * e0);
      for (const auto& s : traj.states) CHECK(s.min_value() >= 0.0);
    }
  }
  SUBCASE("2D trajectories stay nonnegative") {
    const Grid g2 = Grid::square(10);
    StateField s(g2.cells());
    for (std::size_t i = 0; i < g2.cells(); ++i) {
      s[0][i] = (i % 3 == 0) ? 2.0 : 0.0;
      s[1][i] = (i % 5 == 0) ? 1.0 : 0.0;
    }
    SplitStepConfig cfg;
    cfg.T = 0.05;
    cfg.dt = 0.005;
    const auto traj = simulate(s, kin, dif, 1e-3, cfg, g2);
    for (const auto& st : traj.states) CHECK(st.min_value() >= 0.0);
  }
  SUBCASE("rejects bad input") {
    SplitStepConfig cfg;
    StateField bad = init;
    bad[0][3] = -1.0;
    CHECK_THROWS_AS(simulate(bad, kin, dif, 0.1, cfg, g), Error);
    bad[0][3] = std::nan("");
    CHECK_THROWS_AS(simulate(bad, kin, dif, 0.1, cfg, g), Error);
    cfg.diffusion = DiffusionMethod::CrankNicolson;
    cfg.dt = 0.1;
    try {
      simulate(init, kin, dif, 0.1, cfg, g);
      FAIL("expected CflViolation");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::CflViolation);
    }
  }
}
