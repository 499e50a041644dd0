#include <cmath>
#include <random>

#include "doctest.h"
#include "mmlimit/analysis.hpp"
#include "mmlimit/reduced.hpp"
#include "mmlimit/spatial_ops.hpp"

using namespace mmlimit;

namespace {

StateField one_cell(double u1, double u2, double u3, double u4) {
  return StateField(Field{u1}, Field{u2}, Field{u3}, Field{u4});
}

SweepEntry entry_with_norms(double eps, std::array<double, 4> norms) {
  SweepEntry e;
  e.eps = eps;
  e.species_norms["2"] = norms;
  return e;
}

}  // namespace

TEST_CASE("manifold residual and gap") {
  const KineticParams kin{1.0, 1.5, 0.5, 0.0};  // k2 + l1 = 2
  CHECK(manifold_residual(StateField(3), kin) == Field(3, 0.0));
  const StateField s = one_cell(1.0, 3.0, 1.0, 0.0);
  CHECK(manifold_residual(s, kin)[0] == doctest::Approx(1.0));
  CHECK(manifold_gap(s, kin)[0] == doctest::Approx(-1.0 / 3.0));

  const ReducedState r(Field{0.4, 2.0}, Field{1.1, 0.2}, Field{0.3, 0.0});
  const StateField on = to_full_state(r, KineticParams{1.0, 1.0, 1.0, 0.5});
  for (double x : manifold_gap(on, KineticParams{1.0, 1.0, 1.0, 0.5})) CHECK(std::abs(x) <= 1e-16);

  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  for (int rep = 0; rep < 200; ++rep) {
    const KineticParams k{u(rng) + 0.1, u(rng), u(rng) + 0.1, u(rng)};
    const StateField st = one_cell(u(rng), u(rng), u(rng), u(rng));
    const double a2 = k.k1 * st[0][0] + k.l2 * st[3][0];
    const double m = manifold_residual(st, k)[0];
    CHECK(std::abs(manifold_gap(st, k)[0] * (a2 + k.a3()) + m) <= 1e-14 * (1.0 + std::abs(m) + a2 * st[1][0]));
  }
}

TEST_CASE("perturbed residual") {
  const KineticParams kin{1.0, 1.0, 1.0, 0.0};
  const StateField s = one_cell(0.5, 2.0, 1.5, 0.0);
  const double m = manifold_residual(s, kin)[0];
  CHECK(energy_alpha(1e-4, 2.0) == doctest::Approx(1e-2));
  CHECK(perturbed_residual(s, kin, 1e-4, 2.0)[0] == doctest::Approx(m + 1e-2 * 2.0));
  CHECK(perturbed_residual(s, kin, 1e-300, 1.5)[0] == doctest::Approx(m));
  CHECK(perturbed_residual(one_cell(0.5, 0.0, 1.5, 0.0), kin, 0.3, 1.5)[0] == doctest::Approx(-2.0 * 1.5));
  CHECK_THROWS_AS(perturbed_residual(s, kin, 0.1, 1.0), Error);
  CHECK_THROWS_AS(perturbed_residual(s, kin, 0.1, 2.5), Error);
}

TEST_CASE("energy") {
  const Grid g = Grid::interval(4);
  // A2 = k1 u1 = 1, A3 = 2.
  const KineticParams kin{1.0, 1.0, 1.0, 0.0};
  const StateField s(Field(4, 1.0), Field(4, 2.0), Field(4, 3.0), Field(4, 0.0));
  CHECK(energy_H(s, kin, 2.0, 0.0, g) == doctest::Approx(22.0));
  CHECK(energy_H(StateField(4), kin, 2.0, 0.1, g) == 0.0);

  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  StateField r(4);
  for (auto& f : r.u)
    for (double& x : f) x = u(rng);
  CHECK(energy_H(r, kin, 1.0, 0.0, g) == doctest::Approx(conserved_quantities(r, 0.1, g).enzyme_mass));
  CHECK_THROWS_AS(energy_H(r, kin, 0.5, 0.0, g), Error);
}

TEST_CASE("conserved quantities") {
  const Grid g = Grid::interval(10);
  const auto zero = conserved_quantities(StateField(10), 0.1, g);
  CHECK(zero.enzyme_mass == 0.0);
  CHECK(zero.substrate_balance == 0.0);
  const auto c = conserved_quantities(StateField(10, 1.0), 0.1, g);
  CHECK(c.enzyme_mass == doctest::Approx(2.0));
  CHECK(c.substrate_balance == doctest::Approx(2.1));

  // Weighted sum (1, 0, eps, 1) of the reaction terms cancels.
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int rep = 0; rep < 200; ++rep) {
    const KineticParams k{u(rng), u(rng), u(rng), u(rng)};
    const double eps = std::pow(10.0, -u(rng));
    const double u1 = u(rng), u2 = u(rng), u3 = u(rng), u4 = u(rng);
    const double r1 = -k.k1 * u1 * u2 + k.l1 * u3;
    const double r3 = (k.k1 * u1 * u2 - k.a3() * u3 + k.l2 * u2 * u4) / eps;
    const double r4 = -k.l2 * u2 * u4 + k.k2 * u3;
    CHECK(std::abs(r1 + eps * r3 + r4) <= 1e-13 * (1.0 + std::abs(r1) + std::abs(r4) + eps * std::abs(r3)));
  }
}

TEST_CASE("rate fits") {
  const std::vector<double> eps{1e-1, 1e-2, 1e-3, 1e-4, 1e-5};
  auto make = [&](auto f) {
    std::vector<std::pair<double, double>> pts;
    for (double e : eps) pts.emplace_back(e, f(e));
    return pts;
  };
  const auto lin = fit_rate(make([](double e) { return e; }));
  CHECK(lin.slope == doctest::Approx(1.0));
  CHECK(lin.r2 == doctest::Approx(1.0));
  CHECK(fit_rate(make([](double e) { return std::sqrt(e); })).slope == doctest::Approx(0.5));

  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    const auto fit = fit_rate(make([&](double e) { return 3.0 * std::sqrt(e) * (1.0 + 0.01 * noise(rng)); }));
    CHECK(std::abs(fit.slope - 0.5) <= 0.02);
  }

  const auto a = fit_rate(make([](double e) { return std::pow(e, 0.3); }));
  const auto b = fit_rate(make([](double e) { return 7.0 * std::pow(e, 0.3); }));
  CHECK(b.slope == doctest::Approx(a.slope).epsilon(1e-12));
  CHECK(b.intercept == doctest::Approx(a.intercept + std::log(7.0)));

  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::ConfigError;
  };
  std::vector<std::pair<double, double>> two{{0.1, 1.0}, {0.01, 0.5}};
  CHECK(code_of([&] { fit_rate(two); }) == ErrorCode::TooFewPoints);
  std::vector<std::pair<double, double>> repeated{{0.1, 1.0}, {0.1, 0.9}, {0.01, 0.5}};
  CHECK(code_of([&] { fit_rate(repeated); }) == ErrorCode::TooFewPoints);
  std::vector<std::pair<double, double>> zero{{0.1, 1.0}, {0.01, 0.0}, {0.001, 0.5}};
  CHECK(code_of([&] { fit_rate(zero); }) == ErrorCode::NonPositiveValue);
}

TEST_CASE("floor exclusion") {
  std::vector<SweepEntry> entries;
  for (double e : {1e-1, 1e-2, 1e-3, 1e-4}) {
    SweepEntry s;
    s.eps = e;
    s.residual_norms["gap"] = e;
    s.floor_norms["gap"] = 2e-5;
    entries.push_back(s);
  }
  entries.back().error = "failed";
  const auto out = fit_quantity(entries, "gap", 10.0);
  REQUIRE(out.fit);
  CHECK(out.used_eps == std::vector<double>{1e-1, 1e-2, 1e-3});
  const auto strict = fit_quantity(entries, "gap", 100.0);
  CHECK_FALSE(strict.fit);
  CHECK(strict.excluded_eps.size() == 1);
}

TEST_CASE("uniform bound") {
  auto report_of = [](auto scale) {
    SweepReport r;
    for (double e : {1e-1, 1e-2, 1e-3, 1e-4}) r.entries.push_back(entry_with_norms(e, scale(e)));
    return r;
  };
  CHECK(uniform_bound_check(report_of([](double) { return std::array<double, 4>{1, 2, 3, 4}; }), 2.0).pass);
  CHECK_FALSE(uniform_bound_check(report_of([](double e) { return std::array<double, 4>{1, 1 / e, 1, 1}; }), 2.0).pass);
  int flip = 0;
  const auto noisy = uniform_bound_check(report_of([&](double) {
                                           const double f = (flip++ % 2) ? 1.1 : 0.9;
                                           return std::array<double, 4>{f, 2 * f, f, f};
                                         }),
                                         2.0);
  CHECK(noisy.pass);
  CHECK(noisy.worst_ratio <= 1.1 / 0.9 + 1e-12);
  SweepReport small;
  small.entries.push_back(entry_with_norms(0.1, {1, 1, 1, 1}));
  CHECK_FALSE(uniform_bound_check(small, 2.0).pass);
}

TEST_CASE("test functions vanish outside the cylinder interior") {
  const auto family = distributional_test_family(1.0, 1.0, 1);
  CHECK(family.size() == 9);
  for (const auto& psi : family) {
    CHECK(psi(0.05, 0.0, 0.5) == 0.0);
    CHECK(psi(0.95, 0.0, 0.5) == 0.0);
    CHECK(psi(0.5, 0.0, 0.0) == 0.0);
    CHECK(psi(0.5, 0.0, 1.0) == 0.0);
    double peak = 0.0;
    for (int i = 1; i < 100; ++i)
      for (int k = 1; k < 100; ++k) peak = std::max(peak, std::abs(psi(i / 100.0, 0.0, k / 100.0)));
    CHECK(peak > 0.1);
  }
  const auto two = distributional_test_family(1.0, 1.0, 2);
  CHECK(two[0](0.5, 0.02, 0.25) == 0.0);
}

TEST_CASE("report JSON round trip") {
  SweepReport r;
  SweepEntry e;
  e.eps = 0.01;
  e.dt = 2e-4;
  e.residual_norms["manifold_gap_L2"] = 1.25e-3;
  e.floor_norms["manifold_gap_L2"] = 1e-6;
  e.species_norms["2"] = {1, 2, 3, 4};
  e.distributional = {0.1, 0.2};
  e.min_value = 0.0;
  r.entries.push_back(e);
  SweepEntry bad;
  bad.eps = 0.001;
  bad.error = "diverged";
  r.entries.push_back(bad);
  FitOutcome f;
  f.fit = RateFit{0.5, -1.0, 0.99, 5};
  f.used_eps = {0.1, 0.01};
  r.fitted_rates["manifold_gap_L2"] = f;
  FitOutcome none;
  none.error = "too few";
  r.fitted_rates["other"] = none;
  r.metadata = {{"kind", "sweep"}};

  const auto j = to_json(r);
  CHECK(j.at("schema_version") == 1);
  const auto back = sweep_report_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.entries[1].error == "diverged");
  CHECK(back.fitted_rates.at("manifold_gap_L2").fit->slope == 0.5);
  CHECK_FALSE(back.fitted_rates.at("other").fit);

  auto wrong = j;
  wrong["schema_version"] = 2;
  CHECK_THROWS_AS(sweep_report_from_json(wrong), Error);
}
