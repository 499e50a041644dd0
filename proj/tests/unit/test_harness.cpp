#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mmlimit/harness.hpp"
#include "mmlimit/spatial_ops.hpp"

using namespace mmlimit;
using nlohmann::json;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::ConfigError;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mmlimit_unit_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

ExperimentConfig tiny_config() {
  ExperimentConfig c = default_config();
  c.n = 16;
  c.T = 0.05;
  c.dt = 1e-3;
  c.snapshot_every = 10;
  c.eps_list = {1e-1, 1e-2, 1e-3};
  c.eps_dt_ratio = 0.0;
  c.write_csv = false;
  c.output_dir = "";
  return c;
}

}  // namespace

TEST_CASE("config parsing is strict") {
  CHECK(code_of([] { parse_config(json{{"bogus", 1}}); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { parse_config(json{{"kinetics", {{"k3", 1.0}}}}); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { parse_config(json{{"init", {{"u1", {{"type", "constant"}, {"width", 1}}}}}}); }) ==
        ErrorCode::ConfigError);
  CHECK(code_of([] { parse_config(json{{"dt", "small"}}); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { parse_config(json{{"grid", {{"n", 12.5}}}}); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { parse_config(json{{"scheme", "rk4"}}); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { parse_config(json::array()); }) == ErrorCode::ConfigError);
  try {
    parse_config(json{{"checks", {{"max_drift", 1}}}});
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("checks.max_drift") != std::string::npos);
  }
}

TEST_CASE("defaults round trip") {
  const json d = config_to_json(default_config());
  CHECK(config_to_json(parse_config(d)) == d);
  CHECK(config_to_json(parse_config(json::object())) == d);

  json partial{{"diffusion", {{"d3", 3.0}}}, {"scheme", "lie"}, {"eps_list", {0.5, 0.05}}};
  const auto c = parse_config(partial);
  CHECK(c.dif.d[2] == 3.0);
  CHECK(c.dif.d[1] == 1.0);
  CHECK(c.scheme == Scheme::Lie);
  CHECK(c.eps_list == std::vector<double>{0.5, 0.05});
  CHECK(config_to_json(parse_config(config_to_json(c))) == config_to_json(c));
}

TEST_CASE("config validation") {
  auto bad = [](auto edit) {
    ExperimentConfig c = default_config();
    edit(c);
    return code_of([&] { validate_config(c); });
  };
  validate_config(default_config());
  CHECK(bad([](ExperimentConfig& c) { c.eps_list = {}; }) == ErrorCode::ConfigError);
  CHECK(bad([](ExperimentConfig& c) { c.eps_list = {1e-2, 1e-1}; }) == ErrorCode::ConfigError);
  CHECK(bad([](ExperimentConfig& c) { c.eps_list = {0.1, 0.1}; }) == ErrorCode::ConfigError);
  CHECK(bad([](ExperimentConfig& c) { c.eps_list = {2.0, 0.1}; }) == ErrorCode::ConfigError);
  CHECK(bad([](ExperimentConfig& c) { c.eps_list = {0.1, 0.0}; }) == ErrorCode::ConfigError);
  CHECK(bad([](ExperimentConfig& c) { c.T = 0.0; }) == ErrorCode::ConfigError);
  CHECK(bad([](ExperimentConfig& c) { c.dt = 2.0; }) == ErrorCode::ConfigError);
  CHECK(bad([](ExperimentConfig& c) { c.kin.k1 = -1.0; }) == ErrorCode::ConfigError);
  CHECK(bad([](ExperimentConfig& c) { c.n = 1; }) == ErrorCode::ConfigError);
  CHECK(bad([](ExperimentConfig& c) { c.kind = "plot"; }) == ErrorCode::ConfigError);
  CHECK(bad([](ExperimentConfig& c) {
          c.kind = "ode-compare";
          c.kin.l2 = 0.5;
        }) == ErrorCode::ConfigError);
  CHECK(bad([](ExperimentConfig& c) { c.init.fields[0].kind = InitKind::Manifold; }) == ErrorCode::ConfigError);
}

TEST_CASE("initial data") {
  const Grid g = Grid::interval(101);
  SUBCASE("constants") {
    InitSpec spec;
    for (auto& f : spec.fields) f.value = 1.0;
    const auto s = generate_initial(spec, g);
    for (const auto& f : s.u)
      for (double x : f) CHECK(x == 1.0);
  }
  SUBCASE("gaussian peak") {
    InitSpec spec;
    auto& f = spec.fields[1];
    f.kind = InitKind::Gaussian;
    f.center = {0.5, 0.5};
    f.width = 0.05;
    f.amplitude = 10.0;
    const auto s = generate_initial(spec, g);
    CHECK(s[1][50] == doctest::Approx(10.0));
    CHECK(*std::max_element(s[1].begin(), s[1].end()) == s[1][50]);
    CHECK(s.min_value() >= 0.0);
    f.width = 0.0;
    CHECK(code_of([&] { generate_initial(spec, g); }) == ErrorCode::InvalidSpec);
  }
  SUBCASE("indicator vanishes outside its interval") {
    InitSpec spec;
    auto& f = spec.fields[0];
    f.kind = InitKind::Indicator;
    f.lo = 0.3;
    f.hi = 0.6;
    f.edge = 0.05;
    f.amplitude = 2.0;
    const auto s = generate_initial(spec, g);
    for (std::size_t i = 0; i < g.cells(); ++i) {
      const double x = g.x_of(i);
      if (x <= 0.3 || x >= 0.6) CHECK(s[0][i] == 0.0);
      if (x >= 0.35 && x <= 0.55) CHECK(s[0][i] == doctest::Approx(2.0));
    }
  }
  SUBCASE("random smooth is seeded and clipped") {
    InitSpec spec;
    auto& f = spec.fields[0];
    f.kind = InitKind::RandomSmooth;
    f.base = 0.0;
    f.amplitude = 1.0;
    f.modes = 6;
    InitReport rep;
    const auto a = generate_initial(spec, g, {}, 42, &rep);
    const auto b = generate_initial(spec, g, {}, 42);
    const auto c = generate_initial(spec, g, {}, 43);
    CHECK(a.u == b.u);
    CHECK(a[0] != c[0]);
    CHECK(a.min_value() >= 0.0);
    CHECK(rep.clip_fraction[0] > 0.0);
    CHECK(rep.clip_fraction[0] < 1.0);
    f.seed = 5;
    f.has_seed = true;
    CHECK(generate_initial(spec, g, {}, 1)[0] == generate_initial(spec, g, {}, 2)[0]);
  }
  SUBCASE("manifold split") {
    const ExperimentConfig c = default_config();
    const auto s = generate_initial(c.init, g, c.kin);
    for (double x : manifold_residual(s, c.kin)) CHECK(std::abs(x) <= 1e-15);
  }
}

TEST_CASE("per-eps step") {
  ExperimentConfig c = default_config();
  const auto big = step_config_for(c, 0.1);
  CHECK(big.dt == c.dt);
  CHECK(big.snapshot_every == c.snapshot_every);
  const auto small = step_config_for(c, 1e-4);
  CHECK(small.dt == doctest::Approx(5e-6));
  CHECK(small.dt * small.snapshot_every == doctest::Approx(c.dt * c.snapshot_every));
  c.eps_dt_ratio = 0.0;
  CHECK(step_config_for(c, 1e-4).dt == c.dt);
}

TEST_CASE("sweep edge cases") {
  SUBCASE("single eps has no fit") {
    ExperimentConfig c = tiny_config();
    c.eps_list = {0.1};
    const auto r = run_sweep(c);
    REQUIRE(r.report.entries.size() == 1);
    CHECK(r.report.entries[0].ok());
    const auto& f = r.report.fitted_rates.at("manifold_gap_L2");
    CHECK_FALSE(f.fit);
    CHECK(f.error.find("TooFewPoints") != std::string::npos);
  }
  SUBCASE("no enzyme gives zero residuals") {
    ExperimentConfig c = tiny_config();
    c.init.fields[1] = InitField{};
    const auto r = run_sweep(c);
    for (const auto& e : r.report.entries) CHECK(e.residual_norms.at("manifold_gap_L2") == 0.0);
    const auto& f = r.report.fitted_rates.at("manifold_gap_L2");
    CHECK_FALSE(f.fit);
    CHECK(f.error.find("NonPositiveValue") != std::string::npos);
  }
  SUBCASE("checks on a healthy sweep") {
    ExperimentConfig c = tiny_config();
    const auto r = run_sweep(c);
    for (const auto& e : r.report.entries) {
      CHECK(e.min_value >= 0.0);
      CHECK(std::abs(e.conserved_drift.at("enzyme_mass")) <= 1e-12);
      CHECK(e.distributional.size() == 9);
    }
    Checks checks;
    for (const auto& l : check_report(r.report, checks, 2.0)) {
      CAPTURE(l.name);
      CAPTURE(l.detail);
      CHECK(l.pass);
    }
    checks.min_slope["manifold_gap_L2"] = 5.0;
    bool any_fail = false;
    for (const auto& l : check_report(r.report, checks, 2.0)) any_fail = any_fail || !l.pass;
    CHECK(any_fail);
  }
}

TEST_CASE("reduced comparison at short horizons") {
  ExperimentConfig c = tiny_config();
  c.kind = "reduced-compare";
  c.eps_list = {1e-2, 1e-3, 1e-4};
  c.eps_dt_ratio = 0.05;
  double prev = INFINITY;
  for (double T : {4e-2, 4e-3, 4e-4}) {
    c.T = T;
    c.dt = T / 20.0;
    const auto r = run_reduced_compare(c);
    const double d = r.report.entries.back().differences.at("u1_L2");
    CHECK(d < prev);
    prev = d;
  }
  CHECK(prev < 1e-6);
}

TEST_CASE("output files are reproducible") {
  ExperimentConfig c = tiny_config();
  c.kind = "simulate";
  c.eps_list = {0.1};
  c.write_csv = true;
  const auto d1 = scratch_dir("a"), d2 = scratch_dir("b");
  c.output_dir = d1.string();
  run_simulate(c);
  c.output_dir = d2.string();
  run_simulate(c);
  const auto a = slurp(d1 / "series_eps0.1.csv");
  CHECK(a.rfind("t,x,u1,u2,u3,u4\n", 0) == 0);
  CHECK(a == slurp(d2 / "series_eps0.1.csv"));

  const auto report = json::parse(slurp(d1 / "report.json"));
  CHECK(report.at("schema_version") == 1);
  const auto resolved = parse_config(report.at("metadata").at("config"));
  CHECK(resolved.n == c.n);
  CHECK(resolved.T == c.T);
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}
