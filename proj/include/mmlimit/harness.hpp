#pragma once

// Experiment configuration, initial data and the sweep / comparison drivers
// behind the command line tool.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mmlimit/analysis.hpp"
#include "mmlimit/core_types.hpp"
#include "mmlimit/fast_slow.hpp"
#include "json.hpp"

namespace mmlimit {

enum class InitKind {
  Constant,         // value
  Cosine,           // base + amplitude cos(mode pi x / L) (times the y factor in 2D)
  Gaussian,         // base + amplitude exp(-|x - center|^2 / (2 width^2))
  Indicator,        // amplitude on [lo, hi] with C-infinity edges of length `edge`, exactly 0 outside
  RandomSmooth,     // base + amplitude * random low-mode cosine series, clipped at 0
  Manifold,         // u3 only: u2 holds the total enzyme, split on the critical manifold
};

struct InitField {
  InitKind kind = InitKind::Constant;
  double value = 0.0;
  double base = 0.0;
  double amplitude = 1.0;
  std::array<double, 2> center{0.5, 0.5};
  double width = 0.1;
  int mode = 1;
  double lo = 0.25, hi = 0.75, edge = 0.05;
  int modes = 4;
  std::uint64_t seed = 0;
  bool has_seed = false;
};

struct InitSpec {
  std::array<InitField, 4> fields;
};

struct InitReport {
  /// Fraction of cells clipped to 0 per species (random-smooth only, else 0).
  std::array<double, 4> clip_fraction{};
};

/// Deterministic for a fixed spec and seed. `kin` is only used by the manifold split.
/// Throws InvalidSpec.
StateField generate_initial(const InitSpec& spec, const Grid& g, const KineticParams& kin = {},
                            std::uint64_t seed = 0, InitReport* report = nullptr);

enum class FloorMode { None, EpsZero };

struct Checks {
  std::map<std::string, double> min_slope;
  std::map<std::string, double> min_r2;
  double max_enzyme_drift = 1e-10;
  double max_substrate_drift = -1.0;  // < 0: not checked
  bool require_positivity = true;
  double bound_p = 2.0;                // uniform bound exponent; <= 0 disables
  bool require_monotone_distributional = false;
  double distributional_ratio = -1.0;  // smallest / largest eps; < 0: not checked
};

struct ExperimentConfig {
  std::string kind = "sweep";
  KineticParams kin;
  DiffusionParams dif;
  int dimension = 1;
  int n = 256;
  double length = 1.0;
  InitSpec init;
  std::vector<double> eps_list{1e-1, 1e-2, 1e-3, 1e-4, 1e-5};
  double dt = 2e-4;
  double T = 1.0;
  int snapshot_every = 50;
  Scheme scheme = Scheme::Strang;
  DiffusionMethod diffusion_method = DiffusionMethod::ImplicitEuler;
  SlowMethod slow_method = SlowMethod::Exact;
  /// > 0: each eps uses dt_eps = dt / ceil(dt / (ratio eps)), snapshots unchanged.
  double eps_dt_ratio = 0.05;
  FloorMode floor_mode = FloorMode::EpsZero;
  double floor_eps = 1e-14;
  double floor_factor = 10.0;
  double bound_factor = 2.0;
  double reduced_dt = 0.0;      // 0: min(half the explicit limit, finest full-system step)
  double s0 = 1.0;              // ode-compare
  double ode_dt = 0.0;          // 0: min(1e-3, eps / 10), slow time
  double layer_factor = 5.0;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  int workers = 1;
  bool write_csv = true;
  std::string report_input;     // report mode; default <output_dir>/report.json
  Checks checks;

  Grid grid() const { return Grid(dimension, n, length); }
};

/// Every default made explicit, so defaults + parse(to_json(c)) == c.
ExperimentConfig default_config();

/// Strict: unknown keys and wrong types throw Error(ConfigError).
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& file);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Throws Error(ConfigError) when the config violates an invariant.
void validate_config(const ExperimentConfig& cfg);

/// Step and snapshot cadence used for one eps.
SplitStepConfig step_config_for(const ExperimentConfig& cfg, double eps);

/// Metrics of one full trajectory (no floor, no differences).
SweepEntry evaluate_trajectory(const Trajectory& traj, const ExperimentConfig& cfg, double eps);

struct RunResult {
  SweepReport report;
  int diverged = 0;  // entries that stopped on a non-finite state
};

RunResult run_simulate(const ExperimentConfig& cfg);
RunResult run_sweep(const ExperimentConfig& cfg);
RunResult run_reduced_compare(const ExperimentConfig& cfg);
RunResult run_ode_compare(const ExperimentConfig& cfg);

struct CheckLine {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Evaluates `checks` against a report produced by any of the runners.
std::vector<CheckLine> check_report(const SweepReport& report, const Checks& checks, double bound_factor);

/// Writes report.json into the output directory.
void write_report(const SweepReport& report, const std::filesystem::path& dir);

std::string eps_label(double eps);

}  // namespace mmlimit
