// Command line front end:
//   mmlimit simulate|sweep|reduced-compare|ode-compare|report --config f.json --out dir [--workers N] [--seed S]
//
// Exit codes: 0 ok, 2 config error, 3 numerical divergence, 4 failed checks (report mode).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "mmlimit/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kDiverged = 3;
constexpr int kChecksFailed = 4;

bool numerical(mmlimit::ErrorCode c) {
  using mmlimit::ErrorCode;
  return c == ErrorCode::NonFiniteState || c == ErrorCode::NegativeState || c == ErrorCode::CflViolation ||
         c == ErrorCode::MaxIterExceeded || c == ErrorCode::ZeroPivot;
}

void print_summary(const mmlimit::SweepReport& report) {
  for (const auto& e : report.entries) {
    if (!e.ok()) {
      std::printf("eps %-8s FAILED  %s\n", mmlimit::eps_label(e.eps).c_str(), e.error.c_str());
      continue;
    }
    std::printf("eps %-8s dt %.3e", mmlimit::eps_label(e.eps).c_str(), e.dt);
    for (const auto& [k, v] : e.residual_norms) std::printf("  %s %.4e", k.c_str(), v);
    for (const auto& [k, v] : e.differences) std::printf("  d_%s %.4e", k.c_str(), v);
    std::printf("\n");
  }
  for (const auto& [name, f] : report.fitted_rates) {
    if (f.fit)
      std::printf("rate %-28s slope %.4f  r2 %.4f  (%zu points)\n", name.c_str(), f.fit->slope, f.fit->r2,
                  f.fit->points);
    else
      std::printf("rate %-28s none: %s\n", name.c_str(), f.error.c_str());
  }
}

int run_report_mode(const mmlimit::ExperimentConfig& cfg) {
  const std::filesystem::path input =
      cfg.report_input.empty() ? std::filesystem::path(cfg.output_dir) / "report.json"
                               : std::filesystem::path(cfg.report_input);
  std::ifstream is(input);
  if (!is) throw mmlimit::Error(mmlimit::ErrorCode::ConfigError, "cannot open report " + input.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw mmlimit::Error(mmlimit::ErrorCode::ConfigError, "report is not valid JSON: " + std::string(e.what()));
  }
  const auto report = mmlimit::sweep_report_from_json(j);
  const auto lines = mmlimit::check_report(report, cfg.checks, cfg.bound_factor);
  bool all = true;
  nlohmann::json out = nlohmann::json::array();
  for (const auto& l : lines) {
    std::printf("%s %-28s %s\n", l.pass ? "PASS" : "FAIL", l.name.c_str(), l.detail.c_str());
    all = all && l.pass;
    out.push_back({{"name", l.name}, {"pass", l.pass}, {"detail", l.detail}});
  }
  std::filesystem::create_directories(cfg.output_dir);
  std::ofstream os(std::filesystem::path(cfg.output_dir) / "checks.json");
  os << nlohmann::json{{"schema_version", 1}, {"report", input.string()}, {"checks", out}}.dump(2) << "\n";
  return all ? kOk : kChecksFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Enzyme reaction-diffusion fast-reaction limit experiments"};
  std::string command, config_file, out_dir;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  app.add_option("command", command, "simulate | sweep | reduced-compare | ode-compare | report")
      ->required()
      ->check(CLI::IsMember({"simulate", "sweep", "reduced-compare", "ode-compare", "report"}));
  app.add_option("--config", config_file, "JSON experiment configuration")->required();
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--workers", workers, "concurrent sweep entries");
  app.add_option("--seed", seed, "seed for random initial data");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  mmlimit::ExperimentConfig cfg;
  try {
    auto raw = nlohmann::json::object();
    {
      std::ifstream is(config_file);
      if (!is) throw mmlimit::Error(mmlimit::ErrorCode::ConfigError, "cannot open config file " + config_file);
      try {
        raw = nlohmann::json::parse(is);
      } catch (const nlohmann::json::exception& e) {
        throw mmlimit::Error(mmlimit::ErrorCode::ConfigError, "config is not valid JSON: " + std::string(e.what()));
      }
    }
    if (raw.is_object() && raw.contains("kind") && raw["kind"] != command)
      throw mmlimit::Error(mmlimit::ErrorCode::ConfigError,
                           "config kind '" + raw["kind"].dump() + "' does not match command '" + command + "'");
    cfg = mmlimit::parse_config(raw);
    cfg.kind = command;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (workers) cfg.workers = *workers;
    if (seed) cfg.seed = *seed;
    mmlimit::validate_config(cfg);
  } catch (const mmlimit::Error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  }

  try {
    if (command == "report") return run_report_mode(cfg);
    mmlimit::RunResult res;
    if (command == "simulate")
      res = mmlimit::run_simulate(cfg);
    else if (command == "sweep")
      res = mmlimit::run_sweep(cfg);
    else if (command == "reduced-compare")
      res = mmlimit::run_reduced_compare(cfg);
    else
      res = mmlimit::run_ode_compare(cfg);
    print_summary(res.report);
    std::printf("wrote %s\n", (std::filesystem::path(cfg.output_dir) / "report.json").string().c_str());
    return res.diverged > 0 ? kDiverged : kOk;
  } catch (const mmlimit::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return numerical(e.code()) ? kDiverged : kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
