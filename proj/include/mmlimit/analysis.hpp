#pragma once

// Quantities the convergence statements are phrased in: distance to the
// critical manifold, the weighted L^p energy, conserved integrals, and
// log-log rate fits over an eps sweep.

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmlimit/core_types.hpp"
#include "json.hpp"

namespace mmlimit {

/// M = (k1 u1 + l2 u4) u2 - (k2 + l1) u3, pointwise.
Field manifold_residual(const StateField& state, const KineticParams& kin);

/// u3 - phi(u1, u4) (u2 + u3) = -M / (k1 u1 + l2 u4 + k2 + l1), pointwise.
Field manifold_gap(const StateField& state, const KineticParams& kin);

/// (k1 u1 + l2 u4 + alpha) u2 - (k2 + l1) u3 with alpha = eps^(1/(4-p)), p in (1, 2].
Field perturbed_residual(const StateField& state, const KineticParams& kin, double eps, double p);

/// alpha(eps) = eps^(1/(4-p)) used by the perturbed residual and the modified energy.
double energy_alpha(double eps, double p);

/// H = int ((A2 + alpha) u2)^(p-1) u2 + (A3 u3)^(p-1) u3, A2 = k1 u1 + l2 u4, A3 = k2 + l1.
double energy_H(const StateField& state, const KineticParams& kin, double p, double alpha, const Grid& g);

struct ConservedQuantities {
  double enzyme_mass = 0.0;        // int (u2 + u3)
  double substrate_balance = 0.0;  // int (u1 + eps u3 + u4)
};

ConservedQuantities conserved_quantities(const StateField& state, double eps, const Grid& g);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

/// Least-squares line through (log eps, log value).
/// Throws TooFewPoints (< 3 points or repeated eps) or NonPositiveValue.
RateFit fit_rate(std::span<const std::pair<double, double>> points);

/// Smooth test function psi_{m,k}(x, y, t), compactly supported inside the
/// space-time cylinder: a sine of mode m in space under a bump, times the k-th
/// of three overlapping time bumps. m, k in {1, 2, 3}.
struct TestFunction {
  int m = 1;
  int k = 1;
  double length = 1.0;
  double horizon = 1.0;
  int dimension = 1;

  double operator()(double x, double y, double t) const;
  std::string name() const;
};

std::vector<TestFunction> distributional_test_family(double length, double horizon, int dimension);

/// One eps of a sweep. A failed simulation keeps its eps with `error` set.
struct SweepEntry {
  double eps = 0.0;
  double dt = 0.0;
  std::string error;

  std::map<std::string, double> residual_norms;
  std::map<std::string, double> floor_norms;  // same keys, from the eps -> 0+ run at this dt
  std::map<std::string, double> energies;
  std::map<std::string, double> conserved_drift;
  std::map<std::string, double> sup_norms;
  std::map<std::string, double> differences;  // full vs reduced (reduced-compare only)
  std::map<std::string, std::array<double, 4>> species_norms;  // key = exponent
  std::vector<double> distributional;                          // |int int gap psi| per test function
  double min_value = 0.0;
  long negative_values = 0;

  bool ok() const noexcept { return error.empty(); }
};

struct FitOutcome {
  std::optional<RateFit> fit;
  std::string error;  // why no fit was produced
  std::vector<double> used_eps;
  std::vector<double> excluded_eps;
};

struct SweepReport {
  std::vector<SweepEntry> entries;  // sorted by decreasing eps
  std::map<std::string, FitOutcome> fitted_rates;
  nlohmann::json metadata;
};

/// Fits `quantity` over the successful entries, keeping only points with
/// value >= floor_factor * floor value (when a floor was measured).
FitOutcome fit_quantity(const std::vector<SweepEntry>& entries, const std::string& quantity, double floor_factor,
                        bool from_differences = false);

struct BoundVerdict {
  bool pass = false;
  double worst_ratio = 0.0;
  /// Per species: (eps, norm) over the sweep.
  std::array<std::vector<std::pair<double, double>>, 4> table;
  std::array<double, 4> ratios{};
  std::string error;
};

/// Uniform-in-eps proxy: every species' L^p(Q_T) norm stays within `factor`
/// of its value at the largest eps.
BoundVerdict uniform_bound_check(const SweepReport& report, double p, double factor = 2.0);

std::string exponent_key(double p);

nlohmann::json to_json(const SweepReport& report);
SweepReport sweep_report_from_json(const nlohmann::json& j);

}  // namespace mmlimit
