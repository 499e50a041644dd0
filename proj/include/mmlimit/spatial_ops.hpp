#pragma once

// Discrete Neumann Laplacian, midpoint quadrature and space-time norms.

#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "mmlimit/core_types.hpp"

namespace mmlimit {

inline constexpr double kInfExponent = std::numeric_limits<double>::infinity();

/// Five-point (three-point in 1D) Laplacian with mirror ghost cells.
Field laplacian_neumann(std::span<const double> f, const Grid& g);
void laplacian_neumann(std::span<const double> f, const Grid& g, std::span<double> out);

/// Midpoint rule: cell measure times the sum of cell values.
double integrate(std::span<const double> f, const Grid& g);

/// Spatial L^p norm on the grid; p may be kInfExponent.
double lp_norm(std::span<const double> f, const Grid& g, double p);

struct FieldStats {
  double integral = 0.0;
  std::map<double, double> lp_norms;
};

FieldStats field_stats(std::span<const double> f, const Grid& g, std::span<const double> exponents);

/// Trapezoidal weights over a list of snapshot times.
std::vector<double> trapezoid_weights(std::span<const double> times);

/// (sum_k w_k * h^dim * sum_i |F_i(t_k)|^p)^(1/p), or the max over all values for p = inf.
double lp_norm_spacetime(std::span<const double> times, std::span<const Field> fields, const Grid& g, double p);

/// Applies `transform` (state -> Field) to every snapshot and takes the space-time norm.
template <class State, class Transform>
double lp_norm_spacetime(const Snapshots<State>& traj, double p, Transform&& transform) {
  std::vector<Field> fields;
  fields.reserve(traj.size());
  for (const auto& s : traj.states) fields.push_back(transform(s));
  return lp_norm_spacetime(traj.times, fields, traj.grid, p);
}

/// Space-time integral sum_k w_k * h^dim * sum_i F_i(t_k) * psi(x_i, t_k).
template <class Psi>
double integrate_spacetime(std::span<const double> times, std::span<const Field> fields, const Grid& g, Psi&& psi) {
  const auto w = trapezoid_weights(times);
  double total = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (w[k] == 0.0) continue;
    double s = 0.0;
    for (std::size_t i = 0; i < fields[k].size(); ++i) s += fields[k][i] * psi(g.x_of(i), g.y_of(i), times[k]);
    total += w[k] * g.cell_measure() * s;
  }
  return total;
}

}  // namespace mmlimit
