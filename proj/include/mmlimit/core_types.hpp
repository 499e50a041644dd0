#pragma once

// Parameter, grid and state containers shared by every integrator.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mmlimit/error.hpp"

namespace mmlimit {

using Field = std::vector<double>;

/// Rate constants of E + S <-> C <-> E + P (forward k1, k2; backward l1, l2).
struct KineticParams {
  double k1 = 1.0;
  double l1 = 1.0;
  double k2 = 1.0;
  double l2 = 0.0;

  /// Constant part of the complex dissociation, k2 + l1.
  double a3() const noexcept { return k2 + l1; }
  bool irreversible() const noexcept { return l2 == 0.0; }
};

enum class EpsRule {
  Constant,  // d_j^eps = d_j
  Linear,    // d_j^eps = d_j (1 + eps)
};

struct DiffusionParams {
  std::array<double, 4> d{1.0, 1.0, 1.0, 1.0};
  EpsRule rule = EpsRule::Constant;

  /// Diffusivities used by the eps-dependent system. Tends to `d` as eps -> 0.
  std::array<double, 4> at(double eps) const noexcept;
};

/// Returns the first violated parameter invariant, or nullopt when valid.
std::optional<ErrorCode> validate_params(const KineticParams& kin, const DiffusionParams& dif);

/// |d2 - d3| / (d2 + d3): how far the enzyme and complex diffusivities are apart.
double diffusivity_gap(const DiffusionParams& dif);

/// Uniform cell-centered grid on [0, L] or [0, L]^2.
class Grid {
 public:
  Grid() = default;
  Grid(int dimension, int cells_per_axis, double length);

  static Grid interval(int n, double length = 1.0) { return Grid(1, n, length); }
  static Grid square(int n, double length = 1.0) { return Grid(2, n, length); }

  int dimension() const noexcept { return dim_; }
  int n() const noexcept { return n_; }
  double length() const noexcept { return length_; }
  double h() const noexcept { return h_; }
  std::size_t cells() const noexcept { return dim_ == 1 ? std::size_t(n_) : std::size_t(n_) * n_; }
  double cell_measure() const noexcept { return dim_ == 1 ? h_ : h_ * h_; }
  double volume() const noexcept { return dim_ == 1 ? length_ : length_ * length_; }

  /// Cell-center coordinate along an axis.
  double center(int i) const noexcept { return (i + 0.5) * h_; }
  /// x-coordinate of flat cell index (row-major, x fastest).
  double x_of(std::size_t idx) const noexcept { return center(int(idx % std::size_t(n_))); }
  double y_of(std::size_t idx) const noexcept { return dim_ == 1 ? 0.0 : center(int(idx / std::size_t(n_))); }

  void check_size(std::span<const double> f) const;

 private:
  int dim_ = 1;
  int n_ = 4;
  double length_ = 1.0;
  double h_ = 0.25;
};

/// The four concentrations: u1 substrate, u2 rescaled enzyme, u3 rescaled complex, u4 product.
struct StateField {
  std::array<Field, 4> u;

  StateField() = default;
  explicit StateField(std::size_t cells, double value = 0.0) { u.fill(Field(cells, value)); }
  StateField(Field u1, Field u2, Field u3, Field u4) : u{std::move(u1), std::move(u2), std::move(u3), std::move(u4)} {}

  std::size_t cells() const noexcept { return u[0].size(); }
  Field& operator[](int j) { return u[std::size_t(j)]; }
  const Field& operator[](int j) const { return u[std::size_t(j)]; }

  /// Total enzyme v = u2 + u3.
  Field v() const;
  double min_value() const;
  bool all_finite() const;
  bool consistent() const;
};

/// Limit-system state (u1, v = u2 + u3, u4).
struct ReducedState {
  Field u1, v, u4;

  ReducedState() = default;
  ReducedState(Field a, Field b, Field c) : u1(std::move(a)), v(std::move(b)), u4(std::move(c)) {}

  std::size_t cells() const noexcept { return u1.size(); }
  double min_value() const;
  bool all_finite() const;
  bool consistent() const { return v.size() == u1.size() && u4.size() == u1.size(); }
};

/// Time-indexed snapshots of a simulation. times[0] = 0, strictly increasing.
template <class State>
struct Snapshots {
  std::vector<double> times;
  std::vector<State> states;
  double dt_used = 0.0;
  Grid grid;

  std::size_t size() const noexcept { return times.size(); }
  const State& final_state() const { return states.back(); }
};

using Trajectory = Snapshots<StateField>;
using ReducedTrajectory = Snapshots<ReducedState>;

}  // namespace mmlimit
