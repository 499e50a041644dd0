#pragma once

// Operator-splitting integrator for the eps-dependent mass-action system
//
//   d_t u1 - d1 Lap u1 = -k1 u1 u2 + l1 u3
//   d_t u2 - d2 Lap u2 = -(1/eps) (k1 u1 u2 - (k2 + l1) u3 + l2 u2 u4)
//   d_t u3 - d3 Lap u3 = +(1/eps) (k1 u1 u2 - (k2 + l1) u3 + l2 u2 u4)
//   d_t u4 - d4 Lap u4 = -l2 u2 u4 + k2 u3
//
// with homogeneous Neumann boundaries. The substeps are
//   D: per-species implicit diffusion,
//   S: the slow u1/u4 kinetics with (u2, u3) frozen,
//   F: the stiff (u2, u3) exchange with (u1, u4) frozen, solved in closed form.
// Each substep maps nonnegative states to nonnegative states, and F keeps
// u2 + u3 fixed in every cell, so no step-size restriction in eps exists.

#include <array>
#include <span>

#include "mmlimit/core_types.hpp"
#include "mmlimit/linear_solver.hpp"

namespace mmlimit {

enum class Scheme { Lie, Strang };

enum class DiffusionMethod {
  ImplicitEuler,  // unconditionally positive, first order
  CrankNicolson,  // second order; positive only when tau * d * dim <= h^2
};

enum class SlowMethod {
  Exact,         // exact flow of the frozen-coefficient linear subsystem
  SemiImplicit,  // loss implicit, gain explicit (first order)
};

struct SplitStepConfig {
  double dt = 2e-4;
  double T = 1.0;
  int snapshot_every = 50;
  Scheme scheme = Scheme::Strang;
  DiffusionMethod diffusion = DiffusionMethod::ImplicitEuler;
  SlowMethod slow = SlowMethod::Exact;
};

/// Diffusion solve for a fixed (d, tau, grid, method), factorised once.
class DiffusionOperator {
 public:
  DiffusionOperator() = default;
  DiffusionOperator(double d, double tau, const Grid& g, DiffusionMethod method);

  /// Advances `f` in place by tau. `work` must have the grid's cell count.
  void apply(std::span<double> f, std::span<double> work) const;

  double gamma() const noexcept { return gamma_; }

  /// Applies ops[j] to u[j] for all four species; same result as four apply() calls.
  static void apply4(const std::array<DiffusionOperator, 4>& ops, std::array<Field, 4>& u,
                     std::array<Field, 4>& work);

 private:
  void explicit_half(std::span<const double> f, std::span<double> out) const;
  void solve_2d(std::span<const double> rhs, std::span<double> x) const;

  Grid grid_;
  DiffusionMethod method_ = DiffusionMethod::ImplicitEuler;
  double gamma_ = 0.0;     // coefficient of the implicit Laplacian
  double explicit_ = 0.0;  // coefficient of the explicit Laplacian (CN only)
  TridiagonalFactor factor_;
};

/// One diffusion substep of length dt with diffusivity d.
Field diffusion_step(const Field& f, double d, double dt, const Grid& g,
                     DiffusionMethod method = DiffusionMethod::ImplicitEuler);

/// Closed-form solve of the stiff (u2, u3) exchange over dt.
StateField fast_reaction_step(const StateField& state, const KineticParams& kin, double eps, double dt);
void fast_reaction_inplace(StateField& state, const KineticParams& kin, double eps, double dt);

/// Slow u1/u4 kinetics over dt with u2, u3 held fixed.
StateField slow_reaction_step(const StateField& state, const KineticParams& kin, double dt,
                              SlowMethod method = SlowMethod::Exact);
void slow_reaction_inplace(StateField& state, const KineticParams& kin, double dt, SlowMethod method);

/// Reusable stepping engine with cached diffusion factorisations.
class SplitIntegrator {
 public:
  SplitIntegrator(const KineticParams& kin, const DiffusionParams& dif, double eps, double dt, const Grid& g,
                  Scheme scheme, DiffusionMethod diffusion = DiffusionMethod::ImplicitEuler,
                  SlowMethod slow = SlowMethod::Exact);

  void advance(StateField& state);
  double dt() const noexcept { return dt_; }

 private:
  void diffuse(StateField& state, const std::array<DiffusionOperator, 4>& ops);

  KineticParams kin_;
  double eps_;
  double dt_;
  Scheme scheme_;
  SlowMethod slow_;
  std::array<DiffusionOperator, 4> ops_;
  std::array<Field, 4> work_;
};

/// Single composite step: lie = D(dt) S(dt) F(dt), strang = D(dt/2) S(dt/2) F(dt) S(dt/2) D(dt/2)
/// (operators applied right to left).
StateField step(const StateField& state, const KineticParams& kin, const DiffusionParams& dif, double eps, double dt,
                const Grid& g, Scheme scheme, DiffusionMethod diffusion = DiffusionMethod::ImplicitEuler,
                SlowMethod slow = SlowMethod::Exact);

/// Integrates over [0, T]. The step is shrunk to T / ceil(T / dt) so the last
/// snapshot lands on T; `dt_used` records it. Throws NonFiniteState on divergence.
Trajectory simulate(const StateField& init, const KineticParams& kin, const DiffusionParams& dif, double eps,
                    const SplitStepConfig& cfg, const Grid& g);

}  // namespace mmlimit
