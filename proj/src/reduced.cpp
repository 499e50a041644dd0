#include "mmlimit/reduced.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mmlimit {

double phi(double u1, double u4, const KineticParams& kin) noexcept {
  const double a2 = kin.k1 * u1 + kin.l2 * u4;
  if (std::isinf(a2)) return 1.0;
  return a2 / (a2 + kin.a3());
}

double mm_rate(double u1, double u4, double v, const KineticParams& kin) noexcept {
  const double den = kin.k1 * u1 + kin.l2 * u4 + kin.a3();
  return (kin.k1 * kin.k2 * u1 - kin.l1 * kin.l2 * u4) * v / den;
}

double reduced_max_dt(const ReducedState& state, const KineticParams& kin, const DiffusionParams& dif,
                      const Grid& g) {
  const double dmax = std::max(dif.d[1], dif.d[2]);
  const double diffusive = g.h() * g.h() / (2.0 * g.dimension() * dmax);
  double vmax = 0.0;
  for (double x : state.v) vmax = std::max(vmax, x);
  // Explicit loss of u1 (or u4) stays below the available mass.
  const double kmax = std::max(kin.k1 * kin.k2, kin.l1 * kin.l2);
  const double reactive = vmax > 0.0 ? kin.a3() / (kmax * vmax) : std::numeric_limits<double>::infinity();
  return std::min(diffusive, reactive);
}

namespace {

class ReducedStepper {
 public:
  ReducedStepper(const KineticParams& kin, const DiffusionParams& dif, double dt, const Grid& g)
      : kin_(kin), dif_(dif), dt_(dt), grid_(g), d1_(dif.d[0], dt, g, DiffusionMethod::ImplicitEuler),
        d4_(dif.d[3], dt, g, DiffusionMethod::ImplicitEuler), work_(g.cells()), flux_(g.cells()) {
    const double dmax = std::max(dif.d[1], dif.d[2]);
    if (dt > g.h() * g.h() / (2.0 * g.dimension() * dmax))
      throw Error(ErrorCode::CflViolation, "dt = " + std::to_string(dt) + " exceeds h^2/(2 dim max(d2, d3))");
  }

  void advance(ReducedState& s) {
    if (dt_ > reduced_max_dt(s, kin_, dif_, grid_))
      throw Error(ErrorCode::CflViolation, "explicit reaction step would remove more substrate than present");
    const double kk = kin_.k1 * kin_.k2;
    const double ll = kin_.l1 * kin_.l2;
    const std::size_t n = s.cells();

    // Effective enzyme flux D v with D = d2 (1 - phi) + d3 phi, from the old state.
    for (std::size_t i = 0; i < n; ++i) {
      const double f = phi(s.u1[i], s.u4[i], kin_);
      flux_[i] = (dif_.d[1] * (1.0 - f) + dif_.d[2] * f) * s.v[i];
    }

    for (std::size_t i = 0; i < n; ++i) {
      const double scale = dt_ * s.v[i] / (kin_.k1 * s.u1[i] + kin_.l2 * s.u4[i] + kin_.a3());
      const double fwd = kk * scale;  // fraction of u1 converted
      const double bwd = ll * scale;  // fraction of u4 converted back
      const double u1 = s.u1[i];
      const double u4 = s.u4[i];
      s.u1[i] = u1 * (1.0 - fwd) + u4 * bwd;
      s.u4[i] = u4 * (1.0 - bwd) + u1 * fwd;
    }
    d1_.apply(s.u1, work_);
    d4_.apply(s.u4, work_);

    update_v(s.v);
  }

 private:
  void update_v(Field& v) {
    const int n = grid_.n();
    const double c = dt_ / (grid_.h() * grid_.h());
    if (grid_.dimension() == 1) {
      for (int i = 0; i < n; ++i) {
        double nb = 0.0;
        int deg = 0;
        if (i > 0) nb += flux_[i - 1], ++deg;
        if (i < n - 1) nb += flux_[i + 1], ++deg;
        const double d_eff = v[i] > 0.0 ? flux_[i] / v[i] : 0.0;
        work_[i] = v[i] * (1.0 - c * deg * d_eff) + c * nb;
      }
    } else {
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          const std::size_t k = std::size_t(j) * n + i;
          double nb = 0.0;
          int deg = 0;
          if (i > 0) nb += flux_[k - 1], ++deg;
          if (i < n - 1) nb += flux_[k + 1], ++deg;
          if (j > 0) nb += flux_[k - n], ++deg;
          if (j < n - 1) nb += flux_[k + n], ++deg;
          const double d_eff = v[k] > 0.0 ? flux_[k] / v[k] : 0.0;
          work_[k] = v[k] * (1.0 - c * deg * d_eff) + c * nb;
        }
    }
    v.swap(work_);
  }

  KineticParams kin_;
  DiffusionParams dif_;
  double dt_;
  Grid grid_;
  DiffusionOperator d1_, d4_;
  Field work_, flux_;
};

void check_state(const ReducedState& s, const Grid& g) {
  if (!s.consistent()) throw Error(ErrorCode::SizeMismatch, "reduced arrays differ in length");
  g.check_size(s.u1);
  if (!s.all_finite()) throw Error(ErrorCode::NonFiniteState, "reduced state is not finite");
  if (s.min_value() < 0.0) throw Error(ErrorCode::NegativeState, "reduced state must be nonnegative");
}

}  // namespace

ReducedState reduced_step(const ReducedState& state, const KineticParams& kin, const DiffusionParams& dif, double dt,
                          const Grid& g) {
  check_state(state, g);
  ReducedState out = state;
  ReducedStepper(kin, dif, dt, g).advance(out);
  return out;
}

ReducedTrajectory simulate_reduced(const ReducedState& init, const KineticParams& kin, const DiffusionParams& dif,
                                   const SplitStepConfig& cfg, const Grid& g) {
  if (auto err = validate_params(kin, dif)) throw Error(*err, "invalid parameters");
  check_state(init, g);
  if (!(cfg.T >= 0.0) || !(cfg.dt > 0.0) || cfg.snapshot_every < 1)
    throw Error(ErrorCode::InvalidSpec, "need T >= 0, dt > 0, snapshot_every >= 1");

  ReducedTrajectory traj;
  traj.grid = g;
  traj.times.push_back(0.0);
  traj.states.push_back(init);
  traj.dt_used = cfg.dt;
  if (cfg.T == 0.0) return traj;

  const long steps = std::max(1L, long(std::ceil(cfg.T / cfg.dt * (1.0 - 1e-12))));
  const double dt = cfg.T / double(steps);
  traj.dt_used = dt;
  ReducedStepper stepper(kin, dif, dt, g);
  ReducedState s = init;
  for (long k = 1; k <= steps; ++k) {
    stepper.advance(s);
    if (!s.all_finite())
      throw Error(ErrorCode::NonFiniteState, "reduced state diverged at step " + std::to_string(k));
    if (k % cfg.snapshot_every == 0 || k == steps) {
      traj.times.push_back(k == steps ? cfg.T : double(k) * dt);
      traj.states.push_back(s);
    }
  }
  return traj;
}

std::pair<Field, Field> reconstruct_u23(const ReducedState& state, const KineticParams& kin) {
  const std::size_t n = state.cells();
  Field u2(n), u3(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a2 = kin.k1 * state.u1[i] + kin.l2 * state.u4[i];
    const double den = a2 + kin.a3();
    u3[i] = a2 * state.v[i] / den;
    u2[i] = kin.a3() * state.v[i] / den;
  }
  return {std::move(u2), std::move(u3)};
}

StateField to_full_state(const ReducedState& state, const KineticParams& kin) {
  auto [u2, u3] = reconstruct_u23(state, kin);
  return StateField(state.u1, std::move(u2), std::move(u3), state.u4);
}

ReducedState to_reduced_state(const StateField& state) { return ReducedState(state[0], state.v(), state[3]); }

}  // namespace mmlimit
