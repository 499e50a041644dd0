#include "mmlimit/fast_slow.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mmlimit {

namespace {

constexpr double kCgTol = 1e-10;


// Neumaier-compensated sum.
struct Neumaier {
  double sum = 0.0, comp = 0.0;
  void add(double x) {
    const double t = sum + x;
    comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

double accurate_sum(std::span<const double> f) {
  Neumaier acc;
  for (double x : f) acc.add(x);
  return acc.value();
}

std::array<double, 4> accurate_sums4(const std::array<Field, 4>& u) {
  std::array<Neumaier, 4> acc;
  for (std::size_t i = 0; i < u[0].size(); ++i)
    for (std::size_t j = 0; j < 4; ++j) acc[j].add(u[j][i]);
  return {acc[0].value(), acc[1].value(), acc[2].value(), acc[3].value()};
}

void restore_mass(std::span<double> f, double mass_in, double mass_out) {
  if (mass_out > 0.0 && mass_in > 0.0) {
    const double scale = mass_in / mass_out;
    for (double& x : f) x *= scale;
  }
}

// (1 - exp(-z)) / z given em = expm1(-z); continuous at 0.
double phi1(double z, double em) {
  if (z < 1e-8) return 1.0 - 0.5 * z;
  return -em / z;
}

}  // namespace

DiffusionOperator::DiffusionOperator(double d, double tau, const Grid& g, DiffusionMethod method)
    : grid_(g), method_(method) {
  if (!(d >= 0.0)) throw Error(ErrorCode::NonPositiveDiffusivity, "diffusivity must be >= 0");
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidSpec, "diffusion step must be > 0");
  if (method == DiffusionMethod::ImplicitEuler) {
    gamma_ = d * tau;
  } else {
    gamma_ = 0.5 * d * tau;
    explicit_ = 0.5 * d * tau;
    // The explicit half is a nonnegative stencil iff its centre weight is >= 0.
    if (2.0 * g.dimension() * explicit_ / (g.h() * g.h()) > 1.0)
      throw Error(ErrorCode::CflViolation, "Crank-Nicolson step loses positivity: need tau*d*dim <= h^2");
  }
  if (g.dimension() == 1) factor_ = implicit_diffusion_factor(gamma_, g);
}

void DiffusionOperator::explicit_half(std::span<const double> f, std::span<double> out) const {
  // out = f + explicit_ * Lap f, written as a nonnegative combination of f values.
  const int n = grid_.n();
  const double c = explicit_ / (grid_.h() * grid_.h());
  if (grid_.dimension() == 1) {
    out[0] = (1.0 - c) * f[0] + c * f[1];
    for (int i = 1; i < n - 1; ++i) out[i] = (1.0 - 2.0 * c) * f[i] + c * (f[i - 1] + f[i + 1]);
    out[n - 1] = (1.0 - c) * f[n - 1] + c * f[n - 2];
    return;
  }
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const std::size_t k = std::size_t(j) * n + i;
      double nb = 0.0;
      int deg = 0;
      if (i > 0) nb += f[k - 1], ++deg;
      if (i < n - 1) nb += f[k + 1], ++deg;
      if (j > 0) nb += f[k - n], ++deg;
      if (j < n - 1) nb += f[k + n], ++deg;
      out[k] = (1.0 - deg * c) * f[k] + c * nb;
    }
  }
}

void DiffusionOperator::solve_2d(std::span<const double> rhs, std::span<double> x) const {
  const int n = grid_.n();
  const double c = gamma_ / (grid_.h() * grid_.h());
  auto apply = [this](std::span<const double> in, std::span<double> out) {
    const int m = grid_.n();
    const double cc = gamma_ / (grid_.h() * grid_.h());
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i) {
        const std::size_t k = std::size_t(j) * m + i;
        double acc = 0.0;
        if (i > 0) acc += in[k - 1] - in[k];
        if (i < m - 1) acc += in[k + 1] - in[k];
        if (j > 0) acc += in[k - m] - in[k];
        if (j < m - 1) acc += in[k + m] - in[k];
        out[k] = in[k] - cc * acc;
      }
  };
  auto res = solve_cg(apply, rhs, kCgTol, 20 * n * n + 100, rhs);
  // CG leaves round-off sized negatives near zero. A Gauss-Seidel sweep of the
  // M-matrix started from the clipped iterate only adds nonnegative terms.
  for (double& v : res.x) v = std::max(v, 0.0);
  auto sweep = [&](int j, int i) {
    const std::size_t k = std::size_t(j) * n + i;
    double nb = 0.0;
    int deg = 0;
    if (i > 0) nb += res.x[k - 1], ++deg;
    if (i < n - 1) nb += res.x[k + 1], ++deg;
    if (j > 0) nb += res.x[k - n], ++deg;
    if (j < n - 1) nb += res.x[k + n], ++deg;
    res.x[k] = (rhs[k] + c * nb) / (1.0 + deg * c);
  };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) sweep(j, i);
  for (int j = n; j-- > 0;)
    for (int i = n; i-- > 0;) sweep(j, i);
  std::copy(res.x.begin(), res.x.end(), x.begin());
}

void DiffusionOperator::apply(std::span<double> f, std::span<double> work) const {
  if (gamma_ == 0.0) return;
  const double mass_in = accurate_sum(f);
  if (method_ == DiffusionMethod::CrankNicolson)
    explicit_half(f, work);
  else
    std::copy(f.begin(), f.end(), work.begin());
  if (grid_.dimension() == 1)
    factor_.solve(work, f);
  else
    solve_2d(work, f);
  // Exact solves conserve mass; the eliminations carry a round-off bias of a
  // consistent sign that adds up over millions of steps. Remove it.
  restore_mass(f, mass_in, accurate_sum(f));
}

void DiffusionOperator::apply4(const std::array<DiffusionOperator, 4>& ops, std::array<Field, 4>& u,
                               std::array<Field, 4>& work) {
  bool batch = true;
  for (const auto& op : ops) batch = batch && op.grid_.dimension() == 1 && op.gamma_ != 0.0;
  if (!batch) {
    for (std::size_t j = 0; j < 4; ++j) ops[j].apply(u[j], work[j]);
    return;
  }
  const auto mass_in = accurate_sums4(u);
  for (std::size_t j = 0; j < 4; ++j) {
    if (ops[j].method_ == DiffusionMethod::CrankNicolson)
      ops[j].explicit_half(u[j], work[j]);
    else
      std::copy(u[j].begin(), u[j].end(), work[j].begin());
  }
  TridiagonalFactor::solve4({&ops[0].factor_, &ops[1].factor_, &ops[2].factor_, &ops[3].factor_},
                            {work[0], work[1], work[2], work[3]}, {u[0], u[1], u[2], u[3]});
  const auto mass_out = accurate_sums4(u);
  for (std::size_t j = 0; j < 4; ++j) restore_mass(u[j], mass_in[j], mass_out[j]);
}

Field diffusion_step(const Field& f, double d, double dt, const Grid& g, DiffusionMethod method) {
  g.check_size(f);
  Field out = f;
  if (d == 0.0) return out;
  Field work(f.size());
  DiffusionOperator(d, dt, g, method).apply(out, work);
  return out;
}

void fast_reaction_inplace(StateField& s, const KineticParams& kin, double eps, double dt) {
  const double a3 = kin.a3();
  const double ratio = dt / eps;
  Field& u1 = s[0];
  Field& u2 = s[1];
  Field& u3 = s[2];
  const Field& u4 = s[3];
  for (std::size_t i = 0; i < u1.size(); ++i) {
    const double a2 = kin.k1 * u1[i] + kin.l2 * u4[i];
    const double rate = a2 + a3;
    const double v = u2[i] + u3[i];
    const double relax = -std::expm1(-rate * ratio);
    const double keep = 1.0 - relax;
    // Convex move toward the equilibrium (a3, a2) v / (a2 + a3).
    u2[i] = keep * u2[i] + relax * (a3 * v / rate);
    u3[i] = keep * u3[i] + relax * (a2 * v / rate);
  }
}

StateField fast_reaction_step(const StateField& state, const KineticParams& kin, double eps, double dt) {
  StateField out = state;
  fast_reaction_inplace(out, kin, eps, dt);
  return out;
}

void slow_reaction_inplace(StateField& s, const KineticParams& kin, double dt, SlowMethod method) {
  Field& u1 = s[0];
  const Field& u2 = s[1];
  const Field& u3 = s[2];
  Field& u4 = s[3];
  if (method == SlowMethod::SemiImplicit) {
    for (std::size_t i = 0; i < u1.size(); ++i) {
      u1[i] = (u1[i] + dt * kin.l1 * u3[i]) / (1.0 + dt * kin.k1 * u2[i]);
      u4[i] = (u4[i] + dt * kin.k2 * u3[i]) / (1.0 + dt * kin.l2 * u2[i]);
    }
    return;
  }
  // With u2, u3 frozen each equation is y' = g - a y with constant a, g >= 0:
  // y(dt) = y e^{-a dt} + g dt (1 - e^{-a dt}) / (a dt).
  for (std::size_t i = 0; i < u1.size(); ++i) {
    const double z1 = kin.k1 * u2[i] * dt;
    const double em1 = std::expm1(-z1);
    u1[i] = u1[i] * (1.0 + em1) + kin.l1 * u3[i] * dt * phi1(z1, em1);
  }
  if (kin.l2 == 0.0) {
    for (std::size_t i = 0; i < u4.size(); ++i) u4[i] += kin.k2 * u3[i] * dt;
    return;
  }
  for (std::size_t i = 0; i < u4.size(); ++i) {
    const double z4 = kin.l2 * u2[i] * dt;
    const double em4 = std::expm1(-z4);
    u4[i] = u4[i] * (1.0 + em4) + kin.k2 * u3[i] * dt * phi1(z4, em4);
  }
}

StateField slow_reaction_step(const StateField& state, const KineticParams& kin, double dt, SlowMethod method) {
  StateField out = state;
  slow_reaction_inplace(out, kin, dt, method);
  return out;
}

SplitIntegrator::SplitIntegrator(const KineticParams& kin, const DiffusionParams& dif, double eps, double dt,
                                 const Grid& g, Scheme scheme, DiffusionMethod diffusion, SlowMethod slow)
    : kin_(kin), eps_(eps), dt_(dt), scheme_(scheme), slow_(slow) {
  work_.fill(Field(g.cells()));
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidSpec, "eps must be > 0");
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidSpec, "dt must be > 0");
  const auto d = dif.at(eps);
  const double tau = scheme == Scheme::Strang ? 0.5 * dt : dt;
  for (std::size_t j = 0; j < 4; ++j) ops_[j] = DiffusionOperator(d[j], tau, g, diffusion);
}

void SplitIntegrator::diffuse(StateField& state, const std::array<DiffusionOperator, 4>& ops) {
  DiffusionOperator::apply4(ops, state.u, work_);
}

void SplitIntegrator::advance(StateField& state) {
  if (scheme_ == Scheme::Lie) {
    fast_reaction_inplace(state, kin_, eps_, dt_);
    slow_reaction_inplace(state, kin_, dt_, slow_);
    diffuse(state, ops_);
    return;
  }
  const double half = 0.5 * dt_;
  diffuse(state, ops_);
  slow_reaction_inplace(state, kin_, half, slow_);
  fast_reaction_inplace(state, kin_, eps_, dt_);
  slow_reaction_inplace(state, kin_, half, slow_);
  diffuse(state, ops_);
}

StateField step(const StateField& state, const KineticParams& kin, const DiffusionParams& dif, double eps, double dt,
                const Grid& g, Scheme scheme, DiffusionMethod diffusion, SlowMethod slow) {
  if (!state.consistent()) throw Error(ErrorCode::SizeMismatch, "species arrays differ in length");
  g.check_size(state[0]);
  StateField out = state;
  SplitIntegrator integ(kin, dif, eps, dt, g, scheme, diffusion, slow);
  integ.advance(out);
  return out;
}

Trajectory simulate(const StateField& init, const KineticParams& kin, const DiffusionParams& dif, double eps,
                    const SplitStepConfig& cfg, const Grid& g) {
  if (auto err = validate_params(kin, dif)) throw Error(*err, "invalid parameters");
  if (!init.consistent()) throw Error(ErrorCode::SizeMismatch, "species arrays differ in length");
  g.check_size(init[0]);
  if (!init.all_finite()) throw Error(ErrorCode::NonFiniteState, "initial state is not finite");
  if (init.min_value() < 0.0) throw Error(ErrorCode::NegativeState, "initial state must be nonnegative");
  if (!(cfg.T >= 0.0) || !(cfg.dt > 0.0) || cfg.snapshot_every < 1)
    throw Error(ErrorCode::InvalidSpec, "need T >= 0, dt > 0, snapshot_every >= 1");

  Trajectory traj;
  traj.grid = g;
  traj.times.push_back(0.0);
  traj.states.push_back(init);
  if (cfg.T == 0.0) {
    traj.dt_used = cfg.dt;
    return traj;
  }
  const long steps = std::max(1L, long(std::ceil(cfg.T / cfg.dt * (1.0 - 1e-12))));
  const double dt = cfg.T / double(steps);
  traj.dt_used = dt;

  SplitIntegrator integ(kin, dif, eps, dt, g, cfg.scheme, cfg.diffusion, cfg.slow);
  StateField state = init;
  for (long k = 1; k <= steps; ++k) {
    integ.advance(state);
    if (!state.all_finite())
      throw Error(ErrorCode::NonFiniteState, "state diverged at step " + std::to_string(k) + " (t = " +
                                                 std::to_string(double(k) * dt) + ")");
    if (k % cfg.snapshot_every == 0 || k == steps) {
      traj.times.push_back(k == steps ? cfg.T : double(k) * dt);
      traj.states.push_back(state);
    }
  }
  return traj;
}

}  // namespace mmlimit
