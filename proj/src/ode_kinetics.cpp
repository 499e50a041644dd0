#include "mmlimit/ode_kinetics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mmlimit {

OdeState full_ode_rhs(const OdeState& st, const KineticParams& kin) noexcept {
  const double bind = kin.k1 * st.s * st.e;
  const double rebind = kin.l2 * st.e * st.p;
  const double release = (kin.l1 + kin.k2) * st.c;
  return OdeState{
      -bind + kin.l1 * st.c,
      -bind + release - rebind,
      bind - release + rebind,
      kin.k2 * st.c - rebind,
  };
}

double mm_ode_rhs(double s, double e0_plus_c0, const KineticParams& kin) noexcept {
  return -kin.k1 * kin.k2 * e0_plus_c0 * s / (kin.k1 * s + kin.l1 + kin.k2);
}

OdeVector to_vector(const OdeState& st) { return {st.s, st.e, st.c, st.p}; }

OdeState to_ode_state(const OdeVector& y) { return OdeState{y.at(0), y.at(1), y.at(2), y.at(3)}; }

TimeSeries integrate_ode(const OdeRhs& rhs, const OdeVector& init, double T, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidSpec, "dt must be > 0");
  if (!(T >= 0.0)) throw Error(ErrorCode::InvalidSpec, "T must be >= 0");
  TimeSeries ts;
  ts.times.push_back(0.0);
  ts.values.push_back(init);
  if (T == 0.0) return ts;

  const long steps = std::max(1L, long(std::ceil(T / dt * (1.0 - 1e-12))));
  const double h = T / double(steps);
  const std::size_t m = init.size();
  ts.times.reserve(std::size_t(steps) + 1);
  ts.values.reserve(std::size_t(steps) + 1);

  OdeVector y = init, tmp(m);
  for (long k = 1; k <= steps; ++k) {
    const OdeVector k1 = rhs(y);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
    const OdeVector k2 = rhs(tmp);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
    const OdeVector k3 = rhs(tmp);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + h * k3[i];
    const OdeVector k4 = rhs(tmp);
    bool negative = false;
    for (std::size_t i = 0; i < m; ++i) {
      y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (!std::isfinite(y[i]))
        throw Error(ErrorCode::NonFiniteState, "ODE solution diverged at step " + std::to_string(k));
      negative = negative || y[i] < 0.0;
    }
    if (negative) ++ts.negative_steps;
    ts.times.push_back(k == steps ? T : double(k) * h);
    ts.values.push_back(y);
  }
  return ts;
}

QssaComparison qssa_compare(const KineticParams& kin, double s0, double eps, double T, double dt,
                            double layer_factor) {
  if (!(eps >= 0.0) || !(eps < 1.0)) throw Error(ErrorCode::InvalidSpec, "enzyme ratio must lie in [0, 1)");
  if (!kin.irreversible())
    throw Error(ErrorCode::InvalidSpec, "the Michaelis-Menten reduction is stated for l2 = 0");
  if (!(s0 >= 0.0)) throw Error(ErrorCode::NegativeState, "s0 must be >= 0");

  QssaComparison out;
  out.layer_length = layer_factor * eps;
  if (eps == 0.0 || T == 0.0) {
    // No enzyme (or no time): both substrates stay at s0.
    out.full.times = {0.0};
    out.full.values = {{s0, eps * s0, 0.0, 0.0}};
    out.mm.times = {0.0};
    out.mm.values = {{s0}};
    return out;
  }

  const double e0 = eps * s0;
  const double tau_end = T / eps;
  const double dtau = dt / eps;
  out.full = integrate_ode(
      [&kin](const OdeVector& y) { return to_vector(full_ode_rhs(to_ode_state(y), kin)); },
      {s0, e0, 0.0, 0.0}, tau_end, dtau);
  out.mm = integrate_ode([&kin, e0](const OdeVector& y) { return OdeVector{mm_ode_rhs(y[0], e0, kin)}; }, {s0},
                         tau_end, dtau);

  for (auto* ts : {&out.full, &out.mm})
    for (double& t : ts->times) t *= eps;

  for (std::size_t k = 0; k < out.full.times.size(); ++k) {
    const double gap = std::abs(out.full.values[k][0] - out.mm.values[k][0]);
    out.sup_gap = std::max(out.sup_gap, gap);
    if (out.full.times[k] >= out.layer_length) out.sup_gap_post_layer = std::max(out.sup_gap_post_layer, gap);
  }
  return out;
}

}  // namespace mmlimit
