#pragma once

// Spatially homogeneous enzyme kinetics: the mass-action ODE and its
// Michaelis-Menten reduction.

#include <array>
#include <functional>
#include <vector>

#include "mmlimit/core_types.hpp"

namespace mmlimit {

struct OdeState {
  double s = 0.0;  // substrate
  double e = 0.0;  // free enzyme
  double c = 0.0;  // complex
  double p = 0.0;  // product
};

/// Mass-action right-hand side, including the l2 back reaction E + P -> C.
OdeState full_ode_rhs(const OdeState& st, const KineticParams& kin) noexcept;

/// s' = -k1 k2 (e0 + c0) s / (k1 s + l1 + k2).
double mm_ode_rhs(double s, double e0_plus_c0, const KineticParams& kin) noexcept;

using OdeVector = std::vector<double>;
using OdeRhs = std::function<OdeVector(const OdeVector&)>;

struct TimeSeries {
  std::vector<double> times;
  std::vector<OdeVector> values;
  /// Steps at which some component went negative (reported, never clamped).
  long negative_steps = 0;
};

/// Classical fixed-step RK4 on [0, T]; the step is shrunk to T / ceil(T / dt).
/// Throws NonFiniteState if the solution stops being finite.
TimeSeries integrate_ode(const OdeRhs& rhs, const OdeVector& init, double T, double dt);

OdeVector to_vector(const OdeState& st);
OdeState to_ode_state(const OdeVector& y);

struct QssaComparison {
  double sup_gap = 0.0;             // over the whole horizon
  double sup_gap_post_layer = 0.0;  // after the initial layer
  double layer_length = 0.0;
  TimeSeries full;  // (s, e, c, p) of the mass-action system
  TimeSeries mm;    // (s) of the Michaelis-Menten equation
};

/// Compares the substrate of the mass-action system with e0 = eps s0, c0 = p0 = 0
/// against the Michaelis-Menten equation from the same s0.
///
/// Both equations are integrated in their own (unscaled) time tau; the horizon,
/// step and layer length are given in the slow time t = eps * tau, which is the
/// time of the rescaled reaction-diffusion system, so `T` means the same
/// amount of substrate turnover for every eps. Reported times are slow times.
/// The initial layer has slow length layer_factor * eps.
QssaComparison qssa_compare(const KineticParams& kin, double s0, double eps, double T, double dt,
                            double layer_factor = 5.0);

}  // namespace mmlimit
