#pragma once

// Limit system as eps -> 0 for v = u2 + u3:
//
//   d_t u1 - d1 Lap u1 = -R,   d_t u4 - d4 Lap u4 = +R,
//   d_t v  = Lap[(d2 (1 - phi) + d3 phi) v],
//
// with phi = (k1 u1 + l2 u4) / (k1 u1 + l2 u4 + k2 + l1) and
// R = (k1 k2 u1 - l1 l2 u4) v / (k1 u1 + l2 u4 + k2 + l1).

#include <utility>

#include "mmlimit/core_types.hpp"
#include "mmlimit/fast_slow.hpp"

namespace mmlimit {

/// Complex fraction of the total enzyme on the critical manifold, in [0, 1).
double phi(double u1, double u4, const KineticParams& kin) noexcept;

/// Net conversion rate substrate -> product in the limit system.
double mm_rate(double u1, double u4, double v, const KineticParams& kin) noexcept;

/// Largest step the explicit v-update (and explicit reaction) accept on this grid.
double reduced_max_dt(const ReducedState& state, const KineticParams& kin, const DiffusionParams& dif,
                      const Grid& g);

/// One IMEX step: implicit diffusion for u1, u4, explicit reaction, explicit conservative v-update.
/// Throws CflViolation when dt exceeds reduced_max_dt.
ReducedState reduced_step(const ReducedState& state, const KineticParams& kin, const DiffusionParams& dif, double dt,
                          const Grid& g);

ReducedTrajectory simulate_reduced(const ReducedState& init, const KineticParams& kin, const DiffusionParams& dif,
                                   const SplitStepConfig& cfg, const Grid& g);

/// (u2, u3) = ((1 - phi) v, phi v).
std::pair<Field, Field> reconstruct_u23(const ReducedState& state, const KineticParams& kin);

/// Full state on the critical manifold: (u1, (1 - phi) v, phi v, u4).
StateField to_full_state(const ReducedState& state, const KineticParams& kin);

/// (u1, u2 + u3, u4).
ReducedState to_reduced_state(const StateField& state);

}  // namespace mmlimit
