#pragma once

#include <optional>
#include <vector>

#include "mopflow/flow_energy.hpp"
#include "mopflow/types.hpp"

namespace mopflow {

struct SolverConfig {
  int levels = 4;
  int steps_per_level = 250;
  double step_size = 1e-2;  // per-pixel step, in pixels
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double occlusion_alpha1 = 0.01;
  double occlusion_alpha2 = 0.5;
  bool bidirectional = true;

  void validate() const {
    if (levels < 1) throw std::invalid_argument("SolverConfig: levels must be >= 1");
    if (steps_per_level < 1) throw std::invalid_argument("SolverConfig: steps_per_level must be >= 1");
    if (!(step_size > 0.0)) throw std::invalid_argument("SolverConfig: step_size must be > 0");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0)
      throw std::invalid_argument("SolverConfig: betas must lie in [0, 1)");
  }

  friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

struct FlowPairResult {
  FlowField forward;
  std::optional<FlowField> backward;
  std::optional<BinaryMask> occlusion_fwd;
  std::vector<EnergyBreakdown> energy_trace;  // non-increasing totals
};

// Adam-style accept-only minimization of the energy at one resolution.
// A step that would raise the total energy is reverted and the step scale
// halved, so the recorded trace is non-increasing.
std::pair<FlowField, std::vector<EnergyBreakdown>> solve_level(
    const Grid& i1, const Grid& i2, const FlowField& init, const EnergyConfig& cfg,
    const SolverConfig& scfg, const BinaryMask* occlusion = nullptr);

// Coarse-to-fine: box pyramids of both frames, coarsest level solved from
// zero, each result upsampled as the next level's init. finest_trace, when
// non-null, receives the finest level's trace.
FlowField solve_pyramid(const Grid& i1, const Grid& i2, const EnergyConfig& cfg,
                        const SolverConfig& scfg,
                        std::vector<EnergyBreakdown>* finest_trace = nullptr);

// Forward and backward pyramids solved independently, forward-backward
// occlusion masks, then one masked refinement pass per direction at the
// finest level. occlusion_fwd is the mask the forward refinement used.
FlowPairResult solve_bidirectional(const Grid& i1, const Grid& i2, const EnergyConfig& cfg,
                                   const SolverConfig& scfg);

// Pixel occluded iff |w_f(x) + w_b(x + w_f(x))|^2 >
//   alpha1 * (|w_f(x)|^2 + |w_b(x + w_f(x))|^2) + alpha2,
// with bilinear sampling of the backward field.
BinaryMask occlusion_mask(const FlowField& forward, const FlowField& backward,
                          double alpha1, double alpha2);

}  // namespace mopflow
