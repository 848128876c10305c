#pragma once

#include <cstdint>
#include <utility>

#include "mopflow/flow_energy.hpp"
#include "mopflow/types.hpp"

// Synthetic instance builders and reference computations shared by the
// selftest subcommand and the test suites.
namespace mopflow::synth {

// Deterministic band-limited texture in [0.1, 0.9].
Grid smooth_texture(int height, int width, std::uint64_t seed);

// I2(x) = I1(x - shift) with the left border clamped; ground-truth flow for
// solving I1 -> I2 is (shift, 0) away from the border.
std::pair<Grid, Grid> shifted_pair(const Grid& i1, int shift);

// Mean endpoint error against a constant ground-truth flow, excluding a
// border strip.
double mean_endpoint_error(const FlowField& flow, double gt_u, double gt_v, int border);

// Random energy instance conditioned for finite-difference gradient checks:
// every Charbonnier argument is bounded away from the origin and warp sample
// positions keep clear of bilinear cell boundaries, so a central difference
// with step 1e-4 resolves the analytic gradient.
struct FdInstance {
  Grid i1, i2;
  FlowField flow;
  BinaryMask occlusion;
  bool use_occlusion = false;
};
FdInstance make_fd_instance(int height, int width, std::uint64_t seed, bool with_occlusion);

// Central finite differences of total_energy; independent reference for
// energy_gradient.
FlowField fd_energy_gradient(const Grid& i1, const Grid& i2, const FlowField& flow,
                             const EnergyConfig& cfg, const BinaryMask* occlusion, double step);

// max over components of |a - b| / max(|a|, |b|, 1)
double max_rel_err(const FlowField& a, const FlowField& b);

}  // namespace mopflow::synth

#include "mopflow/segnet_micro.hpp"

namespace mopflow::synth {

// Flat mutable views over every learnable parameter, in a fixed order.
std::vector<std::pair<double*, long>> learnable_views(NetParams& params);

// Train-mode loss evaluation used by finite-difference parameter checks.
double train_loss_of(const NetParams& params, const Tensor& x, const BinaryMask& target);

}  // namespace mopflow::synth
