#pragma once

#include "mopflow/types.hpp"

namespace mopflow {

struct EnergyConfig {
  double epsilon = 1e-3;  // Charbonnier constant
  double lambda = 1.0;    // data-term weight

  void validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("EnergyConfig: epsilon must be > 0");
    if (!(lambda > 0.0)) throw std::invalid_argument("EnergyConfig: lambda must be > 0");
  }

  friend bool operator==(const EnergyConfig&, const EnergyConfig&) = default;
};

struct EnergyBreakdown {
  double data = 0.0;
  double smooth = 0.0;
  double total = 0.0;  // lambda * data + smooth
};

// Psi(x) = sqrt(x^2 + eps^2), the smooth robust penalty.
inline double charbonnier(double x, double epsilon) {
  return std::sqrt(x * x + epsilon * epsilon);
}

// Psi'(x) = x / Psi(x).
inline double charbonnier_deriv(double x, double epsilon) {
  return x / charbonnier(x, epsilon);
}

// Photometric + gradient-constancy cost of warping I2 by flow onto I1, summed
// over non-occluded pixels. The lambda prefactor is applied by total_energy.
double data_term(const Grid& i1, const Grid& i2, const FlowField& flow,
                 const EnergyConfig& cfg, const BinaryMask* occlusion = nullptr);

// Charbonnier of the four forward differences of (u, v); differences that
// would leave the grid are omitted.
double smoothness_term(const FlowField& flow, const EnergyConfig& cfg);

EnergyBreakdown total_energy(const Grid& i1, const Grid& i2, const FlowField& flow,
                             const EnergyConfig& cfg, const BinaryMask* occlusion = nullptr);

// Analytic gradient of total_energy with respect to every flow component,
// using the bilinear-warp sub-gradient. Returned as a field of
// (dE/du, dE/dv) per pixel. If breakdown is non-null it receives the energy
// evaluated at the same flow.
FlowField energy_gradient(const Grid& i1, const Grid& i2, const FlowField& flow,
                          const EnergyConfig& cfg, const BinaryMask* occlusion = nullptr,
                          EnergyBreakdown* breakdown = nullptr);

}  // namespace mopflow
