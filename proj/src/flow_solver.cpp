#include "mopflow/flow_solver.hpp"

#include <cmath>
#include <string>

#include "mopflow/imaging.hpp"

namespace mopflow {

std::pair<FlowField, std::vector<EnergyBreakdown>> solve_level(
    const Grid& i1, const Grid& i2, const FlowField& init, const EnergyConfig& cfg,
    const SolverConfig& scfg, const BinaryMask* occlusion) {
  scfg.validate();
  if (!same_shape(i1, init.u))
    throw std::invalid_argument("solve_level: init flow shape differs from images");

  FlowField flow = init;
  const int h = flow.height();
  const int w = flow.width();
  Grid mu = Grid::Zero(h, w), mv = Grid::Zero(h, w);  // first moments
  Grid vu = Grid::Zero(h, w), vv = Grid::Zero(h, w);  // second moments
  const double b1 = scfg.adam_beta1;
  const double b2 = scfg.adam_beta2;
  const double adam_eps = 1e-8;

  std::vector<EnergyBreakdown> trace;
  trace.reserve(scfg.steps_per_level + 1);
  EnergyBreakdown cur = total_energy(i1, i2, flow, cfg, occlusion);
  if (!std::isfinite(cur.total))
    throw std::runtime_error("solve_level: non-finite energy at iteration 0");
  trace.push_back(cur);

  double scale = 1.0;
  FlowField grad;
  bool grad_valid = false;
  for (int t = 1; t <= scfg.steps_per_level; ++t) {
    if (!grad_valid) grad = energy_gradient(i1, i2, flow, cfg, occlusion);
    mu = b1 * mu + (1.0 - b1) * grad.u;
    mv = b1 * mv + (1.0 - b1) * grad.v;
    vu = b2 * vu + (1.0 - b2) * grad.u.square();
    vv = b2 * vv + (1.0 - b2) * grad.v.square();
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    const double lr = scfg.step_size * scale;
    FlowField trial(flow.u - lr * (mu / c1) / ((vu / c2).sqrt() + adam_eps),
                    flow.v - lr * (mv / c1) / ((vv / c2).sqrt() + adam_eps));
    const EnergyBreakdown bd = total_energy(i1, i2, trial, cfg, occlusion);
    if (!std::isfinite(bd.total))
      throw std::runtime_error("solve_level: non-finite energy at iteration " + std::to_string(t));
    if (bd.total <= cur.total) {
      flow = std::move(trial);
      cur = bd;
      grad_valid = false;
      scale = std::min(1.0, scale * 1.25);
    } else {
      // revert and shrink; the moments keep their update
      grad_valid = true;
      scale *= 0.5;
    }
    trace.push_back(cur);
  }
  return {std::move(flow), std::move(trace)};
}

FlowField solve_pyramid(const Grid& i1, const Grid& i2, const EnergyConfig& cfg,
                        const SolverConfig& scfg,
                        std::vector<EnergyBreakdown>* finest_trace) {
  scfg.validate();
  if (!same_shape(i1, i2)) throw std::invalid_argument("solve_pyramid: image shapes differ");
  const int min_dim = static_cast<int>(std::min(i1.rows(), i1.cols()));
  if (min_dim < (1 << (scfg.levels - 1)))
    throw std::invalid_argument("solve_pyramid: image too small for requested pyramid depth");

  std::vector<Grid> pyr1{i1}, pyr2{i2};
  for (int l = 1; l < scfg.levels; ++l) {
    pyr1.push_back(downsample_half(pyr1.back()));
    pyr2.push_back(downsample_half(pyr2.back()));
  }

  FlowField flow = FlowField::zero(static_cast<int>(pyr1.back().rows()),
                                   static_cast<int>(pyr1.back().cols()));
  for (int l = scfg.levels - 1; l >= 0; --l) {
    if (l < scfg.levels - 1)
      flow = upsample_flow(flow, static_cast<int>(pyr1[l].rows()),
                           static_cast<int>(pyr1[l].cols()));
    auto [solved, trace] = solve_level(pyr1[l], pyr2[l], flow, cfg, scfg);
    flow = std::move(solved);
    if (l == 0 && finest_trace) *finest_trace = std::move(trace);
  }
  return flow;
}

BinaryMask occlusion_mask(const FlowField& forward, const FlowField& backward,
                          double alpha1, double alpha2) {
  if (!same_shape(forward.u, backward.u))
    throw std::invalid_argument("occlusion_mask: field shapes differ");
  const int h = forward.height();
  const int w = forward.width();
  BinaryMask mask(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double uf = forward.u(y, x);
      const double vf = forward.v(y, x);
      const double ub = bilinear_sample(backward.u, x + uf, y + vf);
      const double vb = bilinear_sample(backward.v, x + uf, y + vf);
      const double du = uf + ub;
      const double dv = vf + vb;
      const double lhs = du * du + dv * dv;
      const double rhs = alpha1 * (uf * uf + vf * vf + ub * ub + vb * vb) + alpha2;
      mask(y, x) = lhs > rhs;
    }
  }
  return mask;
}

FlowPairResult solve_bidirectional(const Grid& i1, const Grid& i2, const EnergyConfig& cfg,
                                   const SolverConfig& scfg) {
  if (!scfg.bidirectional)
    throw std::invalid_argument("solve_bidirectional: config has bidirectional = false");
  FlowField fwd = solve_pyramid(i1, i2, cfg, scfg);
  FlowField bwd = solve_pyramid(i2, i1, cfg, scfg);
  BinaryMask occ_fwd = occlusion_mask(fwd, bwd, scfg.occlusion_alpha1, scfg.occlusion_alpha2);
  BinaryMask occ_bwd = occlusion_mask(bwd, fwd, scfg.occlusion_alpha1, scfg.occlusion_alpha2);

  // one occlusion-aware refinement pass per direction at full resolution
  auto [fwd_refined, trace] = solve_level(i1, i2, fwd, cfg, scfg, &occ_fwd);
  auto [bwd_refined, trace_b] = solve_level(i2, i1, bwd, cfg, scfg, &occ_bwd);

  FlowPairResult result;
  result.forward = std::move(fwd_refined);
  result.backward = std::move(bwd_refined);
  result.occlusion_fwd = std::move(occ_fwd);
  result.energy_trace = std::move(trace);
  return result;
}

}  // namespace mopflow
