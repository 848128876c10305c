#include "mopflow/flow_energy.hpp"

#include <cmath>

#include "mopflow/imaging.hpp"

namespace mopflow {
namespace {

void check_shapes(const Grid& i1, const Grid& i2, const FlowField& flow,
                  const BinaryMask* occlusion) {
  if (!same_shape(i1, i2) || !same_shape(i1, flow.u))
    throw std::invalid_argument("flow_energy: image and flow shapes differ");
  if (occlusion && !same_shape(i1, *occlusion))
    throw std::invalid_argument("flow_energy: occlusion mask shape differs");
}

// Backward warp of img by flow together with the sub-gradient of each sample
// with respect to the flow components. Clamped sample coordinates have zero
// derivative on the clamped axis.
struct WarpDeriv {
  Grid value, du, dv;
};

WarpDeriv warp_with_deriv(const Grid& img, const FlowField& flow, bool want_deriv) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  WarpDeriv out;
  out.value.resize(h, w);
  if (want_deriv) {
    out.du = Grid::Zero(h, w);
    out.dv = Grid::Zero(h, w);
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double px = x + flow.u(y, x);
      const double py = y + flow.v(y, x);
      const bool in_x = px >= 0.0 && px <= w - 1;
      const bool in_y = py >= 0.0 && py <= h - 1;
      const double sx = std::clamp(px, 0.0, static_cast<double>(w - 1));
      const double sy = std::clamp(py, 0.0, static_cast<double>(h - 1));
      const int x0 = std::min(static_cast<int>(std::floor(sx)), w - 2);
      const int y0 = std::min(static_cast<int>(std::floor(sy)), h - 2);
      const double fx = sx - x0;
      const double fy = sy - y0;
      const double v00 = img(y0, x0), v01 = img(y0, x0 + 1);
      const double v10 = img(y0 + 1, x0), v11 = img(y0 + 1, x0 + 1);
      out.value(y, x) = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
                        fy * ((1.0 - fx) * v10 + fx * v11);
      if (want_deriv) {
        if (in_x) out.du(y, x) = (1.0 - fy) * (v01 - v00) + fy * (v11 - v10);
        if (in_y) out.dv(y, x) = (1.0 - fx) * (v10 - v00) + fx * (v11 - v01);
      }
    }
  }
  return out;
}

// Adjoint of the spatial_gradients x-operator (central interior, one-sided
// borders).
Grid gradient_x_adjoint(const Grid& a) {
  const int h = static_cast<int>(a.rows());
  const int w = static_cast<int>(a.cols());
  Grid out = Grid::Zero(h, w);
  for (int y = 0; y < h; ++y) {
    out(y, 0) -= a(y, 0);
    out(y, 1) += a(y, 0);
    for (int x = 1; x < w - 1; ++x) {
      out(y, x + 1) += 0.5 * a(y, x);
      out(y, x - 1) -= 0.5 * a(y, x);
    }
    out(y, w - 1) += a(y, w - 1);
    out(y, w - 2) -= a(y, w - 1);
  }
  return out;
}

Grid gradient_y_adjoint(const Grid& a) {
  const int h = static_cast<int>(a.rows());
  const int w = static_cast<int>(a.cols());
  Grid out = Grid::Zero(h, w);
  for (int x = 0; x < w; ++x) {
    out(0, x) -= a(0, x);
    out(1, x) += a(0, x);
    out(h - 1, x) += a(h - 1, x);
    out(h - 2, x) -= a(h - 1, x);
  }
  for (int y = 1; y < h - 1; ++y)
    for (int x = 0; x < w; ++x) {
      out(y + 1, x) += 0.5 * a(y, x);
      out(y - 1, x) -= 0.5 * a(y, x);
    }
  return out;
}

// Shared evaluation; fills breakdown and, when grad is non-null, the analytic
// gradient. Summation is row-major for bit-reproducibility.
void eval_energy(const Grid& i1, const Grid& i2, const FlowField& flow,
                 const EnergyConfig& cfg, const BinaryMask* occlusion,
                 EnergyBreakdown* breakdown, FlowField* grad) {
  check_shapes(i1, i2, flow, occlusion);
  cfg.validate();
  const int h = static_cast<int>(i1.rows());
  const int w = static_cast<int>(i1.cols());
  const double eps = cfg.epsilon;

  const WarpDeriv wd = warp_with_deriv(i2, flow, grad != nullptr);
  const auto [gx1, gy1] = spatial_gradients(i1);
  const auto [gxw, gyw] = spatial_gradients(wd.value);

  double data = 0.0;
  Grid psi0, psix, psiy;
  if (grad) {
    psi0 = Grid::Zero(h, w);
    psix = Grid::Zero(h, w);
    psiy = Grid::Zero(h, w);
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (occlusion && (*occlusion)(y, x)) continue;
      const double d0 = i1(y, x) - wd.value(y, x);
      const double dx = gx1(y, x) - gxw(y, x);
      const double dy = gy1(y, x) - gyw(y, x);
      data += charbonnier(d0, eps) + charbonnier(dx, eps) + charbonnier(dy, eps);
      if (grad) {
        psi0(y, x) = charbonnier_deriv(d0, eps);
        psix(y, x) = charbonnier_deriv(dx, eps);
        psiy(y, x) = charbonnier_deriv(dy, eps);
      }
    }
  }

  const double smooth = smoothness_term(flow, cfg);

  if (breakdown) {
    breakdown->data = data;
    breakdown->smooth = smooth;
    breakdown->total = cfg.lambda * data + smooth;
  }

  if (grad) {
    // dE_data/dW = -(psi0 + Gx^T psix + Gy^T psiy); chain through the warp.
    Grid b = psi0 + gradient_x_adjoint(psix) + gradient_y_adjoint(psiy);
    Grid gu = -cfg.lambda * b * wd.du;
    Grid gv = -cfg.lambda * b * wd.dv;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (x + 1 < w) {
          const double pu = charbonnier_deriv(flow.u(y, x + 1) - flow.u(y, x), eps);
          gu(y, x) -= pu;
          gu(y, x + 1) += pu;
          const double pv = charbonnier_deriv(flow.v(y, x + 1) - flow.v(y, x), eps);
          gv(y, x) -= pv;
          gv(y, x + 1) += pv;
        }
        if (y + 1 < h) {
          const double pu = charbonnier_deriv(flow.u(y + 1, x) - flow.u(y, x), eps);
          gu(y, x) -= pu;
          gu(y + 1, x) += pu;
          const double pv = charbonnier_deriv(flow.v(y + 1, x) - flow.v(y, x), eps);
          gv(y, x) -= pv;
          gv(y + 1, x) += pv;
        }
      }
    }
    *grad = FlowField(std::move(gu), std::move(gv));
  }
}

}  // namespace

double data_term(const Grid& i1, const Grid& i2, const FlowField& flow,
                 const EnergyConfig& cfg, const BinaryMask* occlusion) {
  EnergyBreakdown bd;
  eval_energy(i1, i2, flow, cfg, occlusion, &bd, nullptr);
  return bd.data;
}

double smoothness_term(const FlowField& flow, const EnergyConfig& cfg) {
  cfg.validate();
  const int h = flow.height();
  const int w = flow.width();
  if (h * w <= 1) throw std::invalid_argument("smoothness_term: degenerate 1x1 field");
  const double eps = cfg.epsilon;
  double smooth = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) {
        smooth += charbonnier(flow.u(y, x + 1) - flow.u(y, x), eps);
        smooth += charbonnier(flow.v(y, x + 1) - flow.v(y, x), eps);
      }
      if (y + 1 < h) {
        smooth += charbonnier(flow.u(y + 1, x) - flow.u(y, x), eps);
        smooth += charbonnier(flow.v(y + 1, x) - flow.v(y, x), eps);
      }
    }
  }
  return smooth;
}

EnergyBreakdown total_energy(const Grid& i1, const Grid& i2, const FlowField& flow,
                             const EnergyConfig& cfg, const BinaryMask* occlusion) {
  EnergyBreakdown bd;
  eval_energy(i1, i2, flow, cfg, occlusion, &bd, nullptr);
  return bd;
}

FlowField energy_gradient(const Grid& i1, const Grid& i2, const FlowField& flow,
                          const EnergyConfig& cfg, const BinaryMask* occlusion,
                          EnergyBreakdown* breakdown) {
  FlowField grad;
  EnergyBreakdown bd;
  eval_energy(i1, i2, flow, cfg, occlusion, &bd, &grad);
  if (breakdown) *breakdown = bd;
  return grad;
}

}  // namespace mopflow
