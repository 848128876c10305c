#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "mopflow/flow_solver.hpp"
#include "mopflow/pipeline.hpp"
#include "mopflow/selftest.hpp"

namespace mopflow {
namespace {

double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace

bool run_selftest(const PipelineConfig& cfg, std::ostream& out) {
  bool all_ok = true;
  char buf[160];
  auto report = [&](bool pass, const char* name, const std::string& detail) {
    std::snprintf(buf, sizeof(buf), "%-6s %-28s %s\n", pass ? "[ok]" : "[FAIL]", name,
                  detail.c_str());
    out << buf;
    all_ok = all_ok && pass;
  };

  {  // closed forms of the energy terms
    const EnergyConfig ecfg;
    const int h = 9, w = 13;
    const Grid img = synth::smooth_texture(h, w, 7);
    const double data = data_term(img, img, FlowField::zero(h, w), ecfg);
    const double data_expect = 3.0 * h * w * ecfg.epsilon;
    FlowField constant(Grid::Constant(h, w, 1.7), Grid::Constant(h, w, -0.4));
    const double smooth = smoothness_term(constant, ecfg);
    const double smooth_expect = ecfg.epsilon * (2.0 * h * (w - 1) + 2.0 * w * (h - 1));
    const double err = std::max(rel_diff(data, data_expect), rel_diff(smooth, smooth_expect));
    std::snprintf(buf, sizeof(buf), "max rel err %.3g", err);
    report(err < 1e-9, "energy closed forms", buf);
  }

  {  // analytic gradient vs central finite differences
    const EnergyConfig ecfg;
    double worst = 0.0;
    int k = 0;
    const std::pair<int, int> shapes[] = {{8, 8}, {10, 9}, {12, 12}};
    for (const auto& [h, w] : shapes) {
      for (const bool occl : {false, true}) {
        const auto inst = synth::make_fd_instance(h, w, 100 + static_cast<std::uint64_t>(k++),
                                                  occl);
        const BinaryMask* mask = inst.use_occlusion ? &inst.occlusion : nullptr;
        const FlowField analytic = energy_gradient(inst.i1, inst.i2, inst.flow, ecfg, mask);
        const FlowField fd =
            synth::fd_energy_gradient(inst.i1, inst.i2, inst.flow, ecfg, mask, 1e-4);
        worst = std::max(worst, synth::max_rel_err(analytic, fd));
      }
    }
    std::snprintf(buf, sizeof(buf), "max rel err %.3g", worst);
    report(worst < 1e-4, "flow gradient check", buf);
  }

  {  // synthetic 1-px shift recovery at one level
    const EnergyConfig ecfg;
    SolverConfig scfg;
    const Grid i1 = synth::smooth_texture(64, 64, 11);
    const auto [a, b] = synth::shifted_pair(i1, 1);
    const auto [flow, trace] = solve_level(a, b, FlowField::zero(64, 64), ecfg, scfg);
    const double epe = synth::mean_endpoint_error(flow, 1.0, 0.0, 8);
    const bool monotone = trace.back().total <= trace.front().total;
    std::snprintf(buf, sizeof(buf), "interior EPE %.4f px", epe);
    report(epe < 0.5 && monotone, "synthetic shift (1 px)", buf);
  }

  {  // pool/unpool round trip
    std::mt19937_64 rng(cfg.seed + 5);
    bool pass = true;
    for (int trial = 0; trial < 20 && pass; ++trial) {
      Tensor x = Tensor::zeros(3, 8, 8);
      for (long i = 0; i < x.size(); ++i)
        x.data[i] = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      const auto [pooled, idx] = maxpool2_with_indices(x);
      const Tensor up = max_unpool2(pooled, idx, 8, 8);
      const auto [repooled, idx2] = maxpool2_with_indices(up);
      pass = pass && (repooled.data - pooled.data).cwiseAbs().maxCoeff() == 0.0;
      pass = pass && std::abs(up.data.sum() - pooled.data.sum()) < 1e-12;
    }
    report(pass, "pool/unpool round trip", pass ? "exact" : "mismatch");
  }

  {  // sampled parameter gradient check of the micro network
    NetParams params = NetParams::initialized(cfg.seed + 9);
    std::mt19937_64 rng(cfg.seed + 10);
    Tensor x = Tensor::zeros(2, 8, 8);
    for (long i = 0; i < x.size(); ++i)
      x.data[i] = 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0;
    BinaryMask target(8, 8);
    for (int y = 0; y < 8; ++y)
      for (int px = 0; px < 8; ++px) target(y, px) = ((rng() >> 20) & 1) != 0;

    const auto [loss, grads] = loss_and_grad(params, x, target);
    NetGrads grads_copy = grads;
    auto analytic_views = [&grads_copy]() {
      std::vector<std::pair<double*, long>> v;
      auto add = [&v](auto& m) { v.emplace_back(m.data(), static_cast<long>(m.size())); };
      for (auto* half : {&grads_copy.encoder, &grads_copy.decoder})
        for (auto& s : *half) {
          add(s.kernel);
          add(s.bias);
          add(s.gamma);
          add(s.beta);
        }
      add(grads_copy.cls_kernel);
      add(grads_copy.cls_bias);
      return v;
    }();
    auto param_views = synth::learnable_views(params);

    const double h = 1e-3;
    double worst = 0.0;
    long total = 0;
    for (const auto& [p, n] : param_views) total += n;
    const long stride = std::max(1L, total / 160);
    long flat = 0;
    for (std::size_t g = 0; g < param_views.size(); ++g) {
      auto [p, n] = param_views[g];
      for (long j = 0; j < n; ++j, ++flat) {
        if (flat % stride != 0) continue;
        const double saved = p[j];
        p[j] = saved + h;
        const double lp = synth::train_loss_of(params, x, target);
        p[j] = saved - h;
        const double lm = synth::train_loss_of(params, x, target);
        p[j] = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double an = analytic_views[g].first[j];
        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1.0}));
      }
    }
    std::snprintf(buf, sizeof(buf), "max rel err %.3g over %ld sampled params (loss %.4f)",
                  worst, total / stride, loss);
    report(worst < 1e-3, "network gradient check", buf);
  }

  {  // learning-rate schedule
    const TrainConfig tcfg;
    const bool pass = tcfg.lr_at(1) == 5e-4 && tcfg.lr_at(1999) == 5e-4 &&
                      tcfg.lr_at(2000) == 2.5e-4 && tcfg.lr_at(4000) == 1.25e-4;
    report(pass, "adam lr schedule", pass ? "exact" : "mismatch");
  }

  out << (all_ok ? "selftest passed\n" : "selftest FAILED\n");
  return all_ok;
}

}  // namespace mopflow
