#include "mopflow/segnet_micro.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "mopflow/imaging.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

namespace mopflow {
namespace {

constexpr int kStages = 3;
constexpr int kEncoderOut[kStages] = {16, 32, 64};
constexpr int kEncoderIn[kStages] = {2, 16, 32};
constexpr int kDecoderOut[kStages] = {32, 16, 16};
constexpr int kDecoderIn[kStages] = {64, 32, 16};
constexpr int kClasses = 2;
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
constexpr double kAdamEps = 1e-8;

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<RowMajorMatrix> as_matrix(Tensor& t) {
  return Eigen::Map<RowMajorMatrix>(t.data.data(), t.channels,
                                    static_cast<long>(t.height) * t.width);
}

Eigen::Map<const RowMajorMatrix> as_matrix(const Tensor& t) {
  return Eigen::Map<const RowMajorMatrix>(t.data.data(), t.channels,
                                          static_cast<long>(t.height) * t.width);
}

Eigen::MatrixXd im2col3(const Tensor& in) {
  const int h = in.height, w = in.width;
  Eigen::MatrixXd cols(static_cast<long>(in.channels) * 9, static_cast<long>(h) * w);
  for (int ci = 0; ci < in.channels; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const long row = (static_cast<long>(ci) * 3 + ky) * 3 + kx;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            cols(row, static_cast<long>(y) * w + x) =
                (sy >= 0 && sy < h && sx >= 0 && sx < w) ? in.at(ci, sy, sx) : 0.0;
          }
        }
      }
  return cols;
}

Tensor col2im3(const Eigen::MatrixXd& cols, int channels, int h, int w) {
  Tensor out = Tensor::zeros(channels, h, w);
  for (int ci = 0; ci < channels; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const long row = (static_cast<long>(ci) * 3 + ky) * 3 + kx;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= w) continue;
            out.at(ci, sy, sx) += cols(row, static_cast<long>(y) * w + x);
          }
        }
      }
  return out;
}

Tensor conv3_forward(const ConvParams& p, const Tensor& in) {
  Tensor out = Tensor::zeros(static_cast<int>(p.kernel.rows()), in.height, in.width);
  auto out_map = as_matrix(out);
  out_map = p.kernel * im2col3(in);
  out_map.colwise() += p.bias;
  return out;
}

// returns d(in); accumulates dK, db
Tensor conv3_backward(const ConvParams& p, const Tensor& in, const Tensor& dout,
                      Eigen::MatrixXd& dkernel, Eigen::VectorXd& dbias) {
  const Eigen::MatrixXd cols = im2col3(in);
  auto dout_map = as_matrix(dout);
  dkernel = dout_map * cols.transpose();
  dbias = dout_map.rowwise().sum();
  const Eigen::MatrixXd dcols = p.kernel.transpose() * dout_map;
  return col2im3(dcols, in.channels, in.height, in.width);
}

Tensor conv1_forward(const ConvParams& p, const Tensor& in) {
  Tensor out = Tensor::zeros(static_cast<int>(p.kernel.rows()), in.height, in.width);
  auto out_map = as_matrix(out);
  out_map = p.kernel * as_matrix(in);
  out_map.colwise() += p.bias;
  return out;
}

Tensor conv1_backward(const ConvParams& p, const Tensor& in, const Tensor& dout,
                      Eigen::MatrixXd& dkernel, Eigen::VectorXd& dbias) {
  auto dout_map = as_matrix(dout);
  dkernel = dout_map * as_matrix(in).transpose();
  dbias = dout_map.rowwise().sum();
  Tensor din = Tensor::zeros(in.channels, in.height, in.width);
  as_matrix(din) = p.kernel.transpose() * dout_map;
  return din;
}

Tensor bn_forward(const BatchNormParams& p, const Tensor& in, RunMode mode, BnCache* cache) {
  Tensor out = Tensor::zeros(in.channels, in.height, in.width);
  if (mode == RunMode::kTrain) {
    if (cache) {
      cache->mean.resize(in.channels);
      cache->var.resize(in.channels);
      cache->xhat = Tensor::zeros(in.channels, in.height, in.width);
    }
    for (int c = 0; c < in.channels; ++c) {
      const auto x = in.plane(c);
      const double mean = x.mean();
      const Grid centered = x - mean;
      const double var = centered.square().mean();
      const double ivar = 1.0 / std::sqrt(var + kBnEps);
      const Grid xhat = centered * ivar;
      out.plane(c) = p.gamma[c] * xhat + p.beta[c];
      if (cache) {
        cache->mean[c] = mean;
        cache->var[c] = var;
        cache->xhat.plane(c) = xhat;
      }
    }
  } else {
    for (int c = 0; c < in.channels; ++c) {
      const double ivar = 1.0 / std::sqrt(p.running_var[c] + kBnEps);
      out.plane(c) = p.gamma[c] * ((in.plane(c) - p.running_mean[c]) * ivar) + p.beta[c];
    }
  }
  return out;
}

Tensor bn_backward(const BatchNormParams& p, const BnCache& cache, const Tensor& dout,
                   Eigen::VectorXd& dgamma, Eigen::VectorXd& dbeta) {
  const int channels = dout.channels;
  const double n = static_cast<double>(dout.height) * dout.width;
  dgamma.resize(channels);
  dbeta.resize(channels);
  Tensor din = Tensor::zeros(channels, dout.height, dout.width);
  for (int c = 0; c < channels; ++c) {
    const auto dy = dout.plane(c);
    const auto xhat = cache.xhat.plane(c);
    dgamma[c] = (dy * xhat).sum();
    dbeta[c] = dy.sum();
    const double ivar = 1.0 / std::sqrt(cache.var[c] + kBnEps);
    const Grid dxhat = dy * p.gamma[c];
    const Grid centered = xhat / ivar;
    const double dvar = (dxhat * centered).sum() * -0.5 * ivar * ivar * ivar;
    const double dmean = -ivar * dxhat.sum() + dvar * (-2.0 / n) * centered.sum();
    din.plane(c) = dxhat * ivar + centered * (2.0 * dvar / n) + dmean / n;
  }
  return din;
}

Tensor relu(const Tensor& in) {
  Tensor out = in;
  out.data = out.data.cwiseMax(0.0);
  return out;
}

Tensor relu_backward(const Tensor& relu_out, const Tensor& dout) {
  Tensor din = dout;
  for (long i = 0; i < din.data.size(); ++i)
    if (relu_out.data[i] <= 0.0) din.data[i] = 0.0;
  return din;
}

// pool backward: gather the upstream gradient from each recorded position
Tensor unpool_backward(const Tensor& dup, const PoolIndices& idx) {
  Tensor din = Tensor::zeros(idx.channels, idx.out_height, idx.out_width);
  for (int c = 0; c < idx.channels; ++c)
    for (int oy = 0; oy < idx.out_height; ++oy)
      for (int ox = 0; ox < idx.out_width; ++ox) {
        const std::uint8_t code = idx.at(c, oy, ox);
        din.at(c, oy, ox) = dup.at(c, 2 * oy + code / 2, 2 * ox + code % 2);
      }
  return din;
}

void check_input(const NetParams& params, const Tensor& x) {
  const int expected_in = static_cast<int>(params.encoder.at(0).conv.kernel.cols() / 9);
  if (x.channels != expected_in)
    throw std::invalid_argument("forward: input channel count mismatch");
  const int div = 1 << kStages;
  if (x.height % div != 0 || x.width % div != 0 || x.height < div || x.width < div)
    throw std::invalid_argument("forward: spatial dims must be positive multiples of 8");
}

Tensor softmax2(const Tensor& logits) {
  Tensor probs = Tensor::zeros(logits.channels, logits.height, logits.width);
  for (int y = 0; y < logits.height; ++y)
    for (int x = 0; x < logits.width; ++x) {
      const double l0 = logits.at(0, y, x);
      const double l1 = logits.at(1, y, x);
      const double m = std::max(l0, l1);
      const double e0 = std::exp(l0 - m);
      const double e1 = std::exp(l1 - m);
      const double s = e0 + e1;
      probs.at(0, y, x) = e0 / s;
      probs.at(1, y, x) = e1 / s;
    }
  return probs;
}

struct ParamView {
  double* p;
  long n;
};
struct ConstParamView {
  const double* p;
  long n;
};

std::vector<ParamView> views(NetParams& p) {
  std::vector<ParamView> out;
  auto add = [&out](auto& m) { out.push_back({m.data(), static_cast<long>(m.size())}); };
  for (auto* half : {&p.encoder, &p.decoder})
    for (auto& s : *half) {
      add(s.conv.kernel);
      add(s.conv.bias);
      add(s.bn.gamma);
      add(s.bn.beta);
    }
  add(p.classifier.kernel);
  add(p.classifier.bias);
  return out;
}

std::vector<ParamView> views(NetGrads& g) {
  std::vector<ParamView> out;
  auto add = [&out](auto& m) { out.push_back({m.data(), static_cast<long>(m.size())}); };
  for (auto* half : {&g.encoder, &g.decoder})
    for (auto& s : *half) {
      add(s.kernel);
      add(s.bias);
      add(s.gamma);
      add(s.beta);
    }
  add(g.cls_kernel);
  add(g.cls_bias);
  return out;
}

std::vector<ConstParamView> views(const NetGrads& g) {
  std::vector<ConstParamView> out;
  auto add = [&out](const auto& m) { out.push_back({m.data(), static_cast<long>(m.size())}); };
  for (const auto* half : {&g.encoder, &g.decoder})
    for (const auto& s : *half) {
      add(s.kernel);
      add(s.bias);
      add(s.gamma);
      add(s.beta);
    }
  add(g.cls_kernel);
  add(g.cls_bias);
  return out;
}

double cross_entropy(const Tensor& probs, const BinaryMask& target) {
  if (probs.height != target.rows() || probs.width != target.cols())
    throw std::invalid_argument("cross_entropy: target shape mismatch");
  double loss = 0.0;
  for (int y = 0; y < probs.height; ++y)
    for (int x = 0; x < probs.width; ++x) {
      const double pt = probs.at(target(y, x) ? 1 : 0, y, x);
      loss -= std::log(std::max(pt, 1e-300));
    }
  return loss / (static_cast<double>(probs.height) * probs.width);
}

double forward_backward(const NetParams& params, const Tensor& x, const BinaryMask& target,
                        NetGrads& grads, ForwardCache& cache) {
  const Tensor probs = forward(params, x, RunMode::kTrain, &cache);
  const double loss = cross_entropy(probs, target);

  const double n = static_cast<double>(probs.height) * probs.width;
  Tensor dlogits = Tensor::zeros(kClasses, probs.height, probs.width);
  for (int y = 0; y < probs.height; ++y)
    for (int x2 = 0; x2 < probs.width; ++x2) {
      const int t = target(y, x2) ? 1 : 0;
      dlogits.at(0, y, x2) = (probs.at(0, y, x2) - (t == 0 ? 1.0 : 0.0)) / n;
      dlogits.at(1, y, x2) = (probs.at(1, y, x2) - (t == 1 ? 1.0 : 0.0)) / n;
    }

  Tensor ds = conv1_backward(params.classifier, cache.cls_in, dlogits, grads.cls_kernel,
                             grads.cls_bias);

  for (int i = kStages - 1; i >= 0; --i) {
    const StageCache& sc = cache.decoder[i];
    Tensor drelu = relu_backward(sc.relu_out, ds);
    Tensor dconv_out =
        bn_backward(params.decoder[i].bn, sc.bn, drelu, grads.decoder[i].gamma,
                    grads.decoder[i].beta);
    Tensor dunpooled = conv3_backward(params.decoder[i].conv, sc.conv_in, dconv_out,
                                      grads.decoder[i].kernel, grads.decoder[i].bias);
    ds = unpool_backward(dunpooled, cache.encoder[kStages - 1 - i].pool_idx);
  }

  for (int i = kStages - 1; i >= 0; --i) {
    const StageCache& sc = cache.encoder[i];
    // max-pool backward scatters the gradient to the argmax positions
    Tensor dpooled = max_unpool2(ds, sc.pool_idx, sc.relu_out.height, sc.relu_out.width);
    Tensor drelu = relu_backward(sc.relu_out, dpooled);
    Tensor dconv_out =
        bn_backward(params.encoder[i].bn, sc.bn, drelu, grads.encoder[i].gamma,
                    grads.encoder[i].beta);
    ds = conv3_backward(params.encoder[i].conv, sc.conv_in, dconv_out, grads.encoder[i].kernel,
                        grads.encoder[i].bias);
  }
  return loss;
}

void update_running_stats(NetParams& params, const ForwardCache& cache) {
  for (int i = 0; i < kStages; ++i) {
    auto& ebn = params.encoder[i].bn;
    ebn.running_mean = (1.0 - kBnMomentum) * ebn.running_mean + kBnMomentum * cache.encoder[i].bn.mean;
    ebn.running_var = (1.0 - kBnMomentum) * ebn.running_var + kBnMomentum * cache.encoder[i].bn.var;
    auto& dbn = params.decoder[i].bn;
    dbn.running_mean = (1.0 - kBnMomentum) * dbn.running_mean + kBnMomentum * cache.decoder[i].bn.mean;
    dbn.running_var = (1.0 - kBnMomentum) * dbn.running_var + kBnMomentum * cache.decoder[i].bn.var;
  }
}

}  // namespace

std::pair<Tensor, PoolIndices> maxpool2_with_indices(const Tensor& x) {
  if (x.height % 2 != 0 || x.width % 2 != 0)
    throw std::invalid_argument("maxpool2_with_indices: odd spatial dims");
  const int oh = x.height / 2, ow = x.width / 2;
  Tensor out = Tensor::zeros(x.channels, oh, ow);
  PoolIndices idx;
  idx.channels = x.channels;
  idx.out_height = oh;
  idx.out_width = ow;
  idx.code.resize(static_cast<long>(x.channels) * oh * ow);
  for (int c = 0; c < x.channels; ++c)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double best = x.at(c, 2 * oy, 2 * ox);
        std::uint8_t code = 0;
        for (std::uint8_t k = 1; k < 4; ++k) {
          const double v = x.at(c, 2 * oy + k / 2, 2 * ox + k % 2);
          if (v > best) {
            best = v;
            code = k;
          }
        }
        out.at(c, oy, ox) = best;
        idx.code[(static_cast<long>(c) * oh + oy) * ow + ox] = code;
      }
  return {std::move(out), std::move(idx)};
}

Tensor max_unpool2(const Tensor& x, const PoolIndices& idx, int out_height, int out_width) {
  if (x.channels != idx.channels || x.height != idx.out_height || x.width != idx.out_width ||
      out_height != 2 * idx.out_height || out_width != 2 * idx.out_width)
    throw std::invalid_argument("max_unpool2: index/shape mismatch");
  Tensor out = Tensor::zeros(x.channels, out_height, out_width);
  for (int c = 0; c < x.channels; ++c)
    for (int oy = 0; oy < x.height; ++oy)
      for (int ox = 0; ox < x.width; ++ox) {
        const std::uint8_t code = idx.at(c, oy, ox);
        out.at(c, 2 * oy + code / 2, 2 * ox + code % 2) = x.at(c, oy, ox);
      }
  return out;
}

NetGrads NetGrads::zeros_like(const NetParams& p) {
  NetGrads g;
  for (const auto* half : {&p.encoder, &p.decoder}) {
    auto& dst = half == &p.encoder ? g.encoder : g.decoder;
    for (const auto& s : *half) {
      StageGrads sg;
      sg.kernel = Eigen::MatrixXd::Zero(s.conv.kernel.rows(), s.conv.kernel.cols());
      sg.bias = Eigen::VectorXd::Zero(s.conv.bias.size());
      sg.gamma = Eigen::VectorXd::Zero(s.bn.gamma.size());
      sg.beta = Eigen::VectorXd::Zero(s.bn.beta.size());
      dst.push_back(std::move(sg));
    }
  }
  g.cls_kernel = Eigen::MatrixXd::Zero(p.classifier.kernel.rows(), p.classifier.kernel.cols());
  g.cls_bias = Eigen::VectorXd::Zero(p.classifier.bias.size());
  return g;
}

double TrainConfig::lr_at(long t) const {
  return start_lr * std::pow(decay_factor, static_cast<double>(t / decay_interval));
}

NetParams NetParams::initialized(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto unit = [&rng]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  auto make_conv = [&](int out, int in, int k) {
    ConvParams c;
    const double a = std::sqrt(1.0 / (static_cast<double>(in) * k * k));
    c.kernel.resize(out, static_cast<long>(in) * k * k);
    for (long r = 0; r < c.kernel.rows(); ++r)
      for (long col = 0; col < c.kernel.cols(); ++col)
        c.kernel(r, col) = (2.0 * unit() - 1.0) * a;
    c.bias.resize(out);
    for (long r = 0; r < out; ++r) c.bias[r] = (2.0 * unit() - 1.0) * a;
    return c;
  };
  auto make_bn = [](int channels) {
    BatchNormParams b;
    b.gamma = Eigen::VectorXd::Ones(channels);
    b.beta = Eigen::VectorXd::Zero(channels);
    b.running_mean = Eigen::VectorXd::Zero(channels);
    b.running_var = Eigen::VectorXd::Ones(channels);
    return b;
  };

  NetParams p;
  for (int i = 0; i < kStages; ++i)
    p.encoder.push_back({make_conv(kEncoderOut[i], kEncoderIn[i], 3), make_bn(kEncoderOut[i])});
  for (int i = 0; i < kStages; ++i)
    p.decoder.push_back({make_conv(kDecoderOut[i], kDecoderIn[i], 3), make_bn(kDecoderOut[i])});
  p.classifier = make_conv(kClasses, kDecoderOut[kStages - 1], 1);
  return p;
}

Tensor forward(const NetParams& params, const Tensor& x, RunMode mode, ForwardCache* cache) {
  check_input(params, x);
  if (cache) {
    cache->encoder.assign(kStages, StageCache{});
    cache->decoder.assign(kStages, StageCache{});
  }
  std::vector<PoolIndices> enc_idx(kStages);

  Tensor s = x;
  for (int i = 0; i < kStages; ++i) {
    Tensor conv_in = s;
    Tensor conv_out = conv3_forward(params.encoder[i].conv, conv_in);
    BnCache bn_cache;
    Tensor bn_out = bn_forward(params.encoder[i].bn, conv_out, mode,
                               mode == RunMode::kTrain ? &bn_cache : nullptr);
    Tensor relu_out = relu(bn_out);
    auto [pooled, idx] = maxpool2_with_indices(relu_out);
    enc_idx[i] = idx;
    if (cache) {
      StageCache& sc = cache->encoder[i];
      sc.conv_in = std::move(conv_in);
      sc.conv_out = std::move(conv_out);
      sc.bn = std::move(bn_cache);
      sc.relu_out = std::move(relu_out);
      sc.pool_idx = std::move(idx);
    }
    s = std::move(pooled);
  }

  for (int i = 0; i < kStages; ++i) {
    const PoolIndices& idx = cache ? cache->encoder[kStages - 1 - i].pool_idx
                                   : enc_idx[kStages - 1 - i];
    Tensor up = max_unpool2(s, idx, 2 * s.height, 2 * s.width);
    Tensor conv_out = conv3_forward(params.decoder[i].conv, up);
    BnCache bn_cache;
    Tensor bn_out = bn_forward(params.decoder[i].bn, conv_out, mode,
                               mode == RunMode::kTrain ? &bn_cache : nullptr);
    Tensor relu_out = relu(bn_out);
    if (cache) {
      StageCache& sc = cache->decoder[i];
      sc.conv_in = std::move(up);
      sc.conv_out = std::move(conv_out);
      sc.bn = std::move(bn_cache);
      sc.relu_out = relu_out;
    }
    s = std::move(relu_out);
  }

  if (cache) cache->cls_in = s;
  Tensor logits = conv1_forward(params.classifier, s);
  Tensor probs = softmax2(logits);
  if (cache) cache->probs = probs;
  return probs;
}

std::pair<double, NetGrads> loss_and_grad(const NetParams& params, const Tensor& x,
                                          const BinaryMask& target) {
  NetGrads grads = NetGrads::zeros_like(params);
  ForwardCache cache;
  const double loss = forward_backward(params, x, target, grads, cache);
  return {loss, std::move(grads)};
}

void adam_step(NetParams& params, const NetGrads& grads, AdamState& state, long t,
               const TrainConfig& cfg) {
  if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
  const double lr = cfg.lr_at(t);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  auto pv = views(params);
  auto gv = views(grads);
  auto mv = views(state.m);
  auto vv = views(state.v);
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (pv[i].n != gv[i].n || pv[i].n != mv[i].n || pv[i].n != vv[i].n)
      throw std::invalid_argument("adam_step: gradient/state shape mismatch");
    for (long j = 0; j < pv[i].n; ++j) {
      const double g = gv[i].p[j];
      mv[i].p[j] = cfg.beta1 * mv[i].p[j] + (1.0 - cfg.beta1) * g;
      vv[i].p[j] = cfg.beta2 * vv[i].p[j] + (1.0 - cfg.beta2) * g * g;
      const double mhat = mv[i].p[j] / c1;
      const double vhat = vv[i].p[j] / c2;
      pv[i].p[j] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
  }
}

Tensor tensor_from_flow(const FlowField& flow) {
  Tensor t = Tensor::zeros(2, flow.height(), flow.width());
  t.plane(0) = flow.u;
  t.plane(1) = flow.v;
  return t;
}

std::pair<NetParams, std::vector<double>> train(
    const std::vector<std::pair<FlowField, BinaryMask>>& pairs, const TrainConfig& cfg,
    std::uint64_t seed) {
  if (pairs.empty()) throw std::invalid_argument("train: empty training set");
  for (const auto& [flow, mask] : pairs) {
    if (flow.height() % 8 != 0 || flow.width() % 8 != 0)
      throw std::invalid_argument("train: flow dims must be divisible by 8");
    if (!same_shape(flow.u, mask))
      throw std::invalid_argument("train: flow and target shapes differ");
  }

  NetParams params = NetParams::initialized(seed);
  AdamState state = AdamState::zeros_like(params);
  NetGrads grads = NetGrads::zeros_like(params);
  std::vector<double> losses;
  losses.reserve(cfg.iterations);
  for (long t = 1; t <= cfg.iterations; ++t) {
    const auto& [flow, target] = pairs[(t - 1) % pairs.size()];
    const Tensor x = tensor_from_flow(flow);
    ForwardCache cache;
    const double loss = forward_backward(params, x, target, grads, cache);
    if (!std::isfinite(loss))
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(t));
    update_running_stats(params, cache);
    adam_step(params, grads, state, t, cfg);
    losses.push_back(loss);
  }
  return {std::move(params), std::move(losses)};
}

BinaryMask predict_mask(const NetParams& params, const FlowField& flow) {
  const int h = flow.height(), w = flow.width();
  const int rh = ((h + 7) / 8) * 8;
  const int rw = ((w + 7) / 8) * 8;
  Tensor x;
  if (rh == h && rw == w) {
    x = tensor_from_flow(flow);
  } else {
    x = tensor_from_flow(FlowField(resize_bilinear(flow.u, rh, rw),
                                   resize_bilinear(flow.v, rh, rw)));
  }
  const Tensor probs = forward(params, x, RunMode::kEval);
  BinaryMask mask(rh, rw);
  for (int y = 0; y < rh; ++y)
    for (int x2 = 0; x2 < rw; ++x2) mask(y, x2) = probs.at(1, y, x2) > 0.5;
  if (rh != h || rw != w) mask = resize_nearest(mask, h, w);
  return mask;
}

void save_checkpoint(const std::filesystem::path& path, const NetParams& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  f << "mopflow-segnet-v1\n";
  f << "encoder " << params.encoder.size() << "\n";
  for (const auto& s : params.encoder)
    f << "stage " << s.conv.kernel.rows() << " " << s.conv.kernel.cols() / 9 << " 3\n";
  f << "decoder " << params.decoder.size() << "\n";
  for (const auto& s : params.decoder)
    f << "stage " << s.conv.kernel.rows() << " " << s.conv.kernel.cols() / 9 << " 3\n";
  f << "classifier " << params.classifier.kernel.rows() << " " << params.classifier.kernel.cols()
    << " 1\n";
  f << "end\n";

  auto write_block = [&f](const double* p, long n) {
    std::vector<float> buf(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = static_cast<float>(p[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  };
  auto write_stage = [&](const StageParams& s) {
    write_block(s.conv.kernel.data(), s.conv.kernel.size());
    write_block(s.conv.bias.data(), s.conv.bias.size());
    write_block(s.bn.gamma.data(), s.bn.gamma.size());
    write_block(s.bn.beta.data(), s.bn.beta.size());
    write_block(s.bn.running_mean.data(), s.bn.running_mean.size());
    write_block(s.bn.running_var.data(), s.bn.running_var.size());
  };
  for (const auto& s : params.encoder) write_stage(s);
  for (const auto& s : params.decoder) write_stage(s);
  write_block(params.classifier.kernel.data(), params.classifier.kernel.size());
  write_block(params.classifier.bias.data(), params.classifier.bias.size());
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

NetParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  std::string tag;
  f >> tag;
  if (tag != "mopflow-segnet-v1") throw std::runtime_error("load_checkpoint: bad header tag");

  auto read_stage_shapes = [&f](const std::string& section) {
    std::string word;
    std::size_t count = 0;
    f >> word >> count;
    if (word != section) throw std::runtime_error("load_checkpoint: expected section " + section);
    std::vector<std::pair<int, int>> shapes;
    for (std::size_t i = 0; i < count; ++i) {
      int out = 0, in = 0, k = 0;
      f >> word >> out >> in >> k;
      if (word != "stage" || k != 3) throw std::runtime_error("load_checkpoint: bad stage line");
      shapes.emplace_back(out, in);
    }
    return shapes;
  };
  const auto enc_shapes = read_stage_shapes("encoder");
  const auto dec_shapes = read_stage_shapes("decoder");
  std::string word;
  int cls_out = 0, cls_in = 0, cls_k = 0;
  f >> word >> cls_out >> cls_in >> cls_k;
  if (word != "classifier" || cls_k != 1)
    throw std::runtime_error("load_checkpoint: bad classifier line");
  f >> word;
  if (word != "end") throw std::runtime_error("load_checkpoint: missing end marker");
  f.ignore(1);  // newline before the binary payload

  auto read_block = [&f, &path](double* p, long n) {
    std::vector<float> buf(static_cast<std::size_t>(n));
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw std::runtime_error("load_checkpoint: truncated payload in " + path.string());
    for (long i = 0; i < n; ++i) p[i] = static_cast<double>(buf[static_cast<std::size_t>(i)]);
  };
  auto read_stage = [&](int out, int in) {
    StageParams s;
    s.conv.kernel.resize(out, static_cast<long>(in) * 9);
    s.conv.bias.resize(out);
    s.bn.gamma.resize(out);
    s.bn.beta.resize(out);
    s.bn.running_mean.resize(out);
    s.bn.running_var.resize(out);
    read_block(s.conv.kernel.data(), s.conv.kernel.size());
    read_block(s.conv.bias.data(), s.conv.bias.size());
    read_block(s.bn.gamma.data(), s.bn.gamma.size());
    read_block(s.bn.beta.data(), s.bn.beta.size());
    read_block(s.bn.running_mean.data(), s.bn.running_mean.size());
    read_block(s.bn.running_var.data(), s.bn.running_var.size());
    return s;
  };

  NetParams p;
  for (const auto& [out, in] : enc_shapes) p.encoder.push_back(read_stage(out, in));
  for (const auto& [out, in] : dec_shapes) p.decoder.push_back(read_stage(out, in));
  p.classifier.kernel.resize(cls_out, cls_in);
  p.classifier.bias.resize(cls_out);
  read_block(p.classifier.kernel.data(), p.classifier.kernel.size());
  read_block(p.classifier.bias.data(), p.classifier.bias.size());
  return p;
}

void write_loss_trace_csv(const std::filesystem::path& path, const std::vector<double>& losses,
                          const TrainConfig& cfg) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_loss_trace_csv: cannot open " + path.string());
  f << "step,lr,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const long t = static_cast<long>(i) + 1;
    std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g\n", t, cfg.lr_at(t), losses[i]);
    f << buf;
  }
}

}  // namespace mopflow
