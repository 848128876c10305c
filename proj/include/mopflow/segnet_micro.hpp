#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "mopflow/types.hpp"

namespace mopflow {

// (channels, height, width) tensor, row-major per channel plane.
struct Tensor {
  int channels = 0, height = 0, width = 0;
  Eigen::VectorXd data;

  static Tensor zeros(int c, int h, int w) {
    Tensor t;
    t.channels = c;
    t.height = h;
    t.width = w;
    t.data = Eigen::VectorXd::Zero(static_cast<long>(c) * h * w);
    return t;
  }
  long size() const { return data.size(); }
  double& at(int c, int y, int x) {
    return data[(static_cast<long>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<long>(c) * height + y) * width + x];
  }
  Eigen::Map<Grid> plane(int c) {
    return Eigen::Map<Grid>(data.data() + static_cast<long>(c) * height * width, height, width);
  }
  Eigen::Map<const Grid> plane(int c) const {
    return Eigen::Map<const Grid>(data.data() + static_cast<long>(c) * height * width, height,
                                  width);
  }
};

// Argmax position inside each 2x2 pooling window, encoded as dr*2 + dc.
struct PoolIndices {
  int channels = 0, out_height = 0, out_width = 0;
  std::vector<std::uint8_t> code;

  std::uint8_t at(int c, int oy, int ox) const {
    return code[(static_cast<long>(c) * out_height + oy) * out_width + ox];
  }
};

// 2x2 stride-2 max per channel; ties break toward smallest row, then column.
std::pair<Tensor, PoolIndices> maxpool2_with_indices(const Tensor& x);

// Scatter pooled values back to their argmax positions, zeros elsewhere.
Tensor max_unpool2(const Tensor& x, const PoolIndices& idx, int out_height, int out_width);

struct ConvParams {
  Eigen::MatrixXd kernel;  // out_ch x (in_ch * k*k), k-major (ci, ky, kx)
  Eigen::VectorXd bias;
};

struct BatchNormParams {
  Eigen::VectorXd gamma, beta;
  Eigen::VectorXd running_mean, running_var;
};

struct StageParams {
  ConvParams conv;
  BatchNormParams bn;
};

// Encoder 2->16->32->64 over three conv+bn+relu+pool stages, mirrored
// decoder driven by the stored pooling indices, 1x1 classifier to 2 classes.
struct NetParams {
  std::vector<StageParams> encoder;
  std::vector<StageParams> decoder;
  ConvParams classifier;

  static NetParams initialized(std::uint64_t seed);
};

struct StageGrads {
  Eigen::MatrixXd kernel;
  Eigen::VectorXd bias, gamma, beta;
};

struct NetGrads {
  std::vector<StageGrads> encoder, decoder;
  Eigen::MatrixXd cls_kernel;
  Eigen::VectorXd cls_bias;

  static NetGrads zeros_like(const NetParams& p);
};

struct TrainConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double start_lr = 5e-4;
  double decay_factor = 0.5;
  int decay_interval = 2000;
  int iterations = 10000;
  int batch = 1;

  // lr(t) = start_lr * decay_factor^floor(t / decay_interval)
  double lr_at(long t) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct AdamState {
  NetGrads m, v;
  static AdamState zeros_like(const NetParams& p) { return {NetGrads::zeros_like(p), NetGrads::zeros_like(p)}; }
};

enum class RunMode { kTrain, kEval };

struct BnCache {
  Eigen::VectorXd mean, var;
  Tensor xhat;
};

struct StageCache {
  Tensor conv_in;
  Tensor conv_out;
  BnCache bn;
  Tensor relu_out;
  PoolIndices pool_idx;  // encoder stages only
};

struct ForwardCache {
  std::vector<StageCache> encoder, decoder;
  Tensor cls_in;
  Tensor probs;
};

// Per-pixel two-class probabilities (channels sum to 1). Train mode
// normalizes with batch statistics (recorded in the cache); eval mode uses
// the running statistics. Never mutates params.
Tensor forward(const NetParams& params, const Tensor& x, RunMode mode,
               ForwardCache* cache = nullptr);

// Mean per-pixel two-class cross-entropy and its gradient for every
// parameter, computed in train mode.
std::pair<double, NetGrads> loss_and_grad(const NetParams& params, const Tensor& x,
                                          const BinaryMask& target);

// Bias-corrected Adam update with the decayed learning rate at step t >= 1.
void adam_step(NetParams& params, const NetGrads& grads, AdamState& state, long t,
               const TrainConfig& cfg);

// Round-robin single-sample training; deterministic given the seed.
std::pair<NetParams, std::vector<double>> train(
    const std::vector<std::pair<FlowField, BinaryMask>>& pairs, const TrainConfig& cfg,
    std::uint64_t seed);

// Foreground iff class-1 probability > 0.5. Flows whose dims are not
// divisible by 8 are resized up internally and the mask resized back.
BinaryMask predict_mask(const NetParams& params, const FlowField& flow);

Tensor tensor_from_flow(const FlowField& flow);

// Checkpoint: plain-text header listing stage shapes, then the parameters
// as a flat little-endian float32 stream.
void save_checkpoint(const std::filesystem::path& path, const NetParams& params);
NetParams load_checkpoint(const std::filesystem::path& path);

// CSV loss trace: "step,lr,loss" rows.
void write_loss_trace_csv(const std::filesystem::path& path, const std::vector<double>& losses,
                          const TrainConfig& cfg);

}  // namespace mopflow
