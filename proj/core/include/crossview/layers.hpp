#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "crossview/tensor.hpp"

namespace crossview {

enum class Phase { kTrain, kEval };

/// Per-call state threaded through forward passes. rng must be set whenever
/// a dropout layer runs in the train phase.
struct ForwardCtx {
  Phase phase = Phase::kEval;
  std::mt19937_64* rng = nullptr;
};

/// Named learnable tensor (or non-trainable buffer such as BN running
/// stats). init selects the draw used by initialize().
template <typename T>
struct Param {
  enum class Init { kConvWeight, kBnGamma, kZero, kOne };

  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Init init = Init::kZero;
  bool trainable = true;
};

/// Draws every trainable tensor in order: conv weights ~ N(0, 0.02^2),
/// BN gamma ~ N(1, 0.02^2), the rest to their fixed defaults.
template <typename T>
void initialize(const std::vector<Param<T>*>& params, std::mt19937_64& rng);

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  /// Caches whatever backward() needs; one backward per forward.
  virtual Tensor<T> forward(const Tensor<T>& x, const ForwardCtx& ctx) = 0;
  /// Accumulates parameter gradients and returns dL/dx.
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  virtual std::string describe() const = 0;
};

/// 4x4/stride-2 style convolution via im2col + GEMM, batched with a memory
/// cap on the column buffer.
template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad,
         bool bias = true);
  Tensor<T> forward(const Tensor<T>& x, const ForwardCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  std::vector<Param<T>*> params() override;
  std::string describe() const override;

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }

 private:
  std::string name_;
  int in_ch_, out_ch_, kernel_, stride_, pad_;
  bool has_bias_;
  Param<T> weight_;  // (out_ch, in_ch, k, k)
  Param<T> bias_;    // (out_ch)
  Tensor<T> x_;      // cached input
};

/// Fractionally-strided counterpart; doubles spatial extent for k=4, s=2,
/// p=1. Weight layout (in_ch, out_ch, k, k).
template <typename T>
class ConvTranspose2d : public Layer<T> {
 public:
  ConvTranspose2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad,
                  bool bias = true);
  Tensor<T> forward(const Tensor<T>& x, const ForwardCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  std::vector<Param<T>*> params() override;
  std::string describe() const override;

 private:
  std::string name_;
  int in_ch_, out_ch_, kernel_, stride_, pad_;
  bool has_bias_;
  Param<T> weight_;
  Param<T> bias_;
  Tensor<T> x_;
};

/// Per-channel batch normalization with running statistics (momentum 0.1,
/// eps 1e-5). Train phase normalizes with batch moments; eval uses the
/// running estimates.
template <typename T>
class BatchNorm2d : public Layer<T> {
 public:
  BatchNorm2d(std::string name, int channels, double momentum = 0.1, double eps = 1e-5);
  Tensor<T> forward(const Tensor<T>& x, const ForwardCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  std::vector<Param<T>*> params() override;
  std::string describe() const override;

 private:
  std::string name_;
  int channels_;
  double momentum_, eps_;
  Param<T> gamma_, beta_;
  Param<T> running_mean_, running_var_;  // buffers, trainable=false
  Phase phase_ = Phase::kEval;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

template <typename T>
class LeakyReLU : public Layer<T> {
 public:
  explicit LeakyReLU(double slope = 0.2) : slope_(static_cast<T>(slope)) {}
  Tensor<T> forward(const Tensor<T>& x, const ForwardCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  std::string describe() const override;

 private:
  T slope_;
  Tensor<T> x_;
};

template <typename T>
class ReLU : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, const ForwardCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  std::string describe() const override { return "relu"; }

 private:
  Tensor<T> x_;
};

template <typename T>
class Tanh : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, const ForwardCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  std::string describe() const override { return "tanh"; }

 private:
  Tensor<T> y_;
};

template <typename T>
class Sigmoid : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, const ForwardCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  std::string describe() const override { return "sigmoid"; }

 private:
  Tensor<T> y_;
};

/// Inverted dropout: train phase scales kept units by 1/(1-p); eval phase is
/// the identity. Train phase requires ctx.rng.
template <typename T>
class Dropout : public Layer<T> {
 public:
  explicit Dropout(double p = 0.5) : p_(p) {}
  Tensor<T> forward(const Tensor<T>& x, const ForwardCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  std::string describe() const override;

 private:
  double p_;
  Phase phase_ = Phase::kEval;
  Tensor<T> mask_;
};

/// Fully connected layer on rank-2 input (N, in).
template <typename T>
class Linear : public Layer<T> {
 public:
  Linear(std::string name, int in_features, int out_features);
  Tensor<T> forward(const Tensor<T>& x, const ForwardCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  std::vector<Param<T>*> params() override;
  std::string describe() const override;

 private:
  std::string name_;
  int in_, out_;
  Param<T> weight_;  // (out, in)
  Param<T> bias_;    // (out)
  Tensor<T> x_;
};

/// (N,C,H,W) -> (N,C) mean over the spatial extent.
template <typename T>
class GlobalAvgPool : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, const ForwardCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  std::string describe() const override { return "gap"; }

 private:
  std::vector<std::int64_t> in_shape_;
};

/// Straight-line chain of layers.
template <typename T>
class Sequential : public Layer<T> {
 public:
  Sequential() = default;
  void add(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }
  Tensor<T> forward(const Tensor<T>& x, const ForwardCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  std::vector<Param<T>*> params() override;
  std::string describe() const override;
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// Channel-axis concat/split for conditioning and skip connections.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t c0, std::int64_t c1);

}  // namespace crossview
