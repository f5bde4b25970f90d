#pragma once

#include <memory>
#include <string>
#include <vector>

#include "crossview/layers.hpp"

namespace crossview {

enum class Arch { kBaseline, kFork };

std::string arch_name(Arch a);
Arch arch_from_name(const std::string& name);

/// Architecture description; parameter shapes are derivable from this alone.
/// The 64-px variant drops the last two encoder blocks and the first two
/// decoder blocks of the 256-px plan.
struct NetworkSpec {
  Arch arch = Arch::kBaseline;
  int resolution = 64;
  int in_channels = 3;
  std::vector<int> enc_channels;  ///< per-block output channels
  std::vector<int> dec_channels;  ///< per-block output channels; last entry = 3
  int fork_shared_blocks = 0;     ///< shared decoder trunk length (fork only)
  int seg_channels = 3;
  int dropout_blocks = 0;  ///< leading decoder blocks carrying dropout 0.5
  int kernel = 4;
  int stride = 2;
  bool unet_skips = false;  ///< off by default: plain encoder-decoder

  static NetworkSpec make(Arch arch, int resolution, bool unet_skips = false);
  void validate() const;  // throws ConfigError when inconsistent

  std::string to_json() const;
  static NetworkSpec from_json(const std::string& text);

  int encoder_blocks() const { return static_cast<int>(enc_channels.size()); }
  int decoder_blocks() const { return static_cast<int>(dec_channels.size()); }
};

/// One Conv/Upconv-BN-(Dropout)-activation unit.
template <typename T>
struct Block {
  std::unique_ptr<Layer<T>> main;  // Conv2d or ConvTranspose2d
  std::unique_ptr<BatchNorm2d<T>> bn;
  std::unique_ptr<Dropout<T>> dropout;
  std::unique_ptr<Layer<T>> act;
  int skip_channels = 0;  // trailing input channels arriving via skip concat

  Tensor<T> forward(const Tensor<T>& x, const ForwardCtx& ctx);
  Tensor<T> backward(const Tensor<T>& dy);
  void collect(std::vector<Param<T>*>& out);
};

/// Encoder-decoder generator; the fork variant shares the decoder trunk and
/// runs two independent penultimate+output heads (image, seg).
template <typename T>
class Generator {
 public:
  struct Output {
    Tensor<T> image;
    Tensor<T> seg;  // empty unless fork
  };

  Generator(NetworkSpec spec, const std::string& prefix);

  Output forward(const Tensor<T>& x, const ForwardCtx& ctx);
  /// Baseline form; throws for fork (which needs both head gradients).
  Tensor<T> backward(const Tensor<T>& d_image);
  /// Fork form: returns dL/dx given both head gradients.
  Tensor<T> backward(const Tensor<T>& d_image, const Tensor<T>& d_seg);

  std::vector<Param<T>*> params();
  void zero_grad();
  const NetworkSpec& spec() const { return spec_; }
  std::string describe() const;
  /// Per-block encoder activations from the most recent forward; the last
  /// entry is the bottleneck (1x1 spatial when spec is consistent).
  const std::vector<Tensor<T>>& encoder_outputs() const { return enc_outs_; }

 private:
  Tensor<T> backward_impl(const Tensor<T>& d_image, const Tensor<T>* d_seg);

  NetworkSpec spec_;
  std::vector<Block<T>> enc_;
  std::vector<Block<T>> trunk_;     // baseline: the whole decoder
  std::vector<Block<T>> head_img_;  // fork only
  std::vector<Block<T>> head_seg_;  // fork only
  std::vector<Tensor<T>> enc_outs_;
};

/// Conditional discriminator: encoder-depth stack over channel-concatenated
/// (conditioning, candidate), final 1-channel conv + sigmoid, realness map
/// averaged to one score per sample.
template <typename T>
class Discriminator {
 public:
  Discriminator(NetworkSpec spec, int cond_channels, int cand_channels,
                const std::string& prefix);

  /// Returns per-sample scores, shape (N), each in (0,1).
  Tensor<T> forward(const Tensor<T>& cond, const Tensor<T>& cand, const ForwardCtx& ctx);
  /// Returns (d_cond, d_cand).
  std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& d_scores);

  std::vector<Param<T>*> params();
  void zero_grad();
  const NetworkSpec& spec() const { return spec_; }
  std::string describe() const;

 private:
  NetworkSpec spec_;
  int cond_ch_, cand_ch_;
  std::vector<Block<T>> blocks_;
  std::unique_ptr<Conv2d<T>> final_conv_;
  std::unique_ptr<Sigmoid<T>> sigmoid_;
  std::vector<std::int64_t> map_shape_;
};

}  // namespace crossview
