#include "crossview/networks.hpp"

#include <nlohmann/json.hpp>

#include "crossview/errors.hpp"

namespace crossview {

namespace {

template <typename T>
void add_into(Tensor<T>& acc, const Tensor<T>& g) {
  if (acc.empty()) {
    acc = g;
    return;
  }
  if (!acc.same_shape(g)) throw ShapeError("gradient accumulation shape mismatch");
  for (std::int64_t i = 0; i < acc.numel(); ++i) acc[i] += g[i];
}

}  // namespace

std::string arch_name(Arch a) { return a == Arch::kBaseline ? "baseline" : "fork"; }

Arch arch_from_name(const std::string& name) {
  if (name == "baseline") return Arch::kBaseline;
  if (name == "fork") return Arch::kFork;
  throw ConfigError("unknown arch '" + name + "'");
}

NetworkSpec NetworkSpec::make(Arch arch, int resolution, bool unet_skips) {
  NetworkSpec s;
  s.arch = arch;
  s.resolution = resolution;
  s.unet_skips = unet_skips;
  // 256-px plan; the 64-px surgery trims both ends.
  const std::vector<int> enc256 = {64, 128, 256, 512, 512, 512, 512, 512};
  const std::vector<int> dec256 = {512, 512, 512, 512, 256, 128, 64, 3};
  if (resolution == 256) {
    s.enc_channels = enc256;
    s.dec_channels = dec256;
    s.dropout_blocks = 3;
  } else if (resolution == 64) {
    s.enc_channels.assign(enc256.begin(), enc256.end() - 2);
    s.dec_channels.assign(dec256.begin() + 2, dec256.end());
    s.dropout_blocks = 1;  // of the first three UBDR blocks, only one survives
  } else {
    throw ConfigError("NetworkSpec: resolution must be 64 or 256");
  }
  s.fork_shared_blocks = arch == Arch::kFork ? s.decoder_blocks() - 2 : 0;
  s.validate();
  return s;
}

void NetworkSpec::validate() const {
  if (resolution != 64 && resolution != 256) {
    throw ConfigError("NetworkSpec: resolution must be 64 or 256");
  }
  if (kernel != 4 || stride != 2) throw ConfigError("NetworkSpec: kernel/stride must be 4/2");
  if (enc_channels.empty() || dec_channels.empty()) {
    throw ConfigError("NetworkSpec: empty channel plan");
  }
  if ((1 << enc_channels.size()) != resolution) {
    throw ConfigError("NetworkSpec: encoder must reach a 1x1 bottleneck (2^blocks = resolution)");
  }
  if (enc_channels.size() != dec_channels.size()) {
    throw ConfigError("NetworkSpec: decoder must mirror encoder depth");
  }
  if (dec_channels.back() != 3) throw ConfigError("NetworkSpec: image head must emit 3 channels");
  if (dropout_blocks < 0 || dropout_blocks > decoder_blocks() - 1) {
    throw ConfigError("NetworkSpec: dropout_blocks out of range");
  }
  if (arch == Arch::kFork) {
    if (fork_shared_blocks != decoder_blocks() - 2) {
      throw ConfigError("NetworkSpec: fork must share all but the last two decoder blocks");
    }
    if (seg_channels != 3) throw ConfigError("NetworkSpec: seg head must emit 3 channels");
  }
}

std::string NetworkSpec::to_json() const {
  nlohmann::ordered_json j;
  j["arch"] = arch_name(arch);
  j["resolution"] = resolution;
  j["in_channels"] = in_channels;
  j["enc_channels"] = enc_channels;
  j["dec_channels"] = dec_channels;
  j["fork_shared_blocks"] = fork_shared_blocks;
  j["seg_channels"] = seg_channels;
  j["dropout_blocks"] = dropout_blocks;
  j["kernel"] = kernel;
  j["stride"] = stride;
  j["unet_skips"] = unet_skips;
  return j.dump();
}

NetworkSpec NetworkSpec::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  NetworkSpec s;
  s.arch = arch_from_name(j.at("arch").get<std::string>());
  s.resolution = j.at("resolution").get<int>();
  s.in_channels = j.at("in_channels").get<int>();
  s.enc_channels = j.at("enc_channels").get<std::vector<int>>();
  s.dec_channels = j.at("dec_channels").get<std::vector<int>>();
  s.fork_shared_blocks = j.at("fork_shared_blocks").get<int>();
  s.seg_channels = j.at("seg_channels").get<int>();
  s.dropout_blocks = j.at("dropout_blocks").get<int>();
  s.kernel = j.at("kernel").get<int>();
  s.stride = j.at("stride").get<int>();
  s.unet_skips = j.at("unet_skips").get<bool>();
  s.validate();
  return s;
}

// ------------------------------------------------------------------ Block --

template <typename T>
Tensor<T> Block<T>::forward(const Tensor<T>& x, const ForwardCtx& ctx) {
  Tensor<T> cur = main->forward(x, ctx);
  if (bn) cur = bn->forward(cur, ctx);
  if (dropout) cur = dropout->forward(cur, ctx);
  return act->forward(cur, ctx);
}

template <typename T>
Tensor<T> Block<T>::backward(const Tensor<T>& dy) {
  Tensor<T> cur = act->backward(dy);
  if (dropout) cur = dropout->backward(cur);
  if (bn) cur = bn->backward(cur);
  return main->backward(cur);
}

template <typename T>
void Block<T>::collect(std::vector<Param<T>*>& out) {
  for (Param<T>* p : main->params()) out.push_back(p);
  if (bn) {
    for (Param<T>* p : bn->params()) out.push_back(p);
  }
}

namespace {

template <typename T>
Block<T> make_enc_block(const std::string& name, int in_ch, int out_ch, int kernel, int stride,
                        bool first) {
  Block<T> b;
  b.main = std::make_unique<Conv2d<T>>(name + ".conv", in_ch, out_ch, kernel, stride,
                                       /*pad=*/(kernel - stride) / 2, /*bias=*/first);
  if (!first) b.bn = std::make_unique<BatchNorm2d<T>>(name + ".bn", out_ch);
  b.act = std::make_unique<LeakyReLU<T>>(0.2);
  return b;
}

template <typename T>
Block<T> make_dec_block(const std::string& name, int in_ch, int out_ch, int kernel, int stride,
                        bool final_block, bool with_dropout, int skip_channels) {
  Block<T> b;
  b.main = std::make_unique<ConvTranspose2d<T>>(name + ".up", in_ch, out_ch, kernel, stride,
                                                (kernel - stride) / 2, /*bias=*/final_block);
  if (!final_block) {
    b.bn = std::make_unique<BatchNorm2d<T>>(name + ".bn", out_ch);
    if (with_dropout) b.dropout = std::make_unique<Dropout<T>>(0.5);
    b.act = std::make_unique<ReLU<T>>();
  } else {
    b.act = std::make_unique<Tanh<T>>();
  }
  b.skip_channels = skip_channels;
  return b;
}

}  // namespace

// -------------------------------------------------------------- Generator --

template <typename T>
Generator<T>::Generator(NetworkSpec spec, const std::string& prefix) : spec_(std::move(spec)) {
  spec_.validate();
  const int e_blocks = spec_.encoder_blocks();
  const int d_blocks = spec_.decoder_blocks();

  int in_ch = spec_.in_channels;
  for (int i = 0; i < e_blocks; ++i) {
    enc_.push_back(make_enc_block<T>(prefix + ".enc" + std::to_string(i), in_ch,
                                     spec_.enc_channels[static_cast<std::size_t>(i)],
                                     spec_.kernel, spec_.stride, i == 0));
    in_ch = spec_.enc_channels[static_cast<std::size_t>(i)];
  }

  const int trunk_len = spec_.arch == Arch::kFork ? spec_.fork_shared_blocks : d_blocks;
  auto dec_in = [&](int k) {
    int ch = k == 0 ? spec_.enc_channels.back()
                    : spec_.dec_channels[static_cast<std::size_t>(k - 1)];
    if (spec_.unet_skips && k >= 1) {
      ch += spec_.enc_channels[static_cast<std::size_t>(e_blocks - 1 - k)];
    }
    return ch;
  };
  auto skip_of = [&](int k) {
    return spec_.unet_skips && k >= 1
               ? spec_.enc_channels[static_cast<std::size_t>(e_blocks - 1 - k)]
               : 0;
  };
  for (int k = 0; k < trunk_len; ++k) {
    trunk_.push_back(make_dec_block<T>(prefix + ".dec" + std::to_string(k), dec_in(k),
                                       spec_.dec_channels[static_cast<std::size_t>(k)],
                                       spec_.kernel, spec_.stride, k == d_blocks - 1,
                                       k < spec_.dropout_blocks, skip_of(k)));
  }
  if (spec_.arch == Arch::kFork) {
    for (int j = 0; j + trunk_len < d_blocks; ++j) {
      const int k = trunk_len + j;
      head_img_.push_back(make_dec_block<T>(prefix + ".img" + std::to_string(j), dec_in(k),
                                            spec_.dec_channels[static_cast<std::size_t>(k)],
                                            spec_.kernel, spec_.stride, k == d_blocks - 1,
                                            k < spec_.dropout_blocks, skip_of(k)));
      head_seg_.push_back(make_dec_block<T>(prefix + ".seg" + std::to_string(j), dec_in(k),
                                            spec_.dec_channels[static_cast<std::size_t>(k)],
                                            spec_.kernel, spec_.stride, k == d_blocks - 1,
                                            k < spec_.dropout_blocks, skip_of(k)));
    }
  }
}

template <typename T>
typename Generator<T>::Output Generator<T>::forward(const Tensor<T>& x, const ForwardCtx& ctx) {
  if (x.rank() != 4 || x.dim(1) != spec_.in_channels || x.dim(2) != spec_.resolution ||
      x.dim(3) != spec_.resolution) {
    throw ShapeError("generator: expected (N," + std::to_string(spec_.in_channels) + "," +
                     std::to_string(spec_.resolution) + "," + std::to_string(spec_.resolution) +
                     "), got " + shape_string(x));
  }
  enc_outs_.clear();
  Tensor<T> cur = x;
  for (auto& b : enc_) {
    cur = b.forward(cur, ctx);
    enc_outs_.push_back(cur);
  }

  const int e_blocks = spec_.encoder_blocks();
  auto dec_step = [&](Block<T>& b, const Tensor<T>& prev, int k) {
    if (spec_.unet_skips && k >= 1) {
      return b.forward(
          concat_channels(prev, enc_outs_[static_cast<std::size_t>(e_blocks - 1 - k)]), ctx);
    }
    return b.forward(prev, ctx);
  };

  Tensor<T> d = enc_outs_.back();
  for (std::size_t k = 0; k < trunk_.size(); ++k) {
    d = dec_step(trunk_[k], d, static_cast<int>(k));
  }

  Output out;
  if (spec_.arch == Arch::kBaseline) {
    out.image = std::move(d);
    return out;
  }
  auto run_head = [&](std::vector<Block<T>>& head) {
    Tensor<T> cur_h = d;
    for (std::size_t j = 0; j < head.size(); ++j) {
      cur_h = dec_step(head[j], cur_h, static_cast<int>(trunk_.size() + j));
    }
    return cur_h;
  };
  out.image = run_head(head_img_);
  out.seg = run_head(head_seg_);
  return out;
}

template <typename T>
Tensor<T> Generator<T>::backward(const Tensor<T>& d_image) {
  if (spec_.arch == Arch::kFork) {
    throw ShapeError("generator: fork backward needs both head gradients");
  }
  return backward_impl(d_image, nullptr);
}

template <typename T>
Tensor<T> Generator<T>::backward(const Tensor<T>& d_image, const Tensor<T>& d_seg) {
  if (spec_.arch != Arch::kFork) throw ShapeError("generator: seg gradient on non-fork arch");
  return backward_impl(d_image, &d_seg);
}

template <typename T>
Tensor<T> Generator<T>::backward_impl(const Tensor<T>& d_image, const Tensor<T>* d_seg) {
  const int e_blocks = spec_.encoder_blocks();
  std::vector<Tensor<T>> skip_grads(static_cast<std::size_t>(e_blocks));

  // Backward through one decoder block, peeling off the skip slice.
  auto dec_back = [&](Block<T>& b, const Tensor<T>& dy, int k) {
    Tensor<T> din = b.backward(dy);
    if (b.skip_channels > 0) {
      const std::int64_t main_ch = din.dim(1) - b.skip_channels;
      add_into(skip_grads[static_cast<std::size_t>(e_blocks - 1 - k)],
               slice_channels(din, main_ch, din.dim(1)));
      return slice_channels(din, 0, main_ch);
    }
    return din;
  };

  Tensor<T> d_trunk;
  if (spec_.arch == Arch::kBaseline) {
    d_trunk = d_image;
  } else {
    auto back_head = [&](std::vector<Block<T>>& head, const Tensor<T>& dy) {
      Tensor<T> cur = dy;
      for (std::size_t j = head.size(); j-- > 0;) {
        cur = dec_back(head[j], cur, static_cast<int>(trunk_.size() + j));
      }
      return cur;
    };
    d_trunk = back_head(head_img_, d_image);
    add_into(d_trunk, back_head(head_seg_, *d_seg));
  }

  for (std::size_t k = trunk_.size(); k-- > 0;) {
    d_trunk = dec_back(trunk_[k], d_trunk, static_cast<int>(k));
  }

  // d_trunk now holds the bottleneck gradient (w.r.t. enc_outs_.back()).
  Tensor<T> cur = std::move(d_trunk);
  for (std::size_t i = enc_.size(); i-- > 0;) {
    cur = enc_[i].backward(cur);
    if (i > 0 && !skip_grads[i - 1].empty()) add_into(cur, skip_grads[i - 1]);
  }
  return cur;
}

template <typename T>
std::vector<Param<T>*> Generator<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& b : enc_) b.collect(out);
  for (auto& b : trunk_) b.collect(out);
  for (auto& b : head_img_) b.collect(out);
  for (auto& b : head_seg_) b.collect(out);
  return out;
}

template <typename T>
void Generator<T>::zero_grad() {
  for (Param<T>* p : params()) p->grad.zero();
}

template <typename T>
std::string Generator<T>::describe() const {
  std::string s = "encoder:";
  for (const auto& b : enc_) s += " [" + b.main->describe() + "]";
  s += " decoder:";
  for (const auto& b : trunk_) s += " [" + b.main->describe() + "]";
  if (spec_.arch == Arch::kFork) {
    s += " img-head:";
    for (const auto& b : head_img_) s += " [" + b.main->describe() + "]";
    s += " seg-head:";
    for (const auto& b : head_seg_) s += " [" + b.main->describe() + "]";
  }
  return s;
}

// ---------------------------------------------------------- Discriminator --

template <typename T>
Discriminator<T>::Discriminator(NetworkSpec spec, int cond_channels, int cand_channels,
                                const std::string& prefix)
    : spec_(std::move(spec)), cond_ch_(cond_channels), cand_ch_(cand_channels) {
  spec_.validate();
  int in_ch = cond_ch_ + cand_ch_;
  for (int i = 0; i < spec_.encoder_blocks(); ++i) {
    blocks_.push_back(make_enc_block<T>(prefix + ".d" + std::to_string(i), in_ch,
                                        spec_.enc_channels[static_cast<std::size_t>(i)],
                                        spec_.kernel, spec_.stride, i == 0));
    in_ch = spec_.enc_channels[static_cast<std::size_t>(i)];
  }
  final_conv_ = std::make_unique<Conv2d<T>>(prefix + ".out.conv", in_ch, 1, 1, 1, 0,
                                            /*bias=*/true);
  sigmoid_ = std::make_unique<Sigmoid<T>>();
}

template <typename T>
Tensor<T> Discriminator<T>::forward(const Tensor<T>& cond, const Tensor<T>& cand,
                                    const ForwardCtx& ctx) {
  if (!cond.same_shape(cand) && (cond.dim(0) != cand.dim(0) || cond.dim(2) != cand.dim(2) ||
                                 cond.dim(3) != cand.dim(3))) {
    throw ShapeError("discriminator: conditioning/candidate shape mismatch " +
                     shape_string(cond) + " vs " + shape_string(cand));
  }
  if (cond.dim(2) != spec_.resolution) {
    throw ShapeError("discriminator: resolution mismatch, expected " +
                     std::to_string(spec_.resolution) + ", got " + shape_string(cond));
  }
  Tensor<T> cur = concat_channels(cond, cand);
  for (auto& b : blocks_) cur = b.forward(cur, ctx);
  cur = final_conv_->forward(cur, ctx);
  cur = sigmoid_->forward(cur, ctx);
  map_shape_ = cur.shape();

  const std::int64_t n = cur.dim(0), spatial = cur.dim(2) * cur.dim(3);
  Tensor<T> scores({n});
  for (std::int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::int64_t s = 0; s < spatial; ++s) acc += cur[i * spatial + s];
    scores[i] = static_cast<T>(acc / static_cast<double>(spatial));
  }
  return scores;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> Discriminator<T>::backward(const Tensor<T>& d_scores) {
  const std::int64_t n = map_shape_[0], spatial = map_shape_[2] * map_shape_[3];
  Tensor<T> d_map(map_shape_);
  const T inv = static_cast<T>(1.0 / static_cast<double>(spatial));
  for (std::int64_t i = 0; i < n; ++i) {
    const T g = d_scores[i] * inv;
    for (std::int64_t s = 0; s < spatial; ++s) d_map[i * spatial + s] = g;
  }
  Tensor<T> cur = sigmoid_->backward(d_map);
  cur = final_conv_->backward(cur);
  for (std::size_t i = blocks_.size(); i-- > 0;) cur = blocks_[i].backward(cur);
  return {slice_channels(cur, 0, cond_ch_),
          slice_channels(cur, cond_ch_, cond_ch_ + cand_ch_)};
}

template <typename T>
std::vector<Param<T>*> Discriminator<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& b : blocks_) b.collect(out);
  for (Param<T>* p : final_conv_->params()) out.push_back(p);
  return out;
}

template <typename T>
void Discriminator<T>::zero_grad() {
  for (Param<T>* p : params()) p->grad.zero();
}

template <typename T>
std::string Discriminator<T>::describe() const {
  std::string s = "discriminator:";
  for (const auto& b : blocks_) s += " [" + b.main->describe() + "]";
  s += " [" + final_conv_->describe() + " + sigmoid -> mean]";
  return s;
}

template struct Block<float>;
template struct Block<double>;
template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace crossview
