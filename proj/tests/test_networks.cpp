#include <cmath>
#include <set>
#include <vector>

#include "crossview/errors.hpp"
#include "crossview/networks.hpp"
#include "crossview/rng.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace crossview;

namespace {

template <typename T>
void init_generator(Generator<T>& g, std::uint64_t seed) {
  auto rng = make_rng(seed);
  auto params = g.params();
  initialize(params, rng);
}

template <typename T>
void init_discriminator(Discriminator<T>& d, std::uint64_t seed) {
  auto rng = make_rng(seed);
  auto params = d.params();
  initialize(params, rng);
}

template <typename T>
double sum_probe(const Tensor<T>& y, const Tensor<T>& r) {
  long double s = 0.0L;
  for (std::int64_t i = 0; i < y.numel(); ++i) s += static_cast<long double>(y[i]) * r[i];
  return static_cast<double>(s);
}

}  // namespace

TEST_CASE("network spec mirrors the published channel plans") {
  NetworkSpec big = NetworkSpec::make(Arch::kBaseline, 256);
  CHECK(big.enc_channels == std::vector<int>{64, 128, 256, 512, 512, 512, 512, 512});
  CHECK(big.dec_channels == std::vector<int>{512, 512, 512, 512, 256, 128, 64, 3});
  CHECK(big.dropout_blocks == 3);
  CHECK(big.kernel == 4);
  CHECK(big.stride == 2);

  NetworkSpec small = NetworkSpec::make(Arch::kBaseline, 64);
  CHECK(small.enc_channels == std::vector<int>{64, 128, 256, 512, 512, 512});
  CHECK(small.dec_channels == std::vector<int>{512, 512, 256, 128, 64, 3});
  CHECK(small.dropout_blocks == 1);

  // The 64-px surgery removes exactly two encoder and two decoder blocks.
  CHECK(big.encoder_blocks() - small.encoder_blocks() == 2);
  CHECK(big.decoder_blocks() - small.decoder_blocks() == 2);

  // Every block halves the extent, so the bottleneck is 1x1 exactly when
  // 2^enc_blocks covers the full resolution.
  CHECK((1 << small.encoder_blocks()) == 64);
  CHECK((1 << big.encoder_blocks()) == 256);

  NetworkSpec fork = NetworkSpec::make(Arch::kFork, 256);
  CHECK(fork.fork_shared_blocks == 6);
  CHECK(fork.seg_channels == 3);
  NetworkSpec fork64 = NetworkSpec::make(Arch::kFork, 64);
  CHECK(fork64.fork_shared_blocks == 4);

  CHECK_THROWS_AS(NetworkSpec::make(Arch::kBaseline, 128), ConfigError);
}

TEST_CASE("network spec validates and round-trips through JSON") {
  NetworkSpec spec = NetworkSpec::make(Arch::kFork, 64, /*unet_skips=*/true);
  spec.validate();
  NetworkSpec back = NetworkSpec::from_json(spec.to_json());
  CHECK(back.arch == spec.arch);
  CHECK(back.resolution == spec.resolution);
  CHECK(back.enc_channels == spec.enc_channels);
  CHECK(back.dec_channels == spec.dec_channels);
  CHECK(back.fork_shared_blocks == spec.fork_shared_blocks);
  CHECK(back.dropout_blocks == spec.dropout_blocks);
  CHECK(back.unet_skips == spec.unet_skips);

  NetworkSpec broken = NetworkSpec::make(Arch::kBaseline, 64);
  broken.dec_channels.back() = 7;
  CHECK_THROWS_AS(broken.validate(), ConfigError);
  NetworkSpec shallow = NetworkSpec::make(Arch::kBaseline, 64);
  shallow.enc_channels.pop_back();
  CHECK_THROWS_AS(shallow.validate(), ConfigError);

  CHECK(arch_name(Arch::kFork) == "fork");
  CHECK(arch_from_name("baseline") == Arch::kBaseline);
  CHECK_THROWS_AS(arch_from_name("resnet"), ConfigError);
}

TEST_CASE("generator forward produces tanh-bounded images at both resolutions") {
  for (int res : {64, 256}) {
    Generator<float> g(NetworkSpec::make(Arch::kBaseline, res), "g");
    init_generator(g, 701);
    auto rng = make_rng(702);
    Tensor<float> x = randn<float>({1, 3, res, res}, rng, 0.0, 0.5);
    ForwardCtx ctx;  // eval
    auto out = g.forward(x, ctx);
    CHECK(out.image.shape() == std::vector<std::int64_t>{1, 3, res, res});
    CHECK(out.seg.numel() == 0);
    for (std::int64_t i = 0; i < out.image.numel(); ++i) {
      CHECK(out.image[i] >= -1.f);
      CHECK(out.image[i] <= 1.f);
    }
    // The innermost encoder activation really is a 1x1 map.
    const auto& bottleneck = g.encoder_outputs().back();
    CHECK(bottleneck.dim(2) == 1);
    CHECK(bottleneck.dim(3) == 1);
    CHECK(static_cast<int>(g.encoder_outputs().size()) == g.spec().encoder_blocks());
  }
}

TEST_CASE("fork generator emits an aligned seg head") {
  Generator<float> g(NetworkSpec::make(Arch::kFork, 64), "g");
  init_generator(g, 711);
  auto rng = make_rng(712);
  Tensor<float> x = randn<float>({2, 3, 64, 64}, rng, 0.0, 0.5);
  ForwardCtx ctx;
  auto out = g.forward(x, ctx);
  CHECK(out.image.shape() == std::vector<std::int64_t>{2, 3, 64, 64});
  CHECK(out.seg.shape() == std::vector<std::int64_t>{2, 3, 64, 64});
  for (std::int64_t i = 0; i < out.seg.numel(); ++i) {
    CHECK(out.seg[i] >= -1.f);
    CHECK(out.seg[i] <= 1.f);
  }
  // Baseline backward form is refused: the fork needs both head gradients.
  CHECK_THROWS_AS(g.backward(out.image), ShapeError);
}

TEST_CASE("unet skip variant keeps shapes and changes the function") {
  Generator<float> plain(NetworkSpec::make(Arch::kBaseline, 64), "g");
  Generator<float> skip(NetworkSpec::make(Arch::kBaseline, 64, /*unet_skips=*/true), "g");
  init_generator(plain, 721);
  init_generator(skip, 721);
  auto rng = make_rng(722);
  Tensor<float> x = randn<float>({1, 3, 64, 64}, rng, 0.0, 0.5);
  ForwardCtx ctx;
  auto py = plain.forward(x, ctx);
  auto sy = skip.forward(x, ctx);
  CHECK(sy.image.shape() == py.image.shape());
  // Skips widen the decoder inputs: same parameter list, bigger conv weights.
  auto numel_of = [](Generator<float>& g) {
    std::int64_t n = 0;
    for (auto* p : g.params()) n += p->value.numel();
    return n;
  };
  CHECK(numel_of(skip) > numel_of(plain));

  // Gradients flow through the skip concat.
  Tensor<float> d = Tensor<float>::full(sy.image.shape(), 1e-3f);
  Tensor<float> dx = skip.backward(d);
  CHECK(dx.shape() == x.shape());
  double norm = 0.0;
  for (std::int64_t i = 0; i < dx.numel(); ++i) norm += std::fabs(dx[i]);
  CHECK(norm > 0.0);
}

TEST_CASE("fork backward is linear in its two head gradients") {
  Generator<double> g(NetworkSpec::make(Arch::kFork, 64), "g");
  init_generator(g, 731);
  auto rng = make_rng(732);
  Tensor<double> x = randn<double>({1, 3, 64, 64}, rng, 0.0, 0.5);
  ForwardCtx ctx;

  auto out = g.forward(x, ctx);
  Tensor<double> d_img = randn<double>(out.image.shape(), rng, 0.0, 1.0);
  Tensor<double> d_seg = randn<double>(out.seg.shape(), rng, 0.0, 1.0);
  Tensor<double> zero_img = Tensor<double>::zeros(out.image.shape());
  Tensor<double> zero_seg = Tensor<double>::zeros(out.seg.shape());

  auto grads_for = [&](const Tensor<double>& di, const Tensor<double>& ds) {
    g.zero_grad();
    g.forward(x, ctx);
    g.backward(di, ds);
    std::vector<double> flat;
    for (auto* p : g.params())
      for (std::int64_t i = 0; i < p->grad.numel(); ++i) flat.push_back(p->grad[i]);
    return flat;
  };

  auto both = grads_for(d_img, d_seg);
  auto img_only = grads_for(d_img, zero_seg);
  auto seg_only = grads_for(zero_img, d_seg);
  REQUIRE(both.size() == img_only.size());
  double max_gap = 0.0;
  for (std::size_t i = 0; i < both.size(); ++i) {
    max_gap = std::max(max_gap, std::fabs(both[i] - (img_only[i] + seg_only[i])));
  }
  CHECK(max_gap < 1e-9);

  // The seg head gradient must not leak into the image head's private blocks
  // and vice versa: seg-only pass leaves some params untouched.
  std::size_t zero_in_seg_only = 0;
  for (double v : seg_only)
    if (v == 0.0) ++zero_in_seg_only;
  CHECK(zero_in_seg_only > 0);
}

TEST_CASE("fork generator parameter gradients match finite differences") {
  // Training-phase check with a pinned dropout stream; double precision.
  Generator<double> g(NetworkSpec::make(Arch::kFork, 64), "g");
  init_generator(g, 741);
  auto data_rng = make_rng(742);
  Tensor<double> x = randn<double>({2, 3, 64, 64}, data_rng, 0.0, 0.5);

  std::mt19937_64 drop_rng;
  ForwardCtx ctx{Phase::kTrain, &drop_rng};
  auto fwd = [&] {
    drop_rng = make_rng(743);
    return g.forward(x, ctx);
  };

  auto out0 = fwd();
  Tensor<double> r_img = randn<double>(out0.image.shape(), data_rng, 0.0, 1.0);
  Tensor<double> r_seg = randn<double>(out0.seg.shape(), data_rng, 0.0, 1.0);
  auto loss = [&] {
    auto out = fwd();
    return sum_probe(out.image, r_img) + sum_probe(out.seg, r_seg);
  };

  g.zero_grad();
  fwd();
  g.backward(r_img, r_seg);

  // Probe >= 5 parameters spread across encoder, trunk and both heads. The
  // step must stay small: LeakyReLU kink crossings contribute an error that
  // scales linearly with h, and h = 1e-7 keeps it well under tolerance while
  // double-precision FD noise is still orders of magnitude below.
  std::vector<Param<double>*> trainable;
  for (auto* p : g.params())
    if (p->trainable) trainable.push_back(p);
  int checked = 0;
  const std::size_t stride = std::max<std::size_t>(trainable.size() / 7, 1);
  for (std::size_t pi = 0; pi < trainable.size(); pi += stride) {
    auto* p = trainable[pi];
    const std::int64_t i = p->value.numel() / 2;
    const double h = 1e-7 * std::max(1.0, std::fabs(p->value[i]));
    const double fd = testsupport::fd_slope(loss, &p->value[i], h);
    if (std::fabs(fd) < 1e-12 && std::fabs(p->grad[i]) < 1e-12) continue;
    const double rel = std::fabs(p->grad[i] - fd) / std::max({1e-12, std::fabs(p->grad[i]),
                                                              std::fabs(fd)});
    CHECK_MESSAGE(rel <= 1e-3, p->name << "[" << i << "]: analytic " << p->grad[i] << " vs fd "
                                       << fd << " rel " << rel);
    ++checked;
  }
  CHECK(checked >= 5);
}

TEST_CASE("stacked stage-two gradients reach the first generator") {
  Generator<double> g1(NetworkSpec::make(Arch::kBaseline, 64), "g1");
  Generator<double> g2(NetworkSpec::make(Arch::kBaseline, 64), "g2");
  init_generator(g1, 751);
  init_generator(g2, 752);
  auto rng = make_rng(753);
  Tensor<double> x = randn<double>({1, 3, 64, 64}, rng, 0.0, 0.5);
  ForwardCtx ctx;

  auto o1 = g1.forward(x, ctx);
  auto o2 = g2.forward(o1.image, ctx);

  // Only a stage-two objective: gradient enters g1 exclusively through the
  // chain rule across g2's input.
  g1.zero_grad();
  g2.zero_grad();
  Tensor<double> d2 = randn<double>(o2.image.shape(), rng, 0.0, 1.0);
  Tensor<double> d_mid = g2.backward(d2);
  CHECK(d_mid.shape() == o1.image.shape());
  g1.backward(d_mid);

  double g1_grad_norm = 0.0;
  for (auto* p : g1.params())
    for (std::int64_t i = 0; i < p->grad.numel(); ++i) g1_grad_norm += std::fabs(p->grad[i]);
  CHECK(g1_grad_norm > 0.0);
}

TEST_CASE("discriminator scores one probability per sample") {
  NetworkSpec spec = NetworkSpec::make(Arch::kBaseline, 64);
  Discriminator<float> d(spec, 3, 3, "d");
  init_discriminator(d, 761);
  auto rng = make_rng(762);
  Tensor<float> cond = randn<float>({3, 3, 64, 64}, rng, 0.0, 0.5);
  Tensor<float> cand = randn<float>({3, 3, 64, 64}, rng, 0.0, 0.5);
  ForwardCtx ctx;
  Tensor<float> scores = d.forward(cond, cand, ctx);
  REQUIRE(scores.shape() == std::vector<std::int64_t>{3});
  for (std::int64_t i = 0; i < 3; ++i) {
    CHECK(scores[i] > 0.f);
    CHECK(scores[i] < 1.f);
  }

  Tensor<float> d_scores = Tensor<float>::full({3}, 1.f);
  auto [d_cond, d_cand] = d.backward(d_scores);
  CHECK(d_cond.shape() == cond.shape());
  CHECK(d_cand.shape() == cand.shape());
}

TEST_CASE("an all-zero discriminator sits exactly at 0.5") {
  // Zero weights and biases make every logit zero regardless of input, so
  // the sigmoid must emit exactly one half.
  NetworkSpec spec = NetworkSpec::make(Arch::kBaseline, 64);
  Discriminator<float> d(spec, 3, 3, "d");  // params default to zero
  auto rng = make_rng(771);
  Tensor<float> cond = randn<float>({2, 3, 64, 64}, rng, 0.0, 0.5);
  Tensor<float> cand = randn<float>({2, 3, 64, 64}, rng, 0.0, 0.5);
  ForwardCtx ctx;
  Tensor<float> scores = d.forward(cond, cand, ctx);
  CHECK(scores[0] == 0.5f);
  CHECK(scores[1] == 0.5f);
}

TEST_CASE("discriminator blocks shrink with the resolution") {
  Discriminator<float> small(NetworkSpec::make(Arch::kBaseline, 64), 3, 3, "d");
  Discriminator<float> large(NetworkSpec::make(Arch::kBaseline, 256), 3, 3, "d");
  CHECK(small.spec().encoder_blocks() + 2 == large.spec().encoder_blocks());
}

TEST_CASE("discriminator gradients match finite differences") {
  NetworkSpec spec = NetworkSpec::make(Arch::kBaseline, 64);
  Discriminator<double> d(spec, 3, 3, "d");
  init_discriminator(d, 781);
  auto rng = make_rng(782);
  Tensor<double> cond = randn<double>({2, 3, 64, 64}, rng, 0.0, 0.5);
  Tensor<double> cand = randn<double>({2, 3, 64, 64}, rng, 0.0, 0.5);
  ForwardCtx ctx{Phase::kTrain, nullptr};

  Tensor<double> r({2}, {0.7, -1.3});
  auto loss = [&] { return sum_probe(d.forward(cond, cand, ctx), r); };

  d.zero_grad();
  d.forward(cond, cand, ctx);
  auto [d_cond, d_cand] = d.backward(r);

  // Input gradients.
  for (auto i : testsupport::spread_indices(cand.numel(), 4)) {
    const double fd = testsupport::fd_slope(loss, &cand[i], 1e-5);
    CHECK_MESSAGE(testsupport::close_rel(d_cand[i], fd, 1e-5),
                  "cand grad @" << i << ": " << d_cand[i] << " vs " << fd);
  }
  for (auto i : testsupport::spread_indices(cond.numel(), 2)) {
    const double fd = testsupport::fd_slope(loss, &cond[i], 1e-5);
    CHECK(testsupport::close_rel(d_cond[i], fd, 1e-5));
  }
  // A few parameters; small h for the LeakyReLU kinks (see the fork FD case).
  std::vector<Param<double>*> trainable;
  for (auto* p : d.params())
    if (p->trainable) trainable.push_back(p);
  int checked = 0;
  const std::size_t stride = std::max<std::size_t>(trainable.size() / 5, 1);
  for (std::size_t pi = 0; pi < trainable.size(); pi += stride) {
    auto* p = trainable[pi];
    const std::int64_t i = 0;
    const double h = 1e-7 * std::max(1.0, std::fabs(p->value[i]));
    const double fd = testsupport::fd_slope(loss, &p->value[i], h);
    CHECK_MESSAGE(testsupport::close_rel(p->grad[i], fd, 1e-3),
                  p->name << ": " << p->grad[i] << " vs " << fd);
    ++checked;
  }
  CHECK(checked >= 3);
}

TEST_CASE("generator params carry distinct prefixed names") {
  Generator<float> g(NetworkSpec::make(Arch::kFork, 64), "gen");
  auto params = g.params();
  std::set<std::string> names;
  for (auto* p : params) {
    CHECK(p->name.rfind("gen.", 0) == 0);
    names.insert(p->name);
  }
  CHECK(names.size() == params.size());  // no duplicates
}
