// Microbenchmarks for the hot paths: GEMM, the conv layers it feeds, full
// network passes, one optimizer step, and the evaluation metrics.
//
//   cmake --build build --target crossview_bench
//   ./build/benchmarks/crossview_bench

#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>
#include <vector>

#include "crossview/blas.hpp"
#include "crossview/image.hpp"
#include "crossview/layers.hpp"
#include "crossview/metrics.hpp"
#include "crossview/networks.hpp"
#include "crossview/retrieval.hpp"
#include "crossview/rng.hpp"
#include "crossview/synthetic.hpp"
#include "crossview/tensor.hpp"
#include "crossview/trainer.hpp"

namespace {

using namespace crossview;

Image random_image(std::mt19937_64& rng, int h, int w) {
  Image img(h, w, 3, PixelRange::Byte);
  std::uniform_int_distribution<int> dist(0, 255);
  for (auto& v : img.data) v = static_cast<float>(dist(rng));
  return img;
}

void BM_Gemm256(benchmark::State& state) {
  const std::int64_t n = 256;
  std::vector<float> a(n * n), b(n * n), c(n * n);
  auto rng = make_rng(1);
  std::normal_distribution<float> dist;
  for (auto& v : a) v = dist(rng);
  for (auto& v : b) v = dist(rng);
  for (auto _ : state) {
    gemm(false, false, n, n, n, 1.f, a.data(), n, b.data(), n, 0.f, c.data(), n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Gemm256);

void BM_ConvForward(benchmark::State& state) {
  auto rng = make_rng(2);
  Conv2d<float> conv("conv", 64, 128, 4, 2, 1);
  initialize(conv.params(), rng);
  const Tensor<float> x = randn<float>({4, 64, 32, 32}, rng);
  ForwardCtx ctx{Phase::kTrain, &rng};
  for (auto _ : state) {
    auto y = conv.forward(x, ctx);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_ConvForward)->Unit(benchmark::kMillisecond);

void BM_ConvBackward(benchmark::State& state) {
  auto rng = make_rng(3);
  Conv2d<float> conv("conv", 64, 128, 4, 2, 1);
  initialize(conv.params(), rng);
  const Tensor<float> x = randn<float>({4, 64, 32, 32}, rng);
  const Tensor<float> dy = randn<float>({4, 128, 16, 16}, rng);
  ForwardCtx ctx{Phase::kTrain, &rng};
  for (auto _ : state) {
    conv.forward(x, ctx);
    auto dx = conv.backward(dy);
    benchmark::DoNotOptimize(dx.data());
  }
}
BENCHMARK(BM_ConvBackward)->Unit(benchmark::kMillisecond);

void BM_GeneratorForward(benchmark::State& state) {
  const int res = static_cast<int>(state.range(0));
  auto rng = make_rng(4);
  Generator<float> g(NetworkSpec::make(Arch::kBaseline, res), "g");
  initialize(g.params(), rng);
  const Tensor<float> x = to_nchw<float>(random_image(rng, res, res));
  ForwardCtx ctx{Phase::kEval, nullptr};
  for (auto _ : state) {
    auto out = g.forward(x, ctx);
    benchmark::DoNotOptimize(out.image.data());
  }
}
BENCHMARK(BM_GeneratorForward)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_DiscriminatorForward64(benchmark::State& state) {
  auto rng = make_rng(5);
  Discriminator<float> d(NetworkSpec::make(Arch::kBaseline, 64), 3, 3, "d");
  initialize(d.params(), rng);
  const Tensor<float> cond = to_nchw<float>(random_image(rng, 64, 64));
  const Tensor<float> cand = to_nchw<float>(random_image(rng, 64, 64));
  ForwardCtx ctx{Phase::kEval, nullptr};
  for (auto _ : state) {
    auto s = d.forward(cond, cand, ctx);
    benchmark::DoNotOptimize(s.data());
  }
}
BENCHMARK(BM_DiscriminatorForward64)->Unit(benchmark::kMillisecond);

void BM_TrainerStepBaseline64(benchmark::State& state) {
  const auto dir = std::filesystem::temp_directory_path() / "crossview_bench_ds";
  DatasetManifest data;
  if (std::filesystem::exists(dir / "manifest.jsonl")) {
    data = load_manifest(dir / "manifest.jsonl");
  } else {
    data = make_synthetic_dataset(8, 6, 64, dir, "train", 4);
  }
  TrainConfig cfg = TrainConfig::defaults_for(64);
  cfg.batch_size = 4;
  cfg.out_dir = std::filesystem::temp_directory_path() / "crossview_bench_run";
  Trainer trainer(cfg, data);
  auto rng = make_rng(7);
  for (auto _ : state) {
    auto report = trainer.step_batch({0, 1, 2, 3}, rng);
    benchmark::DoNotOptimize(report.total_g);
  }
}
BENCHMARK(BM_TrainerStepBaseline64)->Unit(benchmark::kMillisecond);

void BM_SsimWindowed256(benchmark::State& state) {
  auto rng = make_rng(8);
  const Image a = random_image(rng, 256, 256);
  const Image b = random_image(rng, 256, 256);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ssim(a, b));
  }
}
BENCHMARK(BM_SsimWindowed256)->Unit(benchmark::kMillisecond);

void BM_InceptionScore1000x365(benchmark::State& state) {
  auto rng = make_rng(9);
  PredMatrix preds({1000, 365});
  std::uniform_real_distribution<double> dist(1e-6, 1.0);
  for (std::int64_t i = 0; i < preds.dim(0); ++i) {
    double sum = 0.0;
    for (std::int64_t j = 0; j < preds.dim(1); ++j) {
      preds[i * 365 + j] = dist(rng);
      sum += preds[i * 365 + j];
    }
    for (std::int64_t j = 0; j < preds.dim(1); ++j) preds[i * 365 + j] /= sum;
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(inception_score(preds));
  }
}
BENCHMARK(BM_InceptionScore1000x365)->Unit(benchmark::kMillisecond);

void BM_KnnL1Pool256(benchmark::State& state) {
  auto rng = make_rng(10);
  std::vector<std::string> ids;
  std::vector<Image> pool;
  for (int i = 0; i < 256; ++i) {
    ids.push_back("img" + std::to_string(i));
    pool.push_back(random_image(rng, 64, 64));
  }
  const Image query = random_image(rng, 64, 64);
  for (auto _ : state) {
    auto nn = knn_l1(query, ids, pool, 5);
    benchmark::DoNotOptimize(nn.data());
  }
}
BENCHMARK(BM_KnnL1Pool256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
