#include "crossview/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "crossview/errors.hpp"
#include "crossview/layers.hpp"
#include "crossview/optimizer.hpp"
#include "crossview/png_io.hpp"
#include "crossview/rng.hpp"

namespace crossview {

namespace {

using F = float;

constexpr int kBatchSize = 32;
constexpr double kLearnRate = 1e-3;
constexpr double kAcceptAccuracy = 0.90;
constexpr double kEarlyStopAccuracy = 0.95;
/// Small manifests yield few steps per epoch; stretch the epoch count so the
/// model always sees at least this many optimizer steps before the gate.

}  // namespace

struct SceneClassifier::Impl {
  int n_classes = 0;
  Sequential<F> trunk;
  Linear<F> head;
  std::unique_ptr<Adam<F>> opt;

  Impl(int classes, std::uint64_t seed)
      : n_classes(classes), head("cls.fc", 128, classes) {
    // Stride-2 feature pyramid; BN everywhere but the input block, matching
    // the house convention for encoders.
    const std::vector<int> plan = {32, 64, 128, 128};
    int in_c = 3;
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const std::string tag = "cls.conv" + std::to_string(i);
      trunk.add(std::make_unique<Conv2d<F>>(tag, in_c, plan[i], 4, 2, 1, /*bias=*/i == 0));
      if (i > 0) trunk.add(std::make_unique<BatchNorm2d<F>>(tag + ".bn", plan[i]));
      trunk.add(std::make_unique<LeakyReLU<F>>(0.2));
      in_c = plan[i];
    }

    auto rng = make_rng(mix_seed(seed, 0xC1A55ull));
    std::vector<Param<F>*> params = trunk.params();
    for (Param<F>* p : head.params()) params.push_back(p);
    initialize(params, rng);
    opt = std::make_unique<Adam<F>>(params, kLearnRate, /*beta1=*/0.9, /*beta2=*/0.999);
  }

  Tensor<F> logits(const std::vector<Image>& images, const ForwardCtx& ctx) {
    Tensor<F> x = to_nchw<F>(images);
    Tensor<F> h = trunk.forward(x, ctx);
    GlobalAvgPool<F> pool;  // stateless; cheap to rebuild (backward not needed here)
    return head.forward(pool.forward(h, ctx), ctx);
  }
};

SceneClassifier::SceneClassifier(int n_classes, std::uint64_t seed) {
  if (n_classes < 2) throw ConfigError("classifier: need at least 2 classes");
  impl_ = std::make_unique<Impl>(n_classes, seed);
}

SceneClassifier::~SceneClassifier() = default;

int SceneClassifier::n_classes() const { return impl_->n_classes; }

namespace {

/// Row-wise softmax in double precision; rows sum to 1 exactly up to rounding.
PredMatrix softmax_rows(const Tensor<float>& logits) {
  const std::int64_t n = logits.dim(0), c = logits.dim(1);
  PredMatrix out({n, c});
  for (std::int64_t i = 0; i < n; ++i) {
    double peak = logits[i * c];
    for (std::int64_t j = 1; j < c; ++j) peak = std::max(peak, double(logits[i * c + j]));
    double sum = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      const double e = std::exp(double(logits[i * c + j]) - peak);
      out[i * c + j] = e;
      sum += e;
    }
    for (std::int64_t j = 0; j < c; ++j) out[i * c + j] /= sum;
  }
  return out;
}

}  // namespace

PredMatrix SceneClassifier::predict(const std::vector<Image>& images) const {
  if (images.empty()) throw EmptySetError("classifier: no images to predict");
  ForwardCtx ctx{Phase::kEval, nullptr};
  PredMatrix out({static_cast<std::int64_t>(images.size()), impl_->n_classes});
  const std::size_t chunk = 64;
  std::int64_t row = 0;
  for (std::size_t pos = 0; pos < images.size(); pos += chunk) {
    const auto last = std::min(pos + chunk, images.size());
    const std::vector<Image> part(images.begin() + static_cast<std::ptrdiff_t>(pos),
                                  images.begin() + static_cast<std::ptrdiff_t>(last));
    const PredMatrix probs = softmax_rows(impl_->logits(part, ctx));
    std::copy_n(probs.data(), probs.numel(), out.data() + row * impl_->n_classes);
    row += probs.dim(0);
  }
  return out;
}

double SceneClassifier::train_step(const std::vector<Image>& images,
                                   const std::vector<int>& labels, std::mt19937_64& rng) {
  if (images.empty() || images.size() != labels.size()) {
    throw ShapeError("classifier: batch images/labels mismatch");
  }
  ForwardCtx ctx{Phase::kTrain, &rng};
  impl_->opt->zero_grad();

  Tensor<F> x = to_nchw<F>(images);
  Tensor<F> h = impl_->trunk.forward(x, ctx);
  GlobalAvgPool<F> pool;
  Tensor<F> pooled = pool.forward(h, ctx);
  Tensor<F> logits = impl_->head.forward(pooled, ctx);

  const std::int64_t n = logits.dim(0), c = logits.dim(1);
  const PredMatrix probs = softmax_rows(logits);
  double loss = 0.0;
  Tensor<F> dlogits({n, c});
  for (std::int64_t i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= impl_->n_classes) {
      throw RangeError("classifier: label " + std::to_string(label) + " outside [0, " +
                       std::to_string(impl_->n_classes) + ")");
    }
    loss -= std::log(std::max(probs[i * c + label], 1e-30)) / static_cast<double>(n);
    for (std::int64_t j = 0; j < c; ++j) {
      const double grad = (probs[i * c + j] - (j == label ? 1.0 : 0.0)) / static_cast<double>(n);
      dlogits[i * c + j] = static_cast<F>(grad);
    }
  }

  Tensor<F> dh = pool.backward(impl_->head.backward(dlogits));
  impl_->trunk.backward(dh);
  impl_->opt->step();
  return loss;
}

double SceneClassifier::accuracy(const std::vector<Image>& images,
                                 const std::vector<int>& labels) const {
  if (images.empty() || images.size() != labels.size()) {
    throw ShapeError("classifier: accuracy images/labels mismatch");
  }
  const PredMatrix probs = predict(images);
  const std::int64_t c = probs.dim(1);
  std::int64_t hits = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const double* row = probs.data() + static_cast<std::int64_t>(i) * c;
    const int top = static_cast<int>(std::max_element(row, row + c) - row);
    hits += top == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

std::unique_ptr<SceneClassifier> train_classifier_oracle(const DatasetManifest& manifest,
                                                         std::uint64_t seed, View view,
                                                         int epochs, int min_steps) {
  const std::size_t n = manifest.entries.size();
  if (n < 5) throw ConfigError("classifier: need at least 5 manifest entries to hold out 20%");
  if (manifest.n_categories < 2) {
    throw ConfigError("classifier: manifest lacks category metadata");
  }

  std::vector<Image> images(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ManifestEntry& e = manifest.entries[i];
    if (e.category < 0) {
      throw ConfigError("classifier: entry '" + e.id + "' has no category label");
    }
    labels[i] = e.category;
    images[i] =
        read_png(manifest.root / (view == View::kGround ? e.ground : e.aerial));
  }

  auto split_rng = make_rng(mix_seed(seed, 0x501Dull));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), split_rng);
  const std::size_t held = std::max<std::size_t>(1, n / 5);

  std::vector<Image> test_imgs, train_imgs;
  std::vector<int> test_labels, train_labels;
  for (std::size_t i = 0; i < n; ++i) {
    auto& imgs = i < held ? test_imgs : train_imgs;
    auto& labs = i < held ? test_labels : train_labels;
    imgs.push_back(images[perm[i]]);
    labs.push_back(labels[perm[i]]);
  }

  auto model = std::make_unique<SceneClassifier>(manifest.n_categories, seed);
  std::vector<std::size_t> order(train_imgs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const int steps_per_epoch =
      static_cast<int>((order.size() + kBatchSize - 1) / kBatchSize);
  const int total_epochs =
      std::max(epochs, (min_steps + steps_per_epoch - 1) / steps_per_epoch);
  double acc = 0.0;
  for (int ep = 0; ep < total_epochs; ++ep) {
    auto rng = make_rng(mix_seed(seed, 0x0C7ull + static_cast<std::uint64_t>(ep)));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t pos = 0; pos < order.size(); pos += kBatchSize) {
      const std::size_t last = std::min(pos + kBatchSize, order.size());
      std::vector<Image> batch;
      std::vector<int> batch_labels;
      for (std::size_t i = pos; i < last; ++i) {
        batch.push_back(train_imgs[order[i]]);
        batch_labels.push_back(train_labels[order[i]]);
      }
      model->train_step(batch, batch_labels, rng);
    }
    acc = model->accuracy(test_imgs, test_labels);
    if (acc >= kEarlyStopAccuracy) break;
  }

  if (acc < kAcceptAccuracy) {
    throw OracleRejectedError("classifier oracle rejected: held-out top-1 accuracy " +
                              std::to_string(acc * 100.0) + "% is below the 90% gate");
  }
  return model;
}

}  // namespace crossview
