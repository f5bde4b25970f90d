#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "crossview/dataset.hpp"
#include "crossview/metrics.hpp"
#include "crossview/synthetic.hpp"

namespace crossview {

/// Anything that maps images to per-class probability rows. The evaluation
/// pipeline only talks to this interface, so the scene CNN below can be
/// swapped for a stronger model without touching the metrics.
class ClassifierOracle {
 public:
  virtual ~ClassifierOracle() = default;
  virtual int n_classes() const = 0;
  /// One probability row per input image; each row sums to 1 within 1e-6.
  virtual PredMatrix predict(const std::vector<Image>& images) const = 0;
};

/// Four-block CNN (stride-2 convs, global average pool, linear head) over
/// byte images, trained with softmax cross-entropy on scene categories.
class SceneClassifier : public ClassifierOracle {
 public:
  SceneClassifier(int n_classes, std::uint64_t seed);
  ~SceneClassifier() override;

  int n_classes() const override;
  PredMatrix predict(const std::vector<Image>& images) const override;

  /// One optimizer step on a labelled batch; returns the mean cross-entropy.
  double train_step(const std::vector<Image>& images, const std::vector<int>& labels,
                    std::mt19937_64& rng);
  /// Top-1 accuracy in [0, 1].
  double accuracy(const std::vector<Image>& images, const std::vector<int>& labels) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Trains a SceneClassifier on (view image -> category) pairs from the
/// manifest, holding out ~20% of the entries. The trained model must reach
/// at least 90% held-out top-1 accuracy or OracleRejectedError is thrown;
/// metrics that depend on a classifier refuse to run on a rejected oracle.
/// Epochs stretch until at least min_steps optimizer steps have run (small
/// manifests otherwise see too few updates to converge).
std::unique_ptr<SceneClassifier> train_classifier_oracle(const DatasetManifest& manifest,
                                                         std::uint64_t seed,
                                                         View view = View::kGround,
                                                         int epochs = 30, int min_steps = 600);

}  // namespace crossview
