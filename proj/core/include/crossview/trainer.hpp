#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "crossview/checkpoint.hpp"
#include "crossview/dataset.hpp"
#include "crossview/networks.hpp"
#include "crossview/objectives.hpp"
#include "crossview/optimizer.hpp"

namespace crossview {

enum class TrainArch { kBaseline, kFork, kXSeq };
std::string train_arch_name(TrainArch a);
TrainArch train_arch_from_name(const std::string& name);

enum class Direction { kA2G, kG2A };
std::string direction_name(Direction d);
Direction direction_from_name(const std::string& name);

struct TrainConfig {
  TrainArch arch = TrainArch::kBaseline;
  Direction direction = Direction::kA2G;
  int resolution = 64;
  int epochs = 100;
  int batch_size = 16;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double lambda = 100.0;
  double real_label = 0.9;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "run";
  bool augment = true;
  int jitter = 8;  ///< jitter upscale margin in px (scaled-down from 30 at 256)
  bool unet_skips = false;
  bool non_saturating = true;
  int checkpoint_keep = 0;  ///< 0 = keep every epoch checkpoint
  int sample_count = 4;  ///< rows in the per-epoch preview grid
  bool paranoid_checks = false;  ///< per-step cross-update checksum asserts

  /// Paper schedule: 64 -> epochs 100 / batch 16; 256 -> epochs 35 / batch 4.
  static TrainConfig defaults_for(int resolution);
  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

/// Owns the networks, optimizers and run-directory artifacts of one
/// training run.
class Trainer {
 public:
  Trainer(TrainConfig config, DatasetManifest data);
  ~Trainer();

  /// Restores parameters/optimizer/epoch from a checkpoint written by an
  /// identically configured run; throws ArchMismatchError otherwise.
  void load(const std::filesystem::path& ckpt_path);

  /// Trains from the current epoch to config.epochs, writing config.json,
  /// log.jsonl, per-epoch checkpoints, and sample grids into out_dir.
  void run();

  /// One optimization step over the given sample indices (exposed for
  /// tests). rng drives augmentation and dropout.
  LossReport step_batch(const std::vector<std::size_t>& indices, std::mt19937_64& rng);

  int epoch() const { return epoch_; }
  const TrainConfig& config() const { return config_; }
  Checkpoint snapshot() const;

  /// FNV-fold over all parameter bytes of the generator ('g') or
  /// discriminator ('d') side.
  std::uint64_t params_checksum(char side) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  TrainConfig config_;
  int epoch_ = 0;
};

/// Full run per config: constructs a Trainer and drives it to completion.
void train(const TrainConfig& config, const DatasetManifest& data);

/// Eval-mode synthesis for every manifest entry, in manifest order.
struct GenerationResult {
  std::vector<std::string> ids;
  std::vector<Image> images;  ///< denormalized byte images
  std::vector<Image> segs;    ///< fork/xseq only, else empty
};

GenerationResult generate(const Checkpoint& ckpt, const DatasetManifest& manifest,
                          std::optional<Direction> direction_override = std::nullopt);
/// Writes gen_{id}.png (+ gen_seg_{id}.png) files into out_dir.
void write_generated(const GenerationResult& result, const std::filesystem::path& out_dir);

}  // namespace crossview
