#pragma once

#include <filesystem>
#include <optional>

#include "crossview/dataset.hpp"
#include "crossview/metrics.hpp"
#include "crossview/trainer.hpp"

namespace crossview {

struct EvaluateOptions {
  std::filesystem::path checkpoint;  ///< ignored when self_eval is set
  std::filesystem::path manifest;    ///< evaluation split
  std::filesystem::path out_dir;     ///< report.json + per_image.csv (+ images)
  /// Manifest used to train the classifier oracle; defaults to the
  /// evaluation manifest (the oracle holds out its own 20% internally).
  std::optional<std::filesystem::path> oracle_manifest;
  std::uint64_t oracle_seed = 7;
  /// Score the ground-truth targets against themselves instead of running a
  /// model: a pipeline sanity mode (ssim == 1, accuracies == 100%).
  bool self_eval = false;
  /// Direction for self_eval (a trained checkpoint carries its own).
  Direction direction = Direction::kA2G;
  bool write_images = false;  ///< also dump generated PNGs under out_dir/images
};

/// Runs generation (or self-evaluation) over the manifest, computes every
/// metric in MetricReport, and writes out_dir/report.json plus a per-image
/// CSV of ssim/psnr/sharpness rows. Returns the report.
MetricReport evaluate(const EvaluateOptions& options);

}  // namespace crossview
