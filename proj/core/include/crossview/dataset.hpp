#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "crossview/image.hpp"
#include "crossview/tensor.hpp"

namespace crossview {

/// One record of a JSON-lines manifest. Paths are relative to the directory
/// that contains the manifest file.
struct ManifestEntry {
  std::string id;
  std::string aerial;
  std::string ground;
  std::string aerial_seg;
  std::string ground_seg;
  int category = -1;  ///< scene category when the generator recorded one
};

struct DatasetManifest {
  std::filesystem::path root;  ///< directory relative paths resolve against
  std::vector<ManifestEntry> entries;
  std::string split = "train";  ///< "train" | "test"
  int resolution = 0;
  int n_categories = 0;

  std::size_t size() const { return entries.size(); }
};

/// Reads a JSON-lines manifest and, when present, a sibling meta.json with
/// split/resolution/category info. Verifies ids are unique and every
/// referenced file exists. Without meta.json the resolution is probed from
/// the first aerial image.
DatasetManifest load_manifest(const std::filesystem::path& manifest_path);

/// Writes only the .jsonl records; dataset-level metadata is the generator's
/// business (see make_synthetic_dataset).
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_path);

/// Palette shipped with a dataset (root/palette.json), falling back to the
/// built-in scene palette.
Palette dataset_palette(const DatasetManifest& manifest);

/// Fully decoded sample: both views plus exact label grids.
struct PairedSample {
  std::string id;
  Image aerial;
  Image ground;
  SegMap aerial_seg;
  SegMap ground_seg;
  int category = -1;
};

/// Loads one entry; colorized seg maps must decode exactly against the
/// palette (throws RangeError otherwise).
PairedSample load_sample(const DatasetManifest& manifest, std::size_t index,
                         const Palette& palette);

enum class PreprocessMode { kResize, kCenterCropResize, kQuarterCropResize };

/// Byte image -> target x target byte image.
///   kResize            plain bilinear resize
///   kCenterCropResize  central crop_side square, then resize
///   kQuarterCropResize leftmost W/4 panorama slice, then resize
Image preprocess(const Image& raw, int target, PreprocessMode mode, int crop_side = 224);

/// Deterministic core of train-time augmentation. jitter is the upscale
/// margin in pixels (0 disables); crop offsets are shared between a view's
/// image and its seg map but independent across views.
struct AugmentParams {
  bool flip = false;
  int jitter = 0;
  int aerial_dy = 0, aerial_dx = 0;
  int ground_dy = 0, ground_dx = 0;
};

/// Draws flip with p=0.5 and, when jitter > 0, per-view offsets uniform in
/// [0, jitter].
AugmentParams sample_augment(std::mt19937_64& rng, int jitter);
PairedSample augment_with(const PairedSample& sample, const AugmentParams& params);
PairedSample augment(const PairedSample& sample, std::mt19937_64& rng, int jitter);

/// Packs images into NCHW, normalizing byte inputs to [-1,1]. All images in
/// a batch must share height/width.
template <typename T>
Tensor<T> to_nchw(const std::vector<Image>& batch);
template <typename T>
Tensor<T> to_nchw(const Image& img);

/// Inverse of to_nchw for one batch element: clamp to [-1,1], map back to
/// rounded bytes.
template <typename T>
Image image_from_nchw(const Tensor<T>& t, std::int64_t n);

}  // namespace crossview
