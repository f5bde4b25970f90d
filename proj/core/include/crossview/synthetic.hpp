#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <utility>

#include "crossview/dataset.hpp"
#include "crossview/image.hpp"

namespace crossview {

/// Latent description of one paired scene. Every rendered pixel in both
/// views is a pure function of these fields.
struct SceneParams {
  std::uint64_t seed = 0;           ///< drives the vegetation speckle only
  double road_offset = 0.0;         ///< [-0.3, 0.3], shifts the road axis
  double building_height = 0.3;     ///< [0.1, 0.6]
  double building_hue = 0.0;        ///< [0, 1)
  double vegetation_density = 0.5;  ///< [0, 1]
  double sky_brightness = 0.8;      ///< [0.4, 1]
  int scene_category = 0;           ///< quantized building_hue
  int n_categories = 8;
};

enum class View { kAerial, kGround };

/// scene_category is the hue bucket: floor(hue * n) clamped to [0, n).
int category_of(double building_hue, int n_categories);

/// Draws one scene. Hue is stratified by sample index so the category
/// histogram stays near-uniform; the remaining fields are uniform in range.
SceneParams sample_scene(std::mt19937_64& rng, int index, int n_categories);

/// Deterministic renderer. Aerial: top-down soil/road-band/building-roof/
/// vegetation layout (no sky). Ground: sky gradient above a horizon, road
/// trapezoid, vegetation strip, building facade. size must be 64 or 256.
std::pair<Image, SegMap> render_scene(const SceneParams& params, View view, int size);

/// Renders n paired samples into out_dir (PNG images + colorized seg maps,
/// palette.json, meta.json, manifest.jsonl) and returns the manifest.
DatasetManifest make_synthetic_dataset(int n, std::uint64_t seed, int size,
                                       const std::filesystem::path& out_dir,
                                       const std::string& split = "train",
                                       int n_categories = 8);

}  // namespace crossview
