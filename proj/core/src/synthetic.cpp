#include "crossview/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "crossview/errors.hpp"
#include "crossview/png_io.hpp"
#include "crossview/rng.hpp"

namespace crossview {

namespace {

using Rgb = std::array<float, 3>;

constexpr Rgb kSoil{148.0f, 128.0f, 108.0f};
constexpr Rgb kRoadColor{85.0f, 85.0f, 85.0f};
constexpr Rgb kSkyBase{135.0f, 165.0f, 210.0f};
constexpr Rgb kVegColor{64.0f, 140.0f, 68.0f};

Rgb shade(const Rgb& rgb, double k) {
  Rgb out;
  for (int c = 0; c < 3; ++c) {
    out[c] = static_cast<float>(
        std::clamp(std::lround(static_cast<double>(rgb[c]) * k), 0l, 255l));
  }
  return out;
}

void put(Image& img, SegMap& seg, int y, int x, const Rgb& rgb, std::uint8_t label) {
  for (int c = 0; c < 3; ++c) img.at(y, x, c) = rgb[c];
  seg.at(y, x) = label;
}

void check_size(int size) {
  if (size != 64 && size != 256) {
    throw ConfigError("render_scene: size must be 64 or 256, got " + std::to_string(size));
  }
}

std::pair<Image, SegMap> render_aerial(const SceneParams& p, int size) {
  Image img(size, size, 3, PixelRange::Byte);
  SegMap seg(size, size);
  const double illum = 0.7 + 0.3 * p.sky_brightness;

  const Rgb soil = shade(kSoil, illum);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) put(img, seg, y, x, soil, kVoid);

  // Road: horizontal band across the full width.
  const double cy = (0.5 + p.road_offset) * size;
  const double hw = 0.06 * size;
  const int r0 = std::clamp(static_cast<int>(std::lround(cy - hw)), 0, size);
  const int r1 = std::clamp(static_cast<int>(std::lround(cy + hw)), 0, size);
  const Rgb road = shade(kRoadColor, illum);
  for (int y = r0; y < r1; ++y)
    for (int x = 0; x < size; ++x) put(img, seg, y, x, road, kRoad);

  // Building roof: footprint width tracks the facade height seen at ground.
  const int bx0 = static_cast<int>(std::lround(0.08 * size));
  const int by0 = static_cast<int>(std::lround(0.06 * size));
  const int bw = static_cast<int>(std::lround((0.18 + 0.35 * p.building_height) * size));
  const int bh = static_cast<int>(std::lround(0.22 * size));
  const Rgb roof = shade(hsv_to_rgb(p.building_hue, 0.55, 0.85), illum);
  for (int y = by0; y < std::min(by0 + bh, size); ++y)
    for (int x = bx0; x < std::min(bx0 + bw, size); ++x) put(img, seg, y, x, roof, kBuilding);

  // Vegetation: band along the right edge plus seeded speckle over open soil.
  const Rgb veg = shade(kVegColor, illum);
  const int band = static_cast<int>(std::lround(p.vegetation_density * 0.1 * size));
  for (int y = 0; y < size; ++y)
    for (int x = size - band; x < size; ++x) put(img, seg, y, x, veg, kVegetation);

  auto rng = make_rng(mix_seed(p.seed, 0xA5u));
  const int dot = std::max(1, size / 32);
  const int n_dots = static_cast<int>(std::lround(p.vegetation_density * 40.0));
  std::uniform_int_distribution<int> pos(0, size - dot);
  for (int d = 0; d < n_dots; ++d) {
    const int dy = pos(rng), dx = pos(rng);
    for (int y = dy; y < dy + dot; ++y) {
      for (int x = dx; x < dx + dot; ++x) {
        if (seg.at(y, x) == kVoid) put(img, seg, y, x, veg, kVegetation);
      }
    }
  }
  return {std::move(img), std::move(seg)};
}

std::pair<Image, SegMap> render_ground(const SceneParams& p, int size) {
  Image img(size, size, 3, PixelRange::Byte);
  SegMap seg(size, size);
  const double illum = 0.7 + 0.3 * p.sky_brightness;
  const int yh = static_cast<int>(std::lround(0.45 * size));

  // Sky: brightness gradient dimming toward the horizon.
  for (int y = 0; y < yh; ++y) {
    const double t = yh > 1 ? static_cast<double>(y) / (yh - 1) : 0.0;
    const Rgb sky = shade(kSkyBase, p.sky_brightness * (1.0 - 0.2 * t));
    for (int x = 0; x < size; ++x) put(img, seg, y, x, sky, kSky);
  }
  const Rgb soil = shade(kSoil, illum);
  for (int y = yh; y < size; ++y)
    for (int x = 0; x < size; ++x) put(img, seg, y, x, soil, kVoid);

  // Road: trapezoid widening from the vanishing point on the horizon.
  const double vx = (0.5 + p.road_offset) * size;
  const Rgb road = shade(kRoadColor, illum);
  for (int y = yh; y < size; ++y) {
    const double u = size - 1 > yh ? static_cast<double>(y - yh) / (size - 1 - yh) : 1.0;
    const double hw = (0.03 + 0.22 * u) * size;
    const int x0 = std::clamp(static_cast<int>(std::lround(vx - hw)), 0, size);
    const int x1 = std::clamp(static_cast<int>(std::lround(vx + hw)), 0, size);
    for (int x = x0; x < x1; ++x) put(img, seg, y, x, road, kRoad);
  }

  // Vegetation strip hugging the horizon; never paints over the road.
  const Rgb veg = shade(kVegColor, illum);
  const int strip = static_cast<int>(std::lround(p.vegetation_density * 0.12 * size));
  const int vx0 = static_cast<int>(std::lround(0.62 * size));
  const int vx1 = static_cast<int>(std::lround(0.97 * size));
  for (int y = yh; y < std::min(yh + strip, size); ++y) {
    for (int x = vx0; x < vx1; ++x) {
      if (seg.at(y, x) == kVoid) put(img, seg, y, x, veg, kVegetation);
    }
  }

  // Building facade: frontmost layer, hue is the category-defining feature.
  const int fx0 = static_cast<int>(std::lround(0.06 * size));
  const int fx1 = static_cast<int>(std::lround(0.34 * size));
  const int ft = std::max(0, yh - static_cast<int>(std::lround(p.building_height * 0.8 * yh)));
  const int fb = std::min(size, yh + static_cast<int>(std::lround(0.18 * (size - yh))));
  const Rgb facade = shade(hsv_to_rgb(p.building_hue, 0.5, 0.7), illum);
  for (int y = ft; y < fb; ++y)
    for (int x = fx0; x < fx1; ++x) put(img, seg, y, x, facade, kBuilding);

  return {std::move(img), std::move(seg)};
}

}  // namespace

int category_of(double building_hue, int n_categories) {
  const int c = static_cast<int>(std::floor(building_hue * n_categories));
  return std::clamp(c, 0, n_categories - 1);
}

SceneParams sample_scene(std::mt19937_64& rng, int index, int n_categories) {
  if (n_categories < 1) throw ConfigError("sample_scene: n_categories must be >= 1");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  SceneParams p;
  p.n_categories = n_categories;
  const int cat = index % n_categories;  // stratified: near-uniform histogram
  p.building_hue = (cat + u01(rng)) / n_categories;
  p.road_offset = -0.3 + 0.6 * u01(rng);
  p.building_height = 0.1 + 0.5 * u01(rng);
  p.vegetation_density = u01(rng);
  p.sky_brightness = 0.4 + 0.6 * u01(rng);
  p.scene_category = category_of(p.building_hue, n_categories);
  return p;
}

std::pair<Image, SegMap> render_scene(const SceneParams& params, View view, int size) {
  check_size(size);
  return view == View::kAerial ? render_aerial(params, size) : render_ground(params, size);
}

DatasetManifest make_synthetic_dataset(int n, std::uint64_t seed, int size,
                                       const std::filesystem::path& out_dir,
                                       const std::string& split, int n_categories) {
  if (n < 1) throw ConfigError("make_synthetic_dataset: n must be >= 1");
  check_size(size);
  if (split != "train" && split != "test") {
    throw ConfigError("make_synthetic_dataset: split must be 'train' or 'test'");
  }

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  for (const char* sub : {"aerial", "ground", "aerial_seg", "ground_seg"}) {
    fs::create_directories(out_dir / sub);
  }

  const Palette& palette = scene_palette();
  DatasetManifest m;
  m.root = out_dir;
  m.split = split;
  m.resolution = size;
  m.n_categories = n_categories;

  auto rng = make_rng(seed);
  char id_buf[64];
  for (int i = 0; i < n; ++i) {
    SceneParams p = sample_scene(rng, i, n_categories);
    p.seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    std::snprintf(id_buf, sizeof(id_buf), "s%llu_%05d",
                  static_cast<unsigned long long>(seed), i);
    ManifestEntry e;
    e.id = id_buf;
    e.aerial = "aerial/" + e.id + ".png";
    e.ground = "ground/" + e.id + ".png";
    e.aerial_seg = "aerial_seg/" + e.id + ".png";
    e.ground_seg = "ground_seg/" + e.id + ".png";
    e.category = p.scene_category;

    const auto [a_img, a_seg] = render_scene(p, View::kAerial, size);
    const auto [g_img, g_seg] = render_scene(p, View::kGround, size);
    write_png(out_dir / e.aerial, a_img);
    write_png(out_dir / e.ground, g_img);
    write_png(out_dir / e.aerial_seg, palette.colorize(a_seg));
    write_png(out_dir / e.ground_seg, palette.colorize(g_seg));
    m.entries.push_back(std::move(e));
  }

  {
    std::ofstream out(out_dir / "palette.json");
    out << palette.to_json() << "\n";
  }
  {
    nlohmann::json meta;
    meta["split"] = split;
    meta["resolution"] = size;
    meta["n_categories"] = n_categories;
    meta["seed"] = seed;
    meta["n"] = n;
    std::ofstream out(out_dir / "meta.json");
    out << meta.dump(2) << "\n";
  }
  save_manifest(m, out_dir / "manifest.jsonl");
  return m;
}

}  // namespace crossview
