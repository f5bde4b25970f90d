#include "crossview/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "crossview/errors.hpp"
#include "crossview/png_io.hpp"

namespace crossview {

namespace {

using json = nlohmann::json;

std::string require_string(const json& rec, const char* key, std::size_t line_no) {
  if (!rec.contains(key) || !rec[key].is_string()) {
    throw ConfigError("manifest line " + std::to_string(line_no) + ": missing string key '" +
                      key + "'");
  }
  return rec[key].get<std::string>();
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("load_manifest: cannot open " + manifest_path.string());

  DatasetManifest m;
  m.root = manifest_path.has_parent_path() ? manifest_path.parent_path()
                                           : std::filesystem::path(".");

  std::string line;
  std::size_t line_no = 0;
  std::unordered_set<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ConfigError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    ManifestEntry e;
    e.id = require_string(rec, "id", line_no);
    e.aerial = require_string(rec, "aerial", line_no);
    e.ground = require_string(rec, "ground", line_no);
    e.aerial_seg = require_string(rec, "aerial_seg", line_no);
    e.ground_seg = require_string(rec, "ground_seg", line_no);
    if (rec.contains("category")) e.category = rec["category"].get<int>();
    if (!seen_ids.insert(e.id).second) {
      throw ConfigError("manifest: duplicate id '" + e.id + "'");
    }
    for (const std::string* rel : {&e.aerial, &e.ground, &e.aerial_seg, &e.ground_seg}) {
      if (!std::filesystem::exists(m.root / *rel)) {
        throw IoError("manifest references missing file: " + (m.root / *rel).string());
      }
    }
    m.entries.push_back(std::move(e));
  }

  const auto meta_path = m.root / "meta.json";
  if (std::filesystem::exists(meta_path)) {
    std::ifstream mf(meta_path);
    json meta = json::parse(mf);
    if (meta.contains("split")) m.split = meta["split"].get<std::string>();
    if (meta.contains("resolution")) m.resolution = meta["resolution"].get<int>();
    if (meta.contains("n_categories")) m.n_categories = meta["n_categories"].get<int>();
  }
  if (m.resolution == 0 && !m.entries.empty()) {
    const Image probe = read_png(m.root / m.entries.front().aerial);
    if (probe.height == probe.width) m.resolution = probe.height;
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_path) {
  std::ofstream out(manifest_path);
  if (!out) throw IoError("save_manifest: cannot open " + manifest_path.string());
  for (const ManifestEntry& e : manifest.entries) {
    json rec;
    rec["id"] = e.id;
    rec["aerial"] = e.aerial;
    rec["ground"] = e.ground;
    rec["aerial_seg"] = e.aerial_seg;
    rec["ground_seg"] = e.ground_seg;
    if (e.category >= 0) rec["category"] = e.category;
    out << rec.dump() << "\n";
  }
  if (!out) throw IoError("save_manifest: write failed for " + manifest_path.string());
}

Palette dataset_palette(const DatasetManifest& manifest) {
  const auto palette_path = manifest.root / "palette.json";
  if (std::filesystem::exists(palette_path)) {
    std::ifstream in(palette_path);
    std::stringstream ss;
    ss << in.rdbuf();
    return Palette::from_json(ss.str());
  }
  return scene_palette();
}

PairedSample load_sample(const DatasetManifest& manifest, std::size_t index,
                         const Palette& palette) {
  if (index >= manifest.entries.size()) {
    throw DimensionError("load_sample: index " + std::to_string(index) + " >= " +
                         std::to_string(manifest.entries.size()));
  }
  const ManifestEntry& e = manifest.entries[index];
  PairedSample s;
  s.id = e.id;
  s.category = e.category;
  s.aerial = read_png(manifest.root / e.aerial);
  s.ground = read_png(manifest.root / e.ground);
  s.aerial_seg = palette.decode_exact(read_png(manifest.root / e.aerial_seg));
  s.ground_seg = palette.decode_exact(read_png(manifest.root / e.ground_seg));
  if (s.aerial.height != s.ground.height || s.aerial.width != s.ground.width) {
    throw DimensionError("load_sample: aerial/ground resolution mismatch for id " + e.id);
  }
  return s;
}

Image preprocess(const Image& raw, int target, PreprocessMode mode, int crop_side) {
  if (raw.range != PixelRange::Byte) throw RangeError("preprocess: expects a byte-range image");
  if (target < 1) throw ConfigError("preprocess: target must be >= 1");
  switch (mode) {
    case PreprocessMode::kResize:
      return resize_bilinear(raw, target, target);
    case PreprocessMode::kCenterCropResize: {
      if (raw.height < crop_side) {
        throw DimensionError("preprocess: height " + std::to_string(raw.height) + " < crop " +
                             std::to_string(crop_side));
      }
      if (raw.width < crop_side) {
        throw DimensionError("preprocess: width " + std::to_string(raw.width) + " < crop " +
                             std::to_string(crop_side));
      }
      const Image c =
          crop(raw, (raw.height - crop_side) / 2, (raw.width - crop_side) / 2, crop_side,
               crop_side);
      return resize_bilinear(c, target, target);
    }
    case PreprocessMode::kQuarterCropResize: {
      const int slice_w = raw.width / 4;
      if (slice_w < 1) {
        throw DimensionError("preprocess: width " + std::to_string(raw.width) +
                             " too small for quarter slice");
      }
      const Image c = crop(raw, 0, 0, raw.height, slice_w);
      return resize_bilinear(c, target, target);
    }
  }
  throw ConfigError("preprocess: unknown mode");
}

AugmentParams sample_augment(std::mt19937_64& rng, int jitter) {
  AugmentParams p;
  p.jitter = jitter;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  p.flip = coin(rng) < 0.5;
  if (jitter > 0) {
    std::uniform_int_distribution<int> off(0, jitter);
    p.aerial_dy = off(rng);
    p.aerial_dx = off(rng);
    p.ground_dy = off(rng);
    p.ground_dx = off(rng);
  }
  return p;
}

namespace {

/// Upscale by the jitter margin, then crop back to the original size at
/// (dy, dx). Bilinear for pixels, nearest for labels, identical offsets so
/// the pair stays aligned.
void jitter_view(Image& img, SegMap& seg, int jitter, int dy, int dx) {
  if (jitter <= 0) return;
  const int h = img.height, w = img.width;
  const Image up = resize_bilinear(img, h + jitter, w + jitter);
  const SegMap up_seg = resize_nearest(seg, h + jitter, w + jitter);
  img = crop(up, dy, dx, h, w);
  seg = crop(up_seg, dy, dx, h, w);
}

}  // namespace

PairedSample augment_with(const PairedSample& sample, const AugmentParams& params) {
  PairedSample out = sample;
  if (params.flip) {
    out.aerial = flip_horizontal(out.aerial);
    out.ground = flip_horizontal(out.ground);
    out.aerial_seg = flip_horizontal(out.aerial_seg);
    out.ground_seg = flip_horizontal(out.ground_seg);
  }
  jitter_view(out.aerial, out.aerial_seg, params.jitter, params.aerial_dy, params.aerial_dx);
  jitter_view(out.ground, out.ground_seg, params.jitter, params.ground_dy, params.ground_dx);
  return out;
}

PairedSample augment(const PairedSample& sample, std::mt19937_64& rng, int jitter) {
  return augment_with(sample, sample_augment(rng, jitter));
}

template <typename T>
Tensor<T> to_nchw(const std::vector<Image>& batch) {
  if (batch.empty()) throw ShapeError("to_nchw: empty batch");
  const int h = batch.front().height, w = batch.front().width;
  const std::int64_t n = static_cast<std::int64_t>(batch.size());
  Tensor<T> t({n, 3, h, w});
  for (std::int64_t i = 0; i < n; ++i) {
    const Image& img = batch[static_cast<std::size_t>(i)];
    if (img.height != h || img.width != w || img.channels != 3) {
      throw ShapeError("to_nchw: mismatched image shapes in batch");
    }
    const bool byte_range = img.range == PixelRange::Byte;
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const float v = img.at(y, x, c);
          t.at(i, c, y, x) = byte_range ? static_cast<T>(v / 127.5f - 1.0f) : static_cast<T>(v);
        }
      }
    }
  }
  return t;
}

template <typename T>
Tensor<T> to_nchw(const Image& img) {
  return to_nchw<T>(std::vector<Image>{img});
}

template <typename T>
Image image_from_nchw(const Tensor<T>& t, std::int64_t n) {
  if (t.rank() != 4 || t.dim(1) != 3) {
    throw ShapeError("image_from_nchw: expected (N,3,H,W), got " + shape_string(t.shape()));
  }
  if (n < 0 || n >= t.dim(0)) throw ShapeError("image_from_nchw: batch index out of range");
  const int h = static_cast<int>(t.dim(2)), w = static_cast<int>(t.dim(3));
  Image img(h, w, 3, PixelRange::Byte);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = std::clamp(static_cast<double>(t.at(n, c, y, x)), -1.0, 1.0);
        img.at(y, x, c) = static_cast<float>(std::lround((v + 1.0) * 127.5));
      }
    }
  }
  return img;
}

template Tensor<float> to_nchw<float>(const std::vector<Image>&);
template Tensor<double> to_nchw<double>(const std::vector<Image>&);
template Tensor<float> to_nchw<float>(const Image&);
template Tensor<double> to_nchw<double>(const Image&);
template Image image_from_nchw<float>(const Tensor<float>&, std::int64_t);
template Image image_from_nchw<double>(const Tensor<double>&, std::int64_t);

}  // namespace crossview
