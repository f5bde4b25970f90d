#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "crossview/errors.hpp"

namespace crossview {

/// Pixel value out of the declared range for an operation.
class RangeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class PixelRange {
  Byte,        // [0, 255]
  Normalized,  // [-1, 1], the generator's Tanh range
};

/// H x W x C row-major raster. Byte images hold integer values stored as float.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  PixelRange range = PixelRange::Byte;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c, PixelRange r)
      : height(h), width(w), channels(c), range(r),
        data(static_cast<std::size_t>(h) * w * c, 0.f) {}

  float& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
};

/// [0,255] -> [-1,1] linear map. Throws RangeError on wrong tag or out-of-range values.
Image normalize(const Image& img);
/// [-1,1] -> [0,255], rounded to the nearest integer value.
Image denormalize(const Image& img);

/// Bilinear resize with half-pixel centers; identity when sizes match.
/// Byte images are rounded back to integer values.
Image resize_bilinear(const Image& img, int out_h, int out_w);

Image crop(const Image& img, int y0, int x0, int h, int w);
Image flip_horizontal(const Image& img);

bool images_equal(const Image& a, const Image& b);

/// h in [0,1), s,v in [0,1]; returns rgb in [0,255].
std::array<float, 3> hsv_to_rgb(double h, double s, double v);

/// Integer class-label grid. Rendering/IO goes through a Palette.
struct SegMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  SegMap() = default;
  SegMap(int h, int w) : height(h), width(w), labels(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

SegMap flip_horizontal(const SegMap& m);
SegMap crop(const SegMap& m, int y0, int x0, int h, int w);
/// Nearest-neighbor resize; labels are never interpolated.
SegMap resize_nearest(const SegMap& m, int out_h, int out_w);

/// Class name -> RGB table. Colorized seg maps are exact palette lookups, so
/// they decode back to label grids losslessly.
class Palette {
 public:
  Palette() = default;
  Palette(std::vector<std::string> names, std::vector<std::array<std::uint8_t, 3>> colors);

  int n_classes() const { return static_cast<int>(names_.size()); }
  const std::string& name(int cls) const { return names_[static_cast<std::size_t>(cls)]; }
  const std::array<std::uint8_t, 3>& color(int cls) const {
    return colors_[static_cast<std::size_t>(cls)];
  }
  int index_of(const std::string& name) const;

  Image colorize(const SegMap& m) const;
  /// Exact inverse of colorize; throws RangeError on any unknown color.
  SegMap decode_exact(const Image& img) const;
  /// Nearest-color quantization (squared RGB distance, ties to the lowest class
  /// index); used on generated 3-channel seg outputs.
  SegMap quantize(const Image& img) const;

  std::string to_json() const;
  static Palette from_json(const std::string& text);

 private:
  std::vector<std::string> names_;
  std::vector<std::array<std::uint8_t, 3>> colors_;
};

/// The synthetic scene label space: void, sky, road, building, vegetation.
enum SceneClass : std::uint8_t {
  kVoid = 0,
  kSky = 1,
  kRoad = 2,
  kBuilding = 3,
  kVegetation = 4,
};

const Palette& scene_palette();

}  // namespace crossview
