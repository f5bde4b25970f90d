#include "crossview/image.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace crossview {

namespace {

void check_range(const Image& img, PixelRange expected, const char* op) {
  if (img.range != expected) {
    throw RangeError(std::string(op) + ": image has the wrong range tag");
  }
  const float lo = expected == PixelRange::Byte ? 0.f : -1.f;
  const float hi = expected == PixelRange::Byte ? 255.f : 1.f;
  for (float v : img.data) {
    if (!(v >= lo && v <= hi)) {
      throw RangeError(std::string(op) + ": pixel value " + std::to_string(v) +
                       " outside declared range");
    }
  }
}

}  // namespace

Image normalize(const Image& img) {
  check_range(img, PixelRange::Byte, "normalize");
  Image out(img.height, img.width, img.channels, PixelRange::Normalized);
  for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i] / 127.5f - 1.f;
  return out;
}

Image denormalize(const Image& img) {
  check_range(img, PixelRange::Normalized, "denormalize");
  Image out(img.height, img.width, img.channels, PixelRange::Byte);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const float v = (img.data[i] + 1.f) * 127.5f;
    out.data[i] = static_cast<float>(std::clamp<long>(std::lround(v), 0, 255));
  }
  return out;
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw DimensionError("resize: target size must be positive");
  if (out_h == img.height && out_w == img.width) return img;
  Image out(out_h, out_w, img.channels, img.range);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = (1.0 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
        const double bot = (1.0 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
        double v = (1.0 - wy) * top + wy * bot;
        if (img.range == PixelRange::Byte) {
          v = std::clamp<double>(std::lround(v), 0, 255);
        } else {
          v = std::clamp(v, -1.0, 1.0);
        }
        out.at(y, x, c) = static_cast<float>(v);
      }
    }
  }
  return out;
}

Image crop(const Image& img, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > img.height || x0 + w > img.width) {
    throw DimensionError("crop: window exceeds image bounds");
  }
  Image out(h, w, img.channels, img.range);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.height, img.width, img.channels, img.range);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

bool images_equal(const Image& a, const Image& b) {
  return a.height == b.height && a.width == b.width && a.channels == b.channels &&
         a.range == b.range && a.data == b.data;
}

std::array<float, 3> hsv_to_rgb(double h, double s, double v) {
  const double hh = h * 6.0;
  const int sector = std::min(5, static_cast<int>(hh));
  const double f = hh - sector;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  double r, g, b;
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  return {static_cast<float>(std::lround(r * 255.0)), static_cast<float>(std::lround(g * 255.0)),
          static_cast<float>(std::lround(b * 255.0))};
}

SegMap flip_horizontal(const SegMap& m) {
  SegMap out(m.height, m.width);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) out.at(y, x) = m.at(y, m.width - 1 - x);
  return out;
}

SegMap crop(const SegMap& m, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > m.height || x0 + w > m.width) {
    throw DimensionError("crop: window exceeds seg map bounds");
  }
  SegMap out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(y, x) = m.at(y0 + y, x0 + x);
  return out;
}

SegMap resize_nearest(const SegMap& m, int out_h, int out_w) {
  if (out_h == m.height && out_w == m.width) return m;
  SegMap out(out_h, out_w);
  const double sy = static_cast<double>(m.height) / out_h;
  const double sx = static_cast<double>(m.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    int src_y = static_cast<int>((y + 0.5) * sy);
    src_y = std::clamp(src_y, 0, m.height - 1);
    for (int x = 0; x < out_w; ++x) {
      int src_x = static_cast<int>((x + 0.5) * sx);
      src_x = std::clamp(src_x, 0, m.width - 1);
      out.at(y, x) = m.at(src_y, src_x);
    }
  }
  return out;
}

Palette::Palette(std::vector<std::string> names, std::vector<std::array<std::uint8_t, 3>> colors)
    : names_(std::move(names)), colors_(std::move(colors)) {
  if (names_.size() != colors_.size() || names_.empty()) {
    throw ConfigError("palette: names and colors must be non-empty and match");
  }
  for (std::size_t i = 0; i < colors_.size(); ++i) {
    for (std::size_t j = i + 1; j < colors_.size(); ++j) {
      if (colors_[i] == colors_[j]) throw ConfigError("palette: duplicate color");
    }
  }
}

int Palette::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  throw ConfigError("palette: unknown class name " + name);
}

Image Palette::colorize(const SegMap& m) const {
  Image out(m.height, m.width, 3, PixelRange::Byte);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const auto cls = m.at(y, x);
      if (cls >= n_classes()) throw RangeError("colorize: label outside palette");
      const auto& rgb = colors_[cls];
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = rgb[static_cast<std::size_t>(c)];
    }
  }
  return out;
}

SegMap Palette::decode_exact(const Image& img) const {
  if (img.channels != 3 || img.range != PixelRange::Byte) {
    throw RangeError("decode_exact: expects a 3-channel byte image");
  }
  SegMap out(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      int found = -1;
      for (int cls = 0; cls < n_classes(); ++cls) {
        const auto& rgb = colors_[static_cast<std::size_t>(cls)];
        if (img.at(y, x, 0) == rgb[0] && img.at(y, x, 1) == rgb[1] && img.at(y, x, 2) == rgb[2]) {
          found = cls;
          break;
        }
      }
      if (found < 0) throw RangeError("decode_exact: color not in palette");
      out.at(y, x) = static_cast<std::uint8_t>(found);
    }
  }
  return out;
}

SegMap Palette::quantize(const Image& img) const {
  if (img.channels != 3 || img.range != PixelRange::Byte) {
    throw RangeError("quantize: expects a 3-channel byte image");
  }
  SegMap out(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      int best = 0;
      double best_d2 = 1e30;
      for (int cls = 0; cls < n_classes(); ++cls) {
        const auto& rgb = colors_[static_cast<std::size_t>(cls)];
        double d2 = 0;
        for (int c = 0; c < 3; ++c) {
          const double d = img.at(y, x, c) - rgb[static_cast<std::size_t>(c)];
          d2 += d * d;
        }
        if (d2 < best_d2) {
          best_d2 = d2;
          best = cls;
        }
      }
      out.at(y, x) = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

std::string Palette::to_json() const {
  nlohmann::ordered_json j;
  for (int cls = 0; cls < n_classes(); ++cls) {
    const auto& rgb = colors_[static_cast<std::size_t>(cls)];
    j[names_[static_cast<std::size_t>(cls)]] = {rgb[0], rgb[1], rgb[2]};
  }
  return j.dump(2);
}

Palette Palette::from_json(const std::string& text) {
  const auto j = nlohmann::ordered_json::parse(text);
  std::vector<std::string> names;
  std::vector<std::array<std::uint8_t, 3>> colors;
  for (const auto& [key, value] : j.items()) {
    names.push_back(key);
    colors.push_back({value.at(0).get<std::uint8_t>(), value.at(1).get<std::uint8_t>(),
                      value.at(2).get<std::uint8_t>()});
  }
  return Palette(std::move(names), std::move(colors));
}

const Palette& scene_palette() {
  static const Palette p({"void", "sky", "road", "building", "vegetation"},
                         {{{0, 0, 0}},
                          {{70, 130, 180}},
                          {{128, 128, 128}},
                          {{220, 60, 60}},
                          {{60, 180, 75}}});
  return p;
}

}  // namespace crossview
