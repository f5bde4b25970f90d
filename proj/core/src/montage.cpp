#include "crossview/montage.hpp"

#include <algorithm>
#include <cctype>

#include "crossview/errors.hpp"

namespace crossview {

namespace {

struct Glyph {
  char ch;
  std::uint8_t rows[7];  // 5 bits per row, MSB = leftmost column
};

constexpr Glyph kFont[] = {
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
    {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x06, 0x08, 0x10, 0x1F}},
    {'3', {0x0E, 0x11, 0x01, 0x06, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
    {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0E}},
    {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
    {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
    {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11}},
    {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}},
    {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
};

const Glyph* find_glyph(char c) {
  const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const Glyph& g : kFont) {
    if (g.ch == u) return &g;
  }
  return nullptr;
}

}  // namespace

Image tile_grid(const std::vector<std::vector<Image>>& rows, int pad, std::uint8_t background) {
  if (rows.empty() || rows.front().empty()) throw DimensionError("tile_grid: empty grid");
  const Image& first = rows.front().front();
  const int th = first.height, tw = first.width;
  std::size_t n_cols = 0;
  for (const auto& row : rows) {
    n_cols = std::max(n_cols, row.size());
    for (const Image& t : row) {
      if (t.height != th || t.width != tw || t.range != PixelRange::Byte) {
        throw DimensionError("tile_grid: tiles must be equal-size byte images");
      }
    }
  }
  const int n_rows = static_cast<int>(rows.size());
  const int out_h = pad + n_rows * (th + pad);
  const int out_w = pad + static_cast<int>(n_cols) * (tw + pad);
  Image out(out_h, out_w, 3, PixelRange::Byte);
  std::fill(out.data.begin(), out.data.end(), static_cast<float>(background));
  for (int r = 0; r < n_rows; ++r) {
    for (std::size_t c = 0; c < rows[static_cast<std::size_t>(r)].size(); ++c) {
      const Image& t = rows[static_cast<std::size_t>(r)][c];
      const int y0 = pad + r * (th + pad);
      const int x0 = pad + static_cast<int>(c) * (tw + pad);
      for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x)
          for (int ch = 0; ch < 3; ++ch) out.at(y0 + y, x0 + x, ch) = t.at(y, x, ch);
    }
  }
  return out;
}

void draw_label(Image& img, int y, int x, const std::string& text, int scale,
                std::uint8_t value) {
  int cx = x;
  for (char c : text) {
    const Glyph* g = find_glyph(c);
    if (g) {
      for (int gy = 0; gy < 7; ++gy) {
        for (int gx = 0; gx < 5; ++gx) {
          if (!(g->rows[gy] & (1 << (4 - gx)))) continue;
          for (int sy = 0; sy < scale; ++sy) {
            for (int sx = 0; sx < scale; ++sx) {
              const int py = y + gy * scale + sy;
              const int px = cx + gx * scale + sx;
              if (py < 0 || py >= img.height || px < 0 || px >= img.width) continue;
              for (int ch = 0; ch < 3; ++ch) img.at(py, px, ch) = value;
            }
          }
        }
      }
    }
    cx += 6 * scale;
  }
}

Image labeled_grid(const std::vector<std::string>& col_labels,
                   const std::vector<std::vector<Image>>& rows, int pad) {
  Image body = tile_grid(rows, pad);
  const int tw = rows.front().front().width;
  const int scale = std::max(1, tw / 64);
  const int band = 7 * scale + 2 * pad;
  Image out(body.height + band, body.width, 3, PixelRange::Byte);
  std::fill(out.data.begin(), out.data.end(), 24.0f);
  for (int y = 0; y < body.height; ++y)
    for (int x = 0; x < body.width; ++x)
      for (int ch = 0; ch < 3; ++ch) out.at(band + y, x, ch) = body.at(y, x, ch);
  for (std::size_t c = 0; c < col_labels.size(); ++c) {
    const int text_w = static_cast<int>(col_labels[c].size()) * 6 * scale;
    const int x0 = pad + static_cast<int>(c) * (tw + pad) + std::max(0, (tw - text_w) / 2);
    draw_label(out, pad, x0, col_labels[c], scale);
  }
  return out;
}

}  // namespace crossview
