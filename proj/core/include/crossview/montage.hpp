#pragma once

#include <string>
#include <vector>

#include "crossview/image.hpp"

namespace crossview {

/// Tiles byte images into a grid with a uniform gutter. All tiles in a grid
/// must share one size. Missing tiles (shorter rows) render as background.
Image tile_grid(const std::vector<std::vector<Image>>& rows, int pad = 2,
                std::uint8_t background = 24);

/// Draws text at (y, x) using the built-in 5x7 bitmap font (uppercased;
/// unknown glyphs render as blanks). scale integer-zooms the glyphs.
void draw_label(Image& img, int y, int x, const std::string& text, int scale = 1,
                std::uint8_t value = 255);

/// tile_grid plus a header band with one label centered over each column.
Image labeled_grid(const std::vector<std::string>& col_labels,
                   const std::vector<std::vector<Image>>& rows, int pad = 2);

}  // namespace crossview
