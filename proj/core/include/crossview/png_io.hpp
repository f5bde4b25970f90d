#pragma once

#include <filesystem>

#include "crossview/image.hpp"

namespace crossview {

/// Reads an 8-bit PNG as a 3-channel byte image (gray/palette/alpha inputs are
/// expanded/stripped to RGB).
Image read_png(const std::filesystem::path& path);

/// Writes a 3-channel byte image as an 8-bit RGB PNG (lossless).
void write_png(const std::filesystem::path& path, const Image& img);

}  // namespace crossview
