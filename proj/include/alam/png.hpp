#pragma once

#include <string>
#include <vector>

#include "alam/image.hpp"

namespace alam {

// Minimal 8-bit RGB PNG writer (zlib-deflated, filter 0).
void write_png(const std::string& path, const Frame& frame);
void write_png_rgb8(const std::string& path, int w, int h, const std::vector<uint8_t>& rgb);

// Horizontal strip of frames with a 2px separator; used for probe grids.
void write_png_row(const std::string& path, const std::vector<Frame>& frames);

}  // namespace alam
