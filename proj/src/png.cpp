#include "alam/png.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

namespace alam {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
  put_u32(out, static_cast<uint32_t>(data.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uint32_t crc = static_cast<uint32_t>(
      ::crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
  put_u32(out, crc);
}

uint8_t to_u8(float v) {
  const float c = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return static_cast<uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

void write_png_rgb8(const std::string& path, int w, int h, const std::vector<uint8_t>& rgb) {
  require(rgb.size() == static_cast<size_t>(w) * h * 3, "write_png: buffer size mismatch");
  // filter byte 0 per scanline
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(h) * (1 + static_cast<size_t>(w) * 3));
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);
    const uint8_t* row = rgb.data() + static_cast<size_t>(y) * w * 3;
    raw.insert(raw.end(), row, row + static_cast<size_t>(w) * 3);
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(comp_len);
  const int rc = compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6);
  require(rc == Z_OK, "write_png: deflate failed");
  comp.resize(comp_len);

  std::vector<uint8_t> out{0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  std::vector<uint8_t> ihdr;
  put_u32(ihdr, static_cast<uint32_t>(w));
  put_u32(ihdr, static_cast<uint32_t>(h));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type RGB
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", comp);
  put_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  require(f.good(), "write_png: cannot open " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  require(f.good(), "write_png: write failed for " + path);
}

void write_png(const std::string& path, const Frame& frame) {
  require(frame.c == 3, "write_png: need RGB frame");
  std::vector<uint8_t> rgb(frame.px.size());
  for (size_t i = 0; i < frame.px.size(); ++i) rgb[i] = to_u8(frame.px[i]);
  write_png_rgb8(path, frame.w, frame.h, rgb);
}

void write_png_row(const std::string& path, const std::vector<Frame>& frames) {
  require(!frames.empty(), "write_png_row: no frames");
  const int h = frames[0].h, w = frames[0].w;
  const int sep = 2;
  const int total_w = static_cast<int>(frames.size()) * w +
                      (static_cast<int>(frames.size()) - 1) * sep;
  std::vector<uint8_t> rgb(static_cast<size_t>(h) * total_w * 3, 255);
  for (size_t f = 0; f < frames.size(); ++f) {
    require(frames[f].h == h && frames[f].w == w && frames[f].c == 3,
            "write_png_row: frame shape mismatch");
    const int x0 = static_cast<int>(f) * (w + sep);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < 3; ++ch)
          rgb[(static_cast<size_t>(y) * total_w + x0 + x) * 3 + ch] = to_u8(frames[f].at(y, x, ch));
  }
  write_png_rgb8(path, total_w, h, rgb);
}

}  // namespace alam

