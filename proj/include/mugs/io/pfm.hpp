#pragma once

// Grayscale PFM ("Pf"), little-endian (negative scale), rows stored
// bottom-to-top as the format requires. In-memory layout is row-major
// top-down everywhere else in this codebase; these functions flip.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mugs/core/checkpoint.hpp"

namespace mugs {

inline void write_pfm(const std::string& path, int width, int height,
                      const std::vector<float>& data) {
  if (static_cast<size_t>(width) * height != data.size()) {
    throw ValueError("write_pfm: data size does not match width*height");
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("pfm: cannot write " + path);
  f << "Pf\n" << width << " " << height << "\n-1.0\n";
  std::vector<unsigned char> row(static_cast<size_t>(width) * 4);
  for (int y = height - 1; y >= 0; --y) {
    const float* src = data.data() + static_cast<size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      uint32_t bits;
      std::memcpy(&bits, &src[x], 4);
      row[x * 4 + 0] = static_cast<unsigned char>(bits & 0xff);
      row[x * 4 + 1] = static_cast<unsigned char>((bits >> 8) & 0xff);
      row[x * 4 + 2] = static_cast<unsigned char>((bits >> 16) & 0xff);
      row[x * 4 + 3] = static_cast<unsigned char>((bits >> 24) & 0xff);
    }
    f.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!f) throw IoError("pfm: write failed for " + path);
}

struct PfmImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // row-major, top-down
};

inline PfmImage read_pfm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("pfm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "Pf") throw IoError("pfm: " + path + " is not a grayscale PFM (magic '" + magic + "')");
  int width = 0, height = 0;
  double scale = 0.0;
  f >> width >> height >> scale;
  if (!f || width < 1 || height < 1) throw IoError("pfm: bad header in " + path);
  if (scale == 0.0) throw IoError("pfm: zero scale in " + path);
  f.get();  // single whitespace byte after the scale token
  PfmImage img;
  img.width = width;
  img.height = height;
  img.data.resize(static_cast<size_t>(width) * height);
  std::vector<unsigned char> row(static_cast<size_t>(width) * 4);
  bool little = scale < 0.0;
  for (int y = height - 1; y >= 0; --y) {
    f.read(reinterpret_cast<char*>(row.data()), row.size());
    if (!f) throw IoError("pfm: truncated pixel data in " + path);
    float* dst = img.data.data() + static_cast<size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      uint32_t bits;
      if (little) {
        bits = static_cast<uint32_t>(row[x * 4 + 0]) | (static_cast<uint32_t>(row[x * 4 + 1]) << 8) |
               (static_cast<uint32_t>(row[x * 4 + 2]) << 16) |
               (static_cast<uint32_t>(row[x * 4 + 3]) << 24);
      } else {
        bits = static_cast<uint32_t>(row[x * 4 + 3]) | (static_cast<uint32_t>(row[x * 4 + 2]) << 8) |
               (static_cast<uint32_t>(row[x * 4 + 1]) << 16) |
               (static_cast<uint32_t>(row[x * 4 + 0]) << 24);
      }
      std::memcpy(&dst[x], &bits, 4);
    }
  }
  return img;
}

}  // namespace mugs
