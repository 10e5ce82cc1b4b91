#pragma once

// 8-bit RGB PNG via libpng. Tensors are (3, H, W) float in [0, 1]; writing
// rounds to the nearest byte, reading divides by 255.

#include <csetjmp>
#include <cstdio>
#include <string>
#include <vector>

#include <png.h>

#include "mugs/core/checkpoint.hpp"
#include "mugs/core/tensor.hpp"

namespace mugs {

inline void write_png(const std::string& path, const Tensor& image) {
  if (image.ndim() != 3 || image.shape()[0] != 3) {
    throw ValueError("write_png: image must be (3, H, W)");
  }
  const int height = image.shape()[1];
  const int width = image.shape()[2];
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("png: cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("png: allocation failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("png: write failed for " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const float* d = image.data();
  const size_t plane = static_cast<size_t>(width) * height;
  std::vector<unsigned char> row(static_cast<size_t>(width) * 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        float v = d[c * plane + static_cast<size_t>(y) * width + x];
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        row[x * 3 + c] = static_cast<unsigned char>(v * 255.0f + 0.5f);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline Tensor read_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("png: cannot open " + path);
  unsigned char header[8];
  if (std::fread(header, 1, 8, fp) != 8 || png_sig_cmp(header, 0, 8)) {
    std::fclose(fp);
    throw IoError("png: " + path + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("png: allocation failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("png: read failed for " + path);
  }
  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_channels(png, info) != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("png: " + path + " did not decode to RGB");
  }
  Tensor out = Tensor::zeros({3, height, width});
  float* d = out.mut_data();
  const size_t plane = static_cast<size_t>(width) * height;
  std::vector<unsigned char> row(static_cast<size_t>(width) * 3);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        d[c * plane + static_cast<size_t>(y) * width + x] =
            static_cast<float>(row[x * 3 + c]) / 255.0f;
      }
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return out;
}

}  // namespace mugs
