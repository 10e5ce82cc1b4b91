#pragma once

// Monocular depth estimator stand-in: an affine remap of ground-truth depth
// plus smooth noise. Produces depth maps that are ordinally correct but
// scale/shift ambiguous, which is exactly what the fusion stage must tolerate.

#include <algorithm>
#include <cmath>
#include <vector>

#include "mugs/core/rng.hpp"
#include "mugs/core/tensor.hpp"

namespace mugs {

struct MdeParams {
  double scale = 1.0;       // must be positive: monotonicity is preserved
  double shift = 0.0;
  double noise_sigma = 0.0; // noise std as a fraction of the median depth
  uint64_t seed = 0;
};

namespace detail {

// Gaussian blur, sigma in pixels, reflect border, applied in place.
inline void blur_field(std::vector<double>& f, int width, int height, double sigma) {
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  auto reflect = [](int i, int n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return i;
  };
  std::vector<double> tmp(f.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += k[i + radius] * f[static_cast<size_t>(y) * width + reflect(x + i, width)];
      }
      tmp[static_cast<size_t>(y) * width + x] = acc;
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += k[i + radius] * tmp[static_cast<size_t>(reflect(y + i, height)) * width + x];
      }
      f[static_cast<size_t>(y) * width + x] = acc;
    }
  }
}

}  // namespace detail

inline double median_positive(const std::vector<float>& depth) {
  std::vector<float> pos;
  pos.reserve(depth.size());
  for (float d : depth) {
    if (d > 0.0f) pos.push_back(d);
  }
  if (pos.empty()) return 0.0;
  size_t mid = pos.size() / 2;
  std::nth_element(pos.begin(), pos.begin() + mid, pos.end());
  return pos[mid];
}

// D = scale * gt + shift + noise_sigma * median(gt) * n, where n is blurred
// white noise (sigma 2 px) normalised to zero mean and unit std.
inline std::vector<float> mde_stub(const std::vector<float>& gt_depth, int width, int height,
                                   const MdeParams& params) {
  if (!(params.scale > 0.0)) throw ValueError("mde_stub: scale must be positive");
  if (static_cast<size_t>(width) * height != gt_depth.size()) {
    throw ValueError("mde_stub: depth size does not match width*height");
  }
  std::vector<float> out(gt_depth.size());
  double med = median_positive(gt_depth);
  std::vector<double> noise;
  if (params.noise_sigma > 0.0 && med > 0.0) {
    Rng rng(params.seed);
    noise.resize(gt_depth.size());
    for (double& v : noise) v = rng.normal();
    detail::blur_field(noise, width, height, 2.0);
    double mean = 0.0;
    for (double v : noise) mean += v;
    mean /= static_cast<double>(noise.size());
    double var = 0.0;
    for (double v : noise) var += (v - mean) * (v - mean);
    var /= static_cast<double>(noise.size());
    double inv_std = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
    double amp = params.noise_sigma * med;
    for (double& v : noise) v = (v - mean) * inv_std * amp;
  }
  for (size_t i = 0; i < gt_depth.size(); ++i) {
    double d = params.scale * static_cast<double>(gt_depth[i]) + params.shift;
    if (!noise.empty()) d += noise[i];
    out[i] = static_cast<float>(d);
  }
  return out;
}

}  // namespace mugs
