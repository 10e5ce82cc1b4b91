#pragma once

// Shared 2D feature encoder. One weight set serves every view; forward
// returns coarse features at 1/4 resolution and fine features at 1/2.

#include "mugs/core/checkpoint.hpp"
#include "mugs/core/conv.hpp"
#include "mugs/core/ops.hpp"
#include "mugs/core/rng.hpp"

namespace mugs {

struct EncoderConfig {
  int width1 = 12;        // full-resolution channels
  int width2 = 16;        // 1/2-resolution trunk channels
  int fine_channels = 8;  // feature width of the 1/2-resolution tap
  int coarse_channels = 16;
};

namespace detail {

inline std::vector<float> kaiming(int64_t n, int64_t fan_in, Rng& rng) {
  std::vector<float> v(static_cast<size_t>(n));
  float scale = std::sqrt(2.0f / static_cast<float>(fan_in));
  for (float& x : v) x = static_cast<float>(rng.normal()) * scale;
  return v;
}

inline Tensor conv_weight(ParamStore& ps, const std::string& name, int cout, int cin, int kh,
                          int kw, Rng& rng) {
  int64_t fan = static_cast<int64_t>(cin) * kh * kw;
  Tensor w = Tensor::param({cout, cin, kh, kw}, kaiming(cout * fan, fan, rng));
  ps.add(name, w);
  return w;
}

inline Tensor conv_weight3d(ParamStore& ps, const std::string& name, int cout, int cin, int kd,
                            int kh, int kw, Rng& rng) {
  int64_t fan = static_cast<int64_t>(cin) * kd * kh * kw;
  Tensor w = Tensor::param({cout, cin, kd, kh, kw}, kaiming(cout * fan, fan, rng));
  ps.add(name, w);
  return w;
}

inline Tensor conv_bias(ParamStore& ps, const std::string& name, int cout) {
  Tensor b = Tensor::param({cout}, std::vector<float>(static_cast<size_t>(cout), 0.0f));
  ps.add(name, b);
  return b;
}

inline Tensor linear_weight(ParamStore& ps, const std::string& name, int cout, int cin, Rng& rng) {
  Tensor w = Tensor::param({cout, cin}, kaiming(static_cast<int64_t>(cout) * cin, cin, rng));
  ps.add(name, w);
  return w;
}

}  // namespace detail

struct Encoder {
  EncoderConfig cfg;
  Tensor w1, b1, w2, b2, wf, bf, w3, b3, w4, b4;

  static Encoder create(ParamStore& ps, const std::string& prefix, const EncoderConfig& cfg,
                        Rng& rng) {
    Encoder e;
    e.cfg = cfg;
    e.w1 = detail::conv_weight(ps, prefix + ".conv1.w", cfg.width1, 3, 3, 3, rng);
    e.b1 = detail::conv_bias(ps, prefix + ".conv1.b", cfg.width1);
    e.w2 = detail::conv_weight(ps, prefix + ".conv2.w", cfg.width2, cfg.width1, 2, 2, rng);
    e.b2 = detail::conv_bias(ps, prefix + ".conv2.b", cfg.width2);
    e.wf = detail::conv_weight(ps, prefix + ".fine.w", cfg.fine_channels, cfg.width2, 1, 1, rng);
    e.bf = detail::conv_bias(ps, prefix + ".fine.b", cfg.fine_channels);
    e.w3 = detail::conv_weight(ps, prefix + ".conv3.w", cfg.width2, cfg.width2, 2, 2, rng);
    e.b3 = detail::conv_bias(ps, prefix + ".conv3.b", cfg.width2);
    e.w4 = detail::conv_weight(ps, prefix + ".conv4.w", cfg.coarse_channels, cfg.width2, 3, 3, rng);
    e.b4 = detail::conv_bias(ps, prefix + ".conv4.b", cfg.coarse_channels);
    return e;
  }

  struct Features {
    Tensor fine;    // (fine_channels, H/2, W/2)
    Tensor coarse;  // (coarse_channels, H/4, W/4)
  };

  // image: (3, H, W) with H, W divisible by 4.
  Features forward(const Tensor& image) const {
    if (image.ndim() != 3 || image.shape()[0] != 3) {
      throw ValueError("Encoder::forward: image must be (3, H, W)");
    }
    if (image.shape()[1] % 4 != 0 || image.shape()[2] % 4 != 0) {
      throw ValueError("Encoder::forward: image size must be divisible by 4");
    }
    // Stride-2 2x2 convs keep feature-pixel centres on the downscaled-camera
    // convention: level-k pixel o sits at full-res position k*o + (k-1)/2.
    Tensor x = relu(conv2d(image, w1, b1, 1, -1));
    Tensor h2 = relu(conv2d(x, w2, b2, 2, 0));
    Features f;
    f.fine = conv2d(h2, wf, bf, 1, -1);
    Tensor h4 = relu(conv2d(h2, w3, b3, 2, 0));
    f.coarse = conv2d(h4, w4, b4, 1, -1);
    return f;
  }
};

}  // namespace mugs
