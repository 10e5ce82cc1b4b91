#pragma once

// 3D cost-volume regularizer: factorized 3D convs over pooled statistics and
// the similarity volume, then a softmax over depth per ray. Rays with no
// valid sample at any depth fall back to the uniform distribution.

#include "mugs/core/conv.hpp"
#include "mugs/core/ops.hpp"
#include "mugs/sweep/encoder.hpp"
#include "mugs/sweep/volume.hpp"

namespace mugs {

struct RegularizerConfig {
  int in_channels = 7;  // pooled channels + 1 similarity channel
  int width = 6;
};

struct Regularizer {
  RegularizerConfig cfg;
  Tensor wa, ba, wb, bb, wh, bh;

  static Regularizer create(ParamStore& ps, const std::string& prefix,
                            const RegularizerConfig& cfg, Rng& rng) {
    Regularizer r;
    r.cfg = cfg;
    r.wa = detail::conv_weight3d(ps, prefix + ".conv_a.w", cfg.width, cfg.in_channels, 1, 3, 3, rng);
    r.ba = detail::conv_bias(ps, prefix + ".conv_a.b", cfg.width);
    r.wb = detail::conv_weight3d(ps, prefix + ".conv_b.w", cfg.width, cfg.width, 3, 1, 1, rng);
    r.bb = detail::conv_bias(ps, prefix + ".conv_b.b", cfg.width);
    r.wh = detail::conv_weight3d(ps, prefix + ".head.w", 1, cfg.width, 1, 1, 1, rng);
    r.bh = detail::conv_bias(ps, prefix + ".head.b", 1);
    return r;
  }

  // pooled: (F', D, h, w); sim: (D, h, w); counts: D*h*w valid-view counts.
  // Returns the per-ray depth distribution (D, h, w), every ray summing to 1.
  Tensor forward(const Tensor& pooled, const Tensor& sim, const std::vector<float>& counts) const {
    const Shape& s = pooled.shape();
    if (s.size() != 4) throw ValueError("Regularizer: pooled must be (F', D, h, w)");
    const int d = s[1], h = s[2], w = s[3];
    Tensor x = concat({pooled, reshape(sim, {1, d, h, w})}, 0);
    if (x.shape()[0] != cfg.in_channels) {
      throw ValueError("Regularizer: channel mismatch with configured in_channels");
    }
    Tensor y = relu(conv3d(x, wa, ba));
    y = relu(conv3d(y, wb, bb));
    Tensor logits = reshape(conv3d(y, wh, bh), {d, h, w});
    Tensor prob = softmax(logits, 0);
    // Uniform fallback on rays that never saw a valid sample.
    Tensor ray_mask = Tensor::alloc({1, h, w});
    bool any_dead = false;
    for (int i = 0; i < h * w; ++i) {
      float alive = 0.0f;
      for (int k = 0; k < d; ++k) alive += counts[static_cast<size_t>(k) * h * w + i];
      ray_mask.mut_data()[i] = alive > 0.0f ? 1.0f : 0.0f;
      any_dead |= alive == 0.0f;
    }
    if (!any_dead) return prob;
    Tensor keep = mul(prob, ray_mask);
    Tensor fill = affine(ray_mask, -1.0f / static_cast<float>(d), 1.0f / static_cast<float>(d));
    return add(keep, fill);
  }
};

}  // namespace mugs
