#pragma once

// Compact 3D U-Net over depth-consistency pair volumes. One weight set is
// shared by every source view; each view's (4, D, h, w) pair volume maps to a
// cue volume (cue_channels, D, h, w). Four resolution levels with skip
// connections; all convs are 3x3x3 except the 1x1x1 output head.

#include "mugs/core/conv.hpp"
#include "mugs/core/ops.hpp"
#include "mugs/sweep/encoder.hpp"

namespace mugs {

struct Unet3dConfig {
  int in_channels = 4;
  int base = 6;  // level widths: base, base+2, base+4, base+6
  int cue_channels = 8;
};

struct Unet3d {
  Unet3dConfig cfg;
  Tensor we0, be0, we1, be1, we2, be2, we3, be3;
  Tensor wd2, bd2, wd1, bd1, wd0, bd0, wh, bh;

  static Unet3d create(ParamStore& ps, const std::string& prefix, const Unet3dConfig& cfg,
                       Rng& rng) {
    const int c0 = cfg.base, c1 = cfg.base + 2, c2 = cfg.base + 4, c3 = cfg.base + 6;
    Unet3d u;
    u.cfg = cfg;
    u.we0 = detail::conv_weight3d(ps, prefix + ".enc0.w", c0, cfg.in_channels, 3, 3, 3, rng);
    u.be0 = detail::conv_bias(ps, prefix + ".enc0.b", c0);
    u.we1 = detail::conv_weight3d(ps, prefix + ".enc1.w", c1, c0, 3, 3, 3, rng);
    u.be1 = detail::conv_bias(ps, prefix + ".enc1.b", c1);
    u.we2 = detail::conv_weight3d(ps, prefix + ".enc2.w", c2, c1, 3, 3, 3, rng);
    u.be2 = detail::conv_bias(ps, prefix + ".enc2.b", c2);
    u.we3 = detail::conv_weight3d(ps, prefix + ".enc3.w", c3, c2, 3, 3, 3, rng);
    u.be3 = detail::conv_bias(ps, prefix + ".enc3.b", c3);
    u.wd2 = detail::conv_weight3d(ps, prefix + ".dec2.w", c2, c3 + c2, 3, 3, 3, rng);
    u.bd2 = detail::conv_bias(ps, prefix + ".dec2.b", c2);
    u.wd1 = detail::conv_weight3d(ps, prefix + ".dec1.w", c1, c2 + c1, 3, 3, 3, rng);
    u.bd1 = detail::conv_bias(ps, prefix + ".dec1.b", c1);
    u.wd0 = detail::conv_weight3d(ps, prefix + ".dec0.w", c0, c1 + c0, 3, 3, 3, rng);
    u.bd0 = detail::conv_bias(ps, prefix + ".dec0.b", c0);
    u.wh = detail::conv_weight3d(ps, prefix + ".head.w", cfg.cue_channels, c0, 1, 1, 1, rng);
    u.bh = detail::conv_bias(ps, prefix + ".head.b", cfg.cue_channels);
    return u;
  }

  // x: (in_channels, D, h, w) -> (cue_channels, D, h, w)
  Tensor forward(const Tensor& x) const {
    if (x.ndim() != 4 || x.dim(0) != cfg.in_channels) {
      throw ValueError("Unet3d::forward: input must be (in_channels, D, h, w)");
    }
    Tensor e0 = relu(conv3d(x, we0, be0));
    Tensor e1 = relu(conv3d(avg_pool3d(e0), we1, be1));
    Tensor e2 = relu(conv3d(avg_pool3d(e1), we2, be2));
    Tensor e3 = relu(conv3d(avg_pool3d(e2), we3, be3));
    Tensor d2 = relu(conv3d(concat({upsample3d_nn(e3, e2.dim(1), e2.dim(2), e2.dim(3)), e2}, 0),
                            wd2, bd2));
    Tensor d1 = relu(conv3d(concat({upsample3d_nn(d2, e1.dim(1), e1.dim(2), e1.dim(3)), e1}, 0),
                            wd1, bd1));
    Tensor d0 = relu(conv3d(concat({upsample3d_nn(d1, e0.dim(1), e0.dim(2), e0.dim(3)), e0}, 0),
                            wd0, bd0));
    return conv3d(d0, wh, bh);
  }
};

}  // namespace mugs
