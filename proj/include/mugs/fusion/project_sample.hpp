#pragma once

// Projection-and-sampling consistency volumes. For every sweep voxel the
// geometric hypothesis says: if the surface sits at this candidate depth, the
// voxel projects into source view s at depth d_p. The source's monocular
// depth estimate at that projected pixel gives d_s. The pair volume packs
// (d_p, d_s, d_s / d_p, validity) as pure data channels; no gradients flow
// through geometry or monocular depth.

#include <vector>

#include "mugs/core/sample.hpp"
#include "mugs/core/tensor.hpp"
#include "mugs/sweep/volume.hpp"

namespace mugs {

inline constexpr float kRatioClampLo = 1e-2f;
inline constexpr float kRatioClampHi = 1e2f;

// target: camera at the sweep resolution (h, w). source: camera matching the
// monocular depth map's resolution. mde: (1, Hs, Ws) or (Hs, Ws) depth map.
// Returns a (4, D, h, w) data tensor.
inline Tensor depth_pair_volume(const geo::Camera& target, const geo::Camera& source,
                                const Tensor& mde, const std::vector<float>& cand, int d, int h,
                                int w) {
    Tensor mde3 = mde;
    if (mde3.ndim() == 2) mde3 = reshape(mde3, {1, mde3.dim(0), mde3.dim(1)});
    if (mde3.ndim() != 3 || mde3.dim(0) != 1) {
        throw ValueError("depth_pair_volume: mde must be (Hs, Ws) or (1, Hs, Ws)");
    }
    VolumeGrids grids = volume_grids(target, source, cand, d, h, w);
    const size_t n = static_cast<size_t>(d) * h * w;
    Tensor out = Tensor::zeros({4, d, h, w});
    float* dp = out.mut_data();
    float* ds = dp + n;
    float* ratio = ds + n;
    float* mask = ratio + n;
    for (int k = 0; k < d; ++k) {
        std::vector<float> m;
        Tensor sampled = bilinear_sample(mde3, grids.per_depth[static_cast<size_t>(k)], &m);
        const float* sv = sampled.data();
        for (int i = 0; i < h * w; ++i) {
            size_t vox = static_cast<size_t>(k) * h * w + i;
            float geom = grids.src_depth[vox];
            if (m[static_cast<size_t>(i)] != 1.0f || geom <= 0.0f) continue;
            dp[vox] = geom;
            ds[vox] = sv[i];
            ratio[vox] = std::min(std::max(sv[i] / geom, kRatioClampLo), kRatioClampHi);
            mask[vox] = 1.0f;
        }
    }
    return out;
}

}  // namespace mugs
