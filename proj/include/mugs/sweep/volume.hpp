#pragma once

// Plane-sweep feature volumes. A volume lives in the target camera's frustum:
// voxel (d, y, x) is the target pixel (x, y) pushed to candidate depth
// cand(d, y, x). Source features are gathered by projecting each voxel into
// the source view and sampling bilinearly; out-of-image or behind-camera
// voxels are zero with mask 0. Cameras passed here must already be downscaled
// to the feature level's resolution.

#include <vector>

#include "mugs/core/conv.hpp"
#include "mugs/core/ops.hpp"
#include "mugs/core/sample.hpp"
#include "mugs/geometry/camera.hpp"

namespace mugs {

// Candidate depth grid (D, h, w) shared by warping, fusion, and rendering.
// Global sweep planes use bin centres of a linear partition of [zmin, zmax].
inline std::vector<float> linear_depth_candidates(double zmin, double zmax, int d, int h, int w) {
  if (!(zmin > 0.0) || !(zmax > zmin)) {
    throw ValueError("depth candidates: need 0 < zmin < zmax");
  }
  if (d < 1) throw ValueError("depth candidates: need at least one plane");
  std::vector<float> cand(static_cast<size_t>(d) * h * w);
  double step = (zmax - zmin) / d;
  for (int k = 0; k < d; ++k) {
    float z = static_cast<float>(zmin + (k + 0.5) * step);
    std::fill(cand.begin() + static_cast<size_t>(k) * h * w,
              cand.begin() + static_cast<size_t>(k + 1) * h * w, z);
  }
  return cand;
}

struct VolumeGrids {
  std::vector<SampleGrid> per_depth;  // D grids of source pixel positions
  std::vector<float> src_depth;       // D*h*w voxel depth in the source frame
};

inline VolumeGrids volume_grids(const geo::Camera& target, const geo::Camera& source,
                                const std::vector<float>& cand, int d, int h, int w) {
  if (cand.size() != static_cast<size_t>(d) * h * w) {
    throw ValueError("volume_grids: candidate grid size mismatch");
  }
  VolumeGrids g;
  g.src_depth.assign(cand.size(), 0.0f);
  const Eigen::Vector3d origin = target.center();
  for (int k = 0; k < d; ++k) {
    SampleGrid grid;
    grid.rows = h;
    grid.cols = w;
    grid.x.resize(static_cast<size_t>(h) * w);
    grid.y.resize(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        size_t pix = static_cast<size_t>(y) * w + x;
        size_t vox = static_cast<size_t>(k) * h * w + pix;
        double z = cand[vox];
        Eigen::Vector3d P = origin + z * target.ray_dir(Eigen::Vector2d(x, y));
        geo::Projection pr = source.project(P);
        if (pr.valid && z > 0.0) {
          grid.x[pix] = static_cast<float>(pr.uv.x());
          grid.y[pix] = static_cast<float>(pr.uv.y());
          g.src_depth[vox] = static_cast<float>(pr.depth);
        } else {
          grid.x[pix] = std::numeric_limits<float>::quiet_NaN();
          grid.y[pix] = std::numeric_limits<float>::quiet_NaN();
        }
      }
    }
    g.per_depth.push_back(std::move(grid));
  }
  return g;
}

struct FeatureVolume {
  Tensor vol;                    // (F, D, h, w)
  std::vector<float> mask;       // D*h*w, 1 = valid sample
  std::vector<float> src_depth;  // D*h*w source-frame voxel depth (0 where invalid)
};

// Gathers source features over the candidate grid. Gradients flow into
// `src_feat`; all geometry is data.
inline FeatureVolume warp_feature_volume(const Tensor& src_feat, const geo::Camera& target,
                                         const geo::Camera& source, const std::vector<float>& cand,
                                         int d, int h, int w) {
  if (src_feat.ndim() != 3) throw ValueError("warp_feature_volume: features must be (F, hs, ws)");
  VolumeGrids grids = volume_grids(target, source, cand, d, h, w);
  const int f = src_feat.shape()[0];
  std::vector<Tensor> slices;
  FeatureVolume out;
  out.mask.resize(static_cast<size_t>(d) * h * w);
  for (int k = 0; k < d; ++k) {
    std::vector<float> m;
    Tensor s = bilinear_sample(src_feat, grids.per_depth[k], &m);
    std::copy(m.begin(), m.end(), out.mask.begin() + static_cast<size_t>(k) * h * w);
    slices.push_back(reshape(s, {f, 1, h, w}));
  }
  out.vol = slices.size() == 1 ? slices[0] : concat(slices, 1);
  out.src_depth = std::move(grids.src_depth);
  // A voxel whose bilinear tap fell outside contributes no source depth.
  for (size_t i = 0; i < out.mask.size(); ++i) {
    if (out.mask[i] == 0.0f) out.src_depth[i] = 0.0f;
  }
  return out;
}

// Pairwise-similarity cost volume: Sim = sum over view pairs (j < k) of
// w_jk * cos(f_j, f_k). Invalid samples are zero vectors, so their cosine
// vanishes and voxels seen by fewer than two views score exactly 0.
inline Tensor cost_volume(const std::vector<FeatureVolume>& views, const Tensor& pair_weights) {
  const int n = static_cast<int>(views.size());
  if (n < 2) throw ValueError("cost_volume: need at least two views");
  const int pairs = n * (n - 1) / 2;
  if (pair_weights.ndim() != 1 || pair_weights.shape()[0] != pairs) {
    throw ValueError("cost_volume: pair_weights must have n*(n-1)/2 entries");
  }
  std::vector<Tensor> normed;
  for (const FeatureVolume& v : views) normed.push_back(l2_normalize(v.vol, 0));
  Tensor sim;
  int p = 0;
  for (int j = 0; j < n; ++j) {
    for (int k = j + 1; k < n; ++k, ++p) {
      Tensor cospair = sum(mul(normed[j], normed[k]), 0, false);  // (D, h, w)
      Tensor w = reshape(slice(pair_weights, 0, p, 1), {1, 1, 1});
      Tensor term = mul(cospair, w);
      sim = sim.defined() ? add(sim, term) : term;
    }
  }
  return sim;
}

inline std::vector<float> valid_counts(const std::vector<FeatureVolume>& views) {
  if (views.empty()) throw ValueError("valid_counts: no views");
  std::vector<float> c(views[0].mask.size(), 0.0f);
  for (const FeatureVolume& v : views) {
    if (v.mask.size() != c.size()) throw ValueError("valid_counts: mask size mismatch");
    for (size_t i = 0; i < c.size(); ++i) c[i] += v.mask[i];
  }
  return c;
}

// Masked mean and variance across views, mixed by a learned 1x1x1 conv.
// Voxels with no valid view stay zero in both statistics.
inline Tensor pool_feature_volume(const std::vector<FeatureVolume>& views, const Tensor& w,
                                  const Tensor& b) {
  const int n = static_cast<int>(views.size());
  if (n < 1) throw ValueError("pool_feature_volume: no views");
  const Shape& vs = views[0].vol.shape();
  std::vector<float> counts = valid_counts(views);
  Tensor inv = Tensor::alloc({1, vs[1], vs[2], vs[3]});
  for (size_t i = 0; i < counts.size(); ++i) {
    inv.mut_data()[i] = counts[i] > 0.0f ? 1.0f / counts[i] : 0.0f;
  }
  Tensor sum_v, sum_sq;
  for (const FeatureVolume& v : views) {
    sum_v = sum_v.defined() ? add(sum_v, v.vol) : v.vol;
    Tensor sq = mul(v.vol, v.vol);
    sum_sq = sum_sq.defined() ? add(sum_sq, sq) : sq;
  }
  Tensor mean = mul(sum_v, inv);
  Tensor var = sub(mul(sum_sq, inv), mul(mean, mean));
  return conv3d(concat({mean, var}, 0), w, b);
}

}  // namespace mugs
