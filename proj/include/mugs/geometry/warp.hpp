#pragma once

// Differentiable image warping. warp_image resamples a source image into the
// target frame through a source-to-target homography (inverse mapping with
// bilinear taps). Pixels that land outside the source, or behind it
// (homogeneous w <= 0), are zero with mask 0. Gradients flow to the source
// pixels; the homography is data.

#include <Eigen/Dense>

#include "mugs/core/sample.hpp"
#include "mugs/geometry/camera.hpp"

namespace mugs::geo {

struct WarpResult {
    Tensor image;              // (C, out_h, out_w)
    std::vector<float> mask;   // out_h*out_w, 1 = valid
};

// Grid of source-image sample positions for each target pixel, given the
// source-to-target homography H (inverted internally). Points with w <= eps
// get NaN coordinates, which bilinear_sample masks out.
inline SampleGrid homography_grid(const Eigen::Matrix3d& H_source_to_target, int out_h, int out_w) {
    Eigen::Matrix3d Hinv = H_source_to_target.inverse();
    SampleGrid grid;
    grid.rows = out_h;
    grid.cols = out_w;
    grid.x.resize(static_cast<size_t>(out_h) * out_w);
    grid.y.resize(static_cast<size_t>(out_h) * out_w);
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            Eigen::Vector3d q = Hinv * Eigen::Vector3d(x, y, 1.0);
            size_t i = static_cast<size_t>(y) * out_w + x;
            if (q.z() > 1e-9) {
                grid.x[i] = static_cast<float>(q.x() / q.z());
                grid.y[i] = static_cast<float>(q.y() / q.z());
            } else {
                grid.x[i] = std::numeric_limits<float>::quiet_NaN();
                grid.y[i] = std::numeric_limits<float>::quiet_NaN();
            }
        }
    return grid;
}

inline WarpResult warp_image(const Tensor& src, const Eigen::Matrix3d& H_source_to_target, int out_h,
                             int out_w) {
    WarpResult r;
    SampleGrid grid = homography_grid(H_source_to_target, out_h, out_w);
    r.image = bilinear_sample(src, grid, &r.mask);
    return r;
}

}  // namespace mugs::geo
