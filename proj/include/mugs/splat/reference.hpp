#pragma once

// Brute-force double-precision renderer used as the correctness reference
// for the tiled rasterizer. Every pixel walks every splat in the same global
// depth order with the same cutoffs, so the only difference from the tiled
// path is the absence of tile culling (which by construction only removes
// splats past the Mahalanobis cutoff) and the final float cast.

#include <vector>

#include "mugs/splat/rasterizer.hpp"

namespace mugs {

// Inputs are column-major per-splat arrays matching the tensor layout:
// pos/color/scale are (3,N) flattened, quat (4,N), opacity (N).
// Returns (5, H, W) flattened: rgb, expected depth, accumulated alpha.
inline std::vector<double> reference_render(const std::vector<double>& pos,
                                            const std::vector<double>& color,
                                            const std::vector<double>& opacity,
                                            const std::vector<double>& scale,
                                            const std::vector<double>& quat,
                                            const geo::Camera& cam, int width, int height,
                                            const double background[3]) {
    using namespace splat_detail;
    const int64_t n = static_cast<int64_t>(opacity.size());
    const CamD camd = cam_to_double(cam);
    std::vector<Prep> prep = prepare_all(camd, pos.data(), color.data(), opacity.data(),
                                         scale.data(), quat.data(), n);
    std::vector<int> order = sorted_order(prep);

    std::vector<double> out(5 * static_cast<size_t>(height) * width, 0.0);
    const int64_t hw = static_cast<int64_t>(height) * width;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            double acc[3] = {0, 0, 0};
            double dep = 0.0;
            double T = walk_pixel(prep, order, x, y, [&](int idx, double alpha, double Tb) {
                const Prep& g = prep[static_cast<size_t>(idx)];
                double w = alpha * Tb;
                for (int c = 0; c < 3; ++c) acc[c] += w * g.col[c];
                dep += w * g.mu_cam[2];
            });
            int64_t at = static_cast<int64_t>(y) * width + x;
            for (int c = 0; c < 3; ++c) out[static_cast<size_t>(c * hw + at)] = acc[c] + T * background[c];
            out[static_cast<size_t>(3 * hw + at)] = dep;
            out[static_cast<size_t>(4 * hw + at)] = 1.0 - T;
        }
    }
    return out;
}

// Float-tensor convenience wrapper (promotes inputs, keeps double output).
inline std::vector<double> reference_render(const Tensor& pos, const Tensor& color,
                                            const Tensor& opacity, const Tensor& scale,
                                            const Tensor& quat, const geo::Camera& cam, int width,
                                            int height, const float background[3]) {
    auto promote = [](const Tensor& t) {
        return std::vector<double>(t.data(), t.data() + t.numel());
    };
    const double bg[3] = {background[0], background[1], background[2]};
    return reference_render(promote(pos), promote(color), promote(opacity), promote(scale),
                            promote(quat), cam, width, height, bg);
}

}  // namespace mugs
