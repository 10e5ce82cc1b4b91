#pragma once

// Pixel-aligned Gaussian prediction. Every target pixel owns one Gaussian:
// its centre sits on the pixel ray at the expectation of the depth
// distribution, and a small per-pixel MLP predicts colour, opacity, scales,
// and orientation. Raw activations map to parameters as
//   colour  = sigmoid(raw)            opacity = sigmoid(raw)
//   scale   = softplus(raw) + 1e-6    quat    = normalize(raw + (1,0,0,0))
// so an all-zero network yields grey, half-opaque, ln(2)-scaled, axis-aligned
// Gaussians. World scale multiplies by the pixel footprint depth / focal.

#include <fstream>
#include <vector>

#include "mugs/core/conv.hpp"
#include "mugs/core/ops.hpp"
#include "mugs/geometry/camera.hpp"
#include "mugs/sweep/encoder.hpp"

namespace mugs {

inline constexpr float kScaleFloor = 1e-6f;

// Expectation of the per-ray depth distribution: (D, h, w) x candidates -> (h, w).
inline Tensor expected_depth(const Tensor& prob, const std::vector<float>& cand) {
    const Shape& s = prob.shape();
    if (s.size() != 3) throw ValueError("expected_depth: prob must be (D, h, w)");
    if (cand.size() != static_cast<size_t>(prob.numel())) {
        throw ValueError("expected_depth: candidate grid size mismatch");
    }
    Tensor z = Tensor::from_data(s, cand);
    return sum(mul(prob, z), 0);
}

// Probability-weighted feature expectation: (F, D, h, w) x (D, h, w) -> (F, h, w).
inline Tensor expected_feature(const Tensor& vol, const Tensor& prob) {
    const Shape& s = vol.shape();
    if (s.size() != 4) throw ValueError("expected_feature: volume must be (F, D, h, w)");
    if (prob.shape() != Shape({s[1], s[2], s[3]})) {
        throw ValueError("expected_feature: prob must be (D, h, w)");
    }
    return sum(mul(vol, reshape(prob, {1, s[1], s[2], s[3]})), 1);
}

struct GaussianParams {
    Tensor color;    // (3, h, w) in (0, 1)
    Tensor opacity;  // (1, h, w) in (0, 1)
    Tensor scale;    // (3, h, w) positive
    Tensor quat;     // (4, h, w) unit quaternions, w first
};

// Raw head output (11, h, w) -> activated parameters.
inline GaussianParams gaussian_activations(const Tensor& raw) {
    if (raw.ndim() != 3 || raw.dim(0) != 11) {
        throw ValueError("gaussian_activations: raw must be (11, h, w)");
    }
    const int h = raw.dim(1), w = raw.dim(2);
    GaussianParams p;
    p.color = sigmoid(slice(raw, 0, 0, 3));
    p.opacity = sigmoid(slice(raw, 0, 3, 1));
    p.scale = affine(softplus(slice(raw, 0, 4, 3)), 1.0f, kScaleFloor);
    std::vector<float> unit(static_cast<size_t>(4 * h * w), 0.0f);
    std::fill(unit.begin(), unit.begin() + static_cast<size_t>(h) * w, 1.0f);
    Tensor e = Tensor::from_data({4, h, w}, std::move(unit));
    p.quat = l2_normalize(add(slice(raw, 0, 7, 4), e), 0);
    return p;
}

struct GaussianHeadConfig {
    int in_channels = 16;
    int hidden = 64;
};

struct GaussianHead {
    GaussianHeadConfig cfg;
    Tensor w1, b1, w2, b2, wo, bo;

    static GaussianHead create(ParamStore& ps, const std::string& prefix,
                               const GaussianHeadConfig& cfg, Rng& rng) {
        GaussianHead g;
        g.cfg = cfg;
        g.w1 = detail::conv_weight(ps, prefix + ".fc1.w", cfg.hidden, cfg.in_channels, 1, 1, rng);
        g.b1 = detail::conv_bias(ps, prefix + ".fc1.b", cfg.hidden);
        g.w2 = detail::conv_weight(ps, prefix + ".fc2.w", cfg.hidden, cfg.hidden, 1, 1, rng);
        g.b2 = detail::conv_bias(ps, prefix + ".fc2.b", cfg.hidden);
        // Zero-init output layer: training starts from the neutral Gaussians.
        g.wo = Tensor::param({11, cfg.hidden, 1, 1},
                             std::vector<float>(static_cast<size_t>(11 * cfg.hidden), 0.0f));
        g.bo = Tensor::param({11}, std::vector<float>(11, 0.0f));
        ps.add(prefix + ".out.w", g.wo);
        ps.add(prefix + ".out.b", g.bo);
        return g;
    }

    // features: (in_channels, h, w) per-pixel descriptors.
    GaussianParams predict(const Tensor& features) const {
        if (features.ndim() != 3 || features.dim(0) != cfg.in_channels) {
            throw ValueError("GaussianHead::predict: features must be (in_channels, h, w)");
        }
        Tensor x = relu(conv2d(features, w1, b1));
        x = relu(conv2d(x, w2, b2));
        return gaussian_activations(conv2d(x, wo, bo));
    }
};

// A flat set of world-space Gaussians, one per target pixel (row-major).
struct GaussianSet {
    Tensor pos;      // (3, N)
    Tensor color;    // (3, N)
    Tensor opacity;  // (N)
    Tensor scale;    // (3, N) world units
    Tensor quat;     // (4, N)
    int width = 0, height = 0;
};

// Places each pixel's Gaussian at its depth expectation along the pixel ray.
// ray_valid (h*w, 1 = ray saw at least one valid sample) zeroes the opacity
// of unconstrained rays. depth: (h, w) differentiable.
inline GaussianSet build_gaussians(const geo::Camera& cam, const GaussianParams& params,
                                   const Tensor& depth, const std::vector<float>& ray_valid) {
    const Shape& ds = depth.shape();
    if (ds.size() != 2) throw ValueError("build_gaussians: depth must be (h, w)");
    const int h = ds[0], w = ds[1];
    if (params.color.shape() != Shape({3, h, w})) {
        throw ValueError("build_gaussians: params/depth size mismatch");
    }
    if (ray_valid.size() != static_cast<size_t>(h) * w) {
        throw ValueError("build_gaussians: ray_valid size mismatch");
    }
    const int64_t n = static_cast<int64_t>(h) * w;

    Tensor rays = Tensor::alloc({3, h, w});
    const Eigen::Vector3d origin = cam.center();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            Eigen::Vector3d dir = cam.ray_dir(Eigen::Vector2d(x, y));
            for (int c = 0; c < 3; ++c) {
                rays.mut_data()[(static_cast<size_t>(c) * h + y) * w + x] =
                    static_cast<float>(dir[c]);
            }
        }
    }
    Tensor origin_t = Tensor::from_data({3, 1, 1},
                                        {static_cast<float>(origin.x()),
                                         static_cast<float>(origin.y()),
                                         static_cast<float>(origin.z())});
    Tensor depth1 = reshape(depth, {1, h, w});
    Tensor pos = add(mul(rays, depth1), origin_t);

    // World scale: parameter times the pixel footprint depth / focal.
    const float inv_f = static_cast<float>(1.0 / cam.K()(0, 0));
    Tensor scale = mul(params.scale, affine(depth1, inv_f, 0.0f));

    Tensor valid = Tensor::from_data({1, h, w}, std::vector<float>(ray_valid));
    GaussianSet set;
    set.pos = reshape(pos, {3, static_cast<int>(n)});
    set.color = reshape(params.color, {3, static_cast<int>(n)});
    set.opacity = reshape(mul(params.opacity, valid), {static_cast<int>(n)});
    set.scale = reshape(scale, {3, static_cast<int>(n)});
    set.quat = reshape(params.quat, {4, static_cast<int>(n)});
    set.width = w;
    set.height = h;
    return set;
}

// Plain-text table, one Gaussian per row:
// x y z  r g b  alpha  sx sy sz  qw qx qy qz
inline void write_gaussian_table(const std::string& path, const GaussianSet& set) {
    std::ofstream out(path);
    if (!out) throw IoError("write_gaussian_table: cannot open " + path);
    out << "x y z r g b alpha sx sy sz qw qx qy qz\n";
    const int64_t n = set.opacity.numel();
    out.precision(9);
    for (int64_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) out << set.pos.data()[c * n + i] << ' ';
        for (int c = 0; c < 3; ++c) out << set.color.data()[c * n + i] << ' ';
        out << set.opacity.data()[i];
        for (int c = 0; c < 3; ++c) out << ' ' << set.scale.data()[c * n + i];
        for (int c = 0; c < 4; ++c) out << ' ' << set.quat.data()[c * n + i];
        out << '\n';
    }
    if (!out) throw IoError("write_gaussian_table: write failed for " + path);
}

}  // namespace mugs
