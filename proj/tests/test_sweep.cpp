#include <catch2/catch_amalgamated.hpp>

#include "mugs/scene/oracle.hpp"
#include "mugs/scene/scene.hpp"
#include "mugs/sweep/encoder.hpp"
#include "mugs/sweep/regularizer.hpp"
#include "mugs/sweep/volume.hpp"

using namespace mugs;
using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

FeatureVolume manual_volume(const std::vector<float>& data, const std::vector<float>& mask,
                            int f, int d, int h, int w) {
    FeatureVolume v;
    v.vol = Tensor::from_data({f, d, h, w}, data);
    v.mask = mask;
    v.src_depth.assign(mask.size(), 1.0f);
    return v;
}

geo::Camera front_camera(double x, double y, double z, double focal = 100.0) {
    return geo::Camera::look_at(Vector3d(x, y, z), Vector3d(x * 0.2, y * 0.2, 2.0),
                                Vector3d(0, 1, 0), focal, 31.5, 31.5);
}

Scene gradient_plane_scene() {
    Scene scene;
    Primitive plane;
    plane.kind = PrimKind::Plane;
    plane.center = Vector3d(0, 0, 2);
    plane.normal = Vector3d(0, 0, 1);
    plane.basis = detail::frame_from_normal(plane.normal);
    plane.tex.kind = TexKind::Gradient;
    plane.tex.color_a = Vector3d(0.95, 0.15, 0.1);
    plane.tex.color_b = Vector3d(0.05, 0.75, 0.9);
    plane.tex.frequency = 1.2;
    plane.tex.axis = Vector3d(0.7, 0.714, 0.0);
    scene.prims.push_back(plane);
    return scene;
}

}  // namespace

TEST_CASE("encoder produces the contracted feature shapes deterministically") {
    ParamStore ps;
    Rng rng(1);
    EncoderConfig cfg;  // coarse 16 channels, fine 8
    Encoder enc = Encoder::create(ps, "encoder", cfg, rng);
    Tensor img = Tensor::zeros({3, 64, 64});
    for (int64_t i = 0; i < img.numel(); ++i) {
        img.mut_data()[i] = static_cast<float>((i * 37 % 101)) / 101.0f;
    }
    auto f = enc.forward(img);
    REQUIRE(f.coarse.shape() == Shape({16, 16, 16}));
    REQUIRE(f.fine.shape() == Shape({8, 32, 32}));

    ParamStore ps2;
    Rng rng2(1);
    Encoder enc2 = Encoder::create(ps2, "encoder", cfg, rng2);
    auto g = enc2.forward(img);
    for (int64_t i = 0; i < f.coarse.numel(); ++i) {
        REQUIRE(f.coarse.data()[i] == g.coarse.data()[i]);
    }
    REQUIRE_THROWS_AS(enc.forward(Tensor::zeros({3, 30, 64})), ValueError);
    REQUIRE_THROWS_AS(enc.forward(Tensor::zeros({1, 64, 64})), ValueError);
}

TEST_CASE("cost volume matches hand-computed cosine sums") {
    SECTION("two views") {
        // Two pixels: identical unit features, then a 3-4-5 feature pair.
        std::vector<float> fa = {1, 0.6f, 0, 0.8f};  // (F=2, D=1, h=1, w=2) layout
        std::vector<float> fb = {1, 0.6f, 0, 0.8f};
        auto va = manual_volume(fa, {1, 1}, 2, 1, 1, 2);
        auto vb = manual_volume(fb, {1, 1}, 2, 1, 1, 2);
        Tensor w = Tensor::from_data({1}, {0.7f});
        Tensor sim = cost_volume({va, vb}, w);
        REQUIRE(sim.shape() == Shape({1, 1, 2}));
        REQUIRE(sim.data()[0] == Catch::Approx(0.7).margin(1e-5));
        REQUIRE(sim.data()[1] == Catch::Approx(0.7).margin(1e-5));

        std::vector<float> fc = {0, -0.6f, 1, -0.8f};  // orthogonal, then opposite
        auto vc = manual_volume(fc, {1, 1}, 2, 1, 1, 2);
        Tensor sim2 = cost_volume({va, vc}, w);
        REQUIRE(sim2.data()[0] == Catch::Approx(0.0).margin(1e-5));
        REQUIRE(sim2.data()[1] == Catch::Approx(-0.7).margin(1e-5));
    }
    SECTION("voxels with fewer than two valid views score exactly zero") {
        auto va = manual_volume({1, 1}, {1, 1}, 1, 1, 1, 2);
        auto vb = manual_volume({1, 0}, {1, 0}, 1, 1, 1, 2);
        Tensor sim = cost_volume({va, vb}, Tensor::from_data({1}, {1.0f}));
        REQUIRE(sim.data()[0] == Catch::Approx(1.0).margin(1e-5));
        REQUIRE(sim.data()[1] == 0.0f);
    }
    SECTION("three identical views sum the pair weights") {
        std::vector<float> f = {0.3f, 0.4f};
        auto v = manual_volume(f, {1, 1}, 1, 1, 1, 2);
        Tensor w = Tensor::from_data({3}, {1.0f / 3, 1.0f / 3, 1.0f / 3});
        Tensor sim = cost_volume({v, v, v}, w);
        REQUIRE(sim.data()[0] == Catch::Approx(1.0).margin(1e-5));
        REQUIRE(sim.data()[1] == Catch::Approx(1.0).margin(1e-5));
    }
    SECTION("weight count is validated") {
        auto v = manual_volume({1}, {1}, 1, 1, 1, 1);
        REQUIRE_THROWS_AS(cost_volume({v, v}, Tensor::from_data({2}, {1.f, 1.f})), ValueError);
        REQUIRE_THROWS_AS(cost_volume({v}, Tensor::from_data({1}, {1.f})), ValueError);
    }
}

TEST_CASE("candidate grids partition the depth range into bin centres") {
    auto cand = linear_depth_candidates(1.0, 5.0, 4, 2, 2);
    REQUIRE(cand.size() == 16);
    REQUIRE(cand[0] == Catch::Approx(1.5));
    REQUIRE(cand[4] == Catch::Approx(2.5));
    REQUIRE(cand[8] == Catch::Approx(3.5));
    REQUIRE(cand[12] == Catch::Approx(4.5));
    REQUIRE_THROWS_AS(linear_depth_candidates(0.0, 5.0, 4, 2, 2), ValueError);
    REQUIRE_THROWS_AS(linear_depth_candidates(2.0, 1.0, 4, 2, 2), ValueError);
}

namespace {

// Masked cross-view feature variance per depth plane; returns the argmin.
int min_variance_depth(const std::vector<FeatureVolume>& vols, int f, int d, int hw) {
    int best = -1;
    double best_v = 1e300;
    for (int k = 0; k < d; ++k) {
        double acc = 0.0;
        long n = 0;
        for (int i = 0; i < hw * hw; ++i) {
            size_t vox = static_cast<size_t>(k) * hw * hw + i;
            if (vols[0].mask[vox] != 1.0f || vols[1].mask[vox] != 1.0f) continue;
            for (int c = 0; c < f; ++c) {
                size_t at = (static_cast<size_t>(c) * d + k) * hw * hw + i;
                double a = vols[0].vol.data()[at], b = vols[1].vol.data()[at];
                double m = 0.5 * (a + b);
                acc += (a - m) * (a - m) + (b - m) * (b - m);
            }
            ++n;
        }
        REQUIRE(n > 0);
        double v = acc / n;
        if (v < best_v) {
            best_v = v;
            best = k;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("warped volumes align features at the true surface depth") {
    Scene scene = gradient_plane_scene();
    geo::Camera target = front_camera(0, 0, 0);
    geo::Camera s1 = front_camera(0.25, -0.1, 0.0);
    geo::Camera s2 = front_camera(-0.2, 0.15, 0.05);
    geo::Camera target_l = target.downscaled(4);
    const int hw = 16;

    SECTION("average-pooled colour volumes localize the plane to one bin") {
        // 4x4 average pooling matches the downscaled-camera pixel centres
        // exactly, so the variance minimum must hit the bin nearest z = 2.
        std::vector<Tensor> feats;
        for (const geo::Camera& cam : {s1, s2}) {
            Tensor img = render_oracle(scene, cam, 64, 64).rgb;
            feats.push_back(avg_pool2d(avg_pool2d(img)));
        }
        const int d = 10;
        auto cand = linear_depth_candidates(1.05, 3.05, d, hw, hw);
        std::vector<FeatureVolume> vols;
        vols.push_back(warp_feature_volume(feats[0], target_l, s1.downscaled(4), cand, d, hw, hw));
        vols.push_back(warp_feature_volume(feats[1], target_l, s2.downscaled(4), cand, d, hw, hw));
        REQUIRE(vols[0].vol.shape() == Shape({3, d, hw, hw}));
        // Bin centres 1.15, 1.35, ..., 2.95: index 4 (1.95) is nearest to 2.
        REQUIRE(min_variance_depth(vols, 3, d, hw) == 4);

        for (size_t i = 0; i < vols[0].mask.size(); ++i) {
            if (vols[0].mask[i] == 1.0f) {
                REQUIRE(vols[0].src_depth[i] > 0.0f);
            } else {
                REQUIRE(vols[0].src_depth[i] == 0.0f);
            }
        }
    }

    SECTION("random encoder features agree best near the true depth") {
        // Learned-style features carry a small view-dependent bias from patch
        // foreshortening, so this property is asserted at a coarser bin width.
        ParamStore ps;
        Rng rng(3);
        Encoder enc = Encoder::create(ps, "encoder", {}, rng);
        std::vector<Tensor> feats;
        for (const geo::Camera& cam : {s1, s2}) {
            feats.push_back(enc.forward(render_oracle(scene, cam, 64, 64).rgb).coarse);
        }
        const int d = 5;
        auto cand = linear_depth_candidates(1.05, 3.05, d, hw, hw);
        std::vector<FeatureVolume> vols;
        vols.push_back(warp_feature_volume(feats[0], target_l, s1.downscaled(4), cand, d, hw, hw));
        vols.push_back(warp_feature_volume(feats[1], target_l, s2.downscaled(4), cand, d, hw, hw));
        REQUIRE(vols[0].vol.shape() == Shape({16, d, hw, hw}));
        // Bin centres 1.25, 1.65, 2.05, 2.45, 2.85: index 2 is nearest to 2.
        REQUIRE(min_variance_depth(vols, 16, d, hw) == 2);
    }
}

TEST_CASE("non-overlapping views produce empty masks and zero cost") {
    Scene scene = gradient_plane_scene();
    geo::Camera target = front_camera(0, 0, 0);
    // A source looking the opposite way shares no frustum with the target.
    geo::Camera away = geo::Camera::look_at(Vector3d(0, 0, 0), Vector3d(0, 0, -2),
                                            Vector3d(0, 1, 0), 100.0, 31.5, 31.5);
    ParamStore ps;
    Rng rng(4);
    Encoder enc = Encoder::create(ps, "encoder", {}, rng);
    Tensor feat = enc.forward(render_oracle(scene, away, 64, 64).rgb).coarse;

    const int d = 4, hw = 16;
    auto cand = linear_depth_candidates(1.0, 3.0, d, hw, hw);
    FeatureVolume v = warp_feature_volume(feat, target.downscaled(4), away.downscaled(4), cand,
                                          d, hw, hw);
    for (float m : v.mask) REQUIRE(m == 0.0f);
    for (int64_t i = 0; i < v.vol.numel(); ++i) REQUIRE(v.vol.data()[i] == 0.0f);

    FeatureVolume ok = warp_feature_volume(feat, target.downscaled(4), front_camera(0.1, 0, 0).downscaled(4),
                                           cand, d, hw, hw);
    Tensor sim = cost_volume({v, ok}, Tensor::from_data({1}, {1.0f}));
    for (int64_t i = 0; i < sim.numel(); ++i) REQUIRE(sim.data()[i] == 0.0f);
}

TEST_CASE("pooled statistics respect masks") {
    // Two feature channels; one view valid everywhere, the other masked out
    // at the second voxel. F' = 4 with an identity-selecting conv exposes the
    // raw mean and variance channels.
    std::vector<float> fa = {2, 4, 10, 20};   // (F=2, D=1, h=1, w=2)
    std::vector<float> fb = {6, 0, 30, 0};
    auto va = manual_volume(fa, {1, 1}, 2, 1, 1, 2);
    auto vb = manual_volume(fb, {1, 0}, 2, 1, 1, 2);
    Tensor w = Tensor::zeros({4, 4, 1, 1, 1});
    for (int i = 0; i < 4; ++i) w.mut_data()[i * 4 + i] = 1.0f;  // identity mix
    Tensor b = Tensor::zeros({4});
    Tensor pooled = pool_feature_volume({va, vb}, w, b);
    REQUIRE(pooled.shape() == Shape({4, 1, 1, 2}));
    // Voxel 0: both valid. mean = (4, 20), var = (4, 100).
    REQUIRE(pooled.data()[0] == Catch::Approx(4.0).margin(1e-4));
    REQUIRE(pooled.data()[2] == Catch::Approx(20.0).margin(1e-4));
    REQUIRE(pooled.data()[4] == Catch::Approx(4.0).margin(1e-4));
    REQUIRE(pooled.data()[6] == Catch::Approx(100.0).margin(1e-3));
    // Voxel 1: only view a valid. mean = its features, var = 0.
    REQUIRE(pooled.data()[1] == Catch::Approx(4.0).margin(1e-4));
    REQUIRE(pooled.data()[3] == Catch::Approx(20.0).margin(1e-4));
    REQUIRE(pooled.data()[5] == Catch::Approx(0.0).margin(1e-4));
    REQUIRE(pooled.data()[7] == Catch::Approx(0.0).margin(1e-4));

    SECTION("identical views have zero variance everywhere") {
        Tensor pooled2 = pool_feature_volume({va, va}, w, b);
        REQUIRE(pooled2.data()[4] == Catch::Approx(0.0).margin(1e-4));
        REQUIRE(pooled2.data()[6] == Catch::Approx(0.0).margin(1e-4));
        REQUIRE(pooled2.data()[0] == Catch::Approx(2.0).margin(1e-4));
    }
}

TEST_CASE("regularized volume is a depth distribution with uniform fallback") {
    ParamStore ps;
    Rng rng(5);
    RegularizerConfig rc;
    rc.in_channels = 3;  // 2 pooled channels + sim
    Regularizer reg = Regularizer::create(ps, "reg", rc, rng);
    const int d = 6, h = 3, w = 4;
    Tensor pooled = Tensor::alloc({2, d, h, w});
    for (int64_t i = 0; i < pooled.numel(); ++i) {
        pooled.mut_data()[i] = static_cast<float>(rng.normal());
    }
    Tensor sim = Tensor::alloc({d, h, w});
    for (int64_t i = 0; i < sim.numel(); ++i) sim.mut_data()[i] = static_cast<float>(rng.normal());
    std::vector<float> counts(static_cast<size_t>(d) * h * w, 2.0f);
    // Kill every depth of the ray at pixel (1, 2).
    for (int k = 0; k < d; ++k) counts[(static_cast<size_t>(k) * h + 1) * w + 2] = 0.0f;

    Tensor prob = reg.forward(pooled, sim, counts);
    REQUIRE(prob.shape() == Shape({d, h, w}));
    for (int i = 0; i < h * w; ++i) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) {
            float p = prob.data()[static_cast<size_t>(k) * h * w + i];
            REQUIRE(p >= 0.0f);
            s += p;
        }
        REQUIRE(s == Catch::Approx(1.0).margin(1e-5));
    }
    for (int k = 0; k < d; ++k) {
        REQUIRE(prob.data()[(static_cast<size_t>(k) * h + 1) * w + 2] ==
                Catch::Approx(1.0 / d).margin(1e-7));
    }
}
