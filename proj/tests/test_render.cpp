#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mugs/core/grad_check.hpp"
#include "mugs/core/rng.hpp"
#include "mugs/splat/rasterizer.hpp"
#include "mugs/splat/reference.hpp"

using namespace mugs;

namespace {

geo::Camera axis_cam(double focal, double cx, double cy) {
    return geo::Camera::look_at({0, 0, 0}, {0, 0, 1}, {0, 1, 0}, focal, cx, cy);
}

struct Scene {
    Tensor pos, color, opacity, scale, quat;
};

// Splats sampled through the camera so that every centre projects inside
// [margin, w-margin] x [margin, h-margin] at depth in [znear, zfar].
Scene random_scene(const geo::Camera& cam, int w, int h, int n, Rng& rng, double margin = 2.0,
                   double znear = 1.5, double zfar = 4.0, double smin = 0.02, double smax = 0.3,
                   double omax = 0.95) {
    std::vector<float> pos(3 * static_cast<size_t>(n)), col(3 * static_cast<size_t>(n));
    std::vector<float> opa(static_cast<size_t>(n)), scl(3 * static_cast<size_t>(n));
    std::vector<float> qua(4 * static_cast<size_t>(n));
    Eigen::Vector3d c0 = cam.center();
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform(margin, w - margin);
        double v = rng.uniform(margin, h - margin);
        double d = rng.uniform(znear, zfar);
        Eigen::Vector3d p = c0 + d * cam.ray_dir({u, v});
        for (int c = 0; c < 3; ++c) pos[static_cast<size_t>(c * n + i)] = static_cast<float>(p[c]);
        for (int c = 0; c < 3; ++c) col[static_cast<size_t>(c * n + i)] = static_cast<float>(rng.uniform());
        opa[static_cast<size_t>(i)] = static_cast<float>(rng.uniform(0.05, omax));
        for (int c = 0; c < 3; ++c) {
            scl[static_cast<size_t>(c * n + i)] = static_cast<float>(std::exp(
                rng.uniform(std::log(smin), std::log(smax))));
        }
        double q[4], norm = 0.0;
        for (double& x : q) {
            x = rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (int c = 0; c < 4; ++c) qua[static_cast<size_t>(c * n + i)] = static_cast<float>(q[c] / norm);
    }
    Scene s;
    s.pos = Tensor::from_data({3, n}, pos);
    s.color = Tensor::from_data({3, n}, col);
    s.opacity = Tensor::from_data({n}, opa);
    s.scale = Tensor::from_data({3, n}, scl);
    s.quat = Tensor::from_data({4, n}, qua);
    return s;
}

}  // namespace

TEST_CASE("screen covariance of a projected gaussian") {
    geo::Camera cam = axis_cam(50.0, 16.0, 16.0);

    SECTION("fronto-parallel isotropic splat gives (f*sigma/z)^2 I plus the floor") {
        float pos[3] = {0.f, 0.f, 2.f}, scale[3] = {0.1f, 0.1f, 0.1f}, quat[4] = {1, 0, 0, 0};
        ProjectedGaussian g = project_gaussian(cam, pos, scale, quat);
        REQUIRE(g.valid);
        double expected = 50.0 * 0.1 / 2.0;  // f*sigma/z
        expected *= expected;
        CHECK(g.uv[0] == Catch::Approx(16.0));
        CHECK(g.uv[1] == Catch::Approx(16.0));
        CHECK(g.depth == Catch::Approx(2.0));
        CHECK(g.cov[0] == Catch::Approx(expected + 0.1).margin(1e-9));
        CHECK(g.cov[1] == Catch::Approx(0.0).margin(1e-9));
        CHECK(g.cov[2] == Catch::Approx(expected + 0.1).margin(1e-9));
        CHECK(g.radius == Catch::Approx(3.0 * std::sqrt(expected + 0.1)).margin(1e-6));
    }

    SECTION("anisotropic axis-aligned scales land on the diagonal") {
        float pos[3] = {0.f, 0.f, 2.f}, scale[3] = {0.1f, 0.2f, 0.7f}, quat[4] = {1, 0, 0, 0};
        ProjectedGaussian g = project_gaussian(cam, pos, scale, quat);
        REQUIRE(g.valid);
        CHECK(g.cov[0] == Catch::Approx(std::pow(50.0 * 0.1 / 2.0, 2) + 0.1).margin(1e-9));
        CHECK(g.cov[1] == Catch::Approx(0.0).margin(1e-9));
        CHECK(g.cov[2] == Catch::Approx(std::pow(50.0 * 0.2 / 2.0, 2) + 0.1).margin(1e-9));
    }

    SECTION("halving the depth quadruples the footprint") {
        float pos_far[3] = {0.f, 0.f, 4.f}, pos_near[3] = {0.f, 0.f, 2.f};
        float scale[3] = {0.15f, 0.15f, 0.15f}, quat[4] = {1, 0, 0, 0};
        ProjectedGaussian far_g = project_gaussian(cam, pos_far, scale, quat);
        ProjectedGaussian near_g = project_gaussian(cam, pos_near, scale, quat);
        REQUIRE(far_g.valid);
        REQUIRE(near_g.valid);
        CHECK((near_g.cov[0] - 0.1) == Catch::Approx(4.0 * (far_g.cov[0] - 0.1)).epsilon(1e-9));
    }

    SECTION("rotating an isotropic gaussian leaves the footprint unchanged") {
        float pos[3] = {0.3f, -0.2f, 2.5f}, scale[3] = {0.12f, 0.12f, 0.12f};
        float q0[4] = {1, 0, 0, 0};
        ProjectedGaussian base = project_gaussian(cam, pos, scale, q0);
        Rng rng(7);
        for (int trial = 0; trial < 5; ++trial) {
            double q[4], norm = 0.0;
            for (double& x : q) {
                x = rng.normal();
                norm += x * x;
            }
            norm = std::sqrt(norm);
            float qf[4];
            for (int c = 0; c < 4; ++c) qf[c] = static_cast<float>(q[c] / norm);
            ProjectedGaussian rot = project_gaussian(cam, pos, scale, qf);
            REQUIRE(rot.valid);
            CHECK(rot.cov[0] == Catch::Approx(base.cov[0]).margin(1e-6));
            CHECK(rot.cov[1] == Catch::Approx(base.cov[1]).margin(1e-6));
            CHECK(rot.cov[2] == Catch::Approx(base.cov[2]).margin(1e-6));
        }
    }

    SECTION("splat behind the camera is invalid") {
        float pos[3] = {0.f, 0.f, -1.f}, scale[3] = {0.1f, 0.1f, 0.1f}, quat[4] = {1, 0, 0, 0};
        CHECK_FALSE(project_gaussian(cam, pos, scale, quat).valid);
    }
}

TEST_CASE("single splat composites exactly at its centre pixel") {
    geo::Camera cam = axis_cam(10.0, 8.0, 8.0);
    Tensor pos = Tensor::from_data({3, 1}, {0.f, 0.f, 2.f});  // projects to pixel (8, 8)
    Tensor color = Tensor::from_data({3, 1}, {1.0f, 0.6f, 0.2f});
    Tensor opacity = Tensor::from_data({1}, {0.5f});
    Tensor scale = Tensor::from_data({3, 1}, {0.05f, 0.05f, 0.05f});
    Tensor quat = Tensor::from_data({4, 1}, {1.f, 0.f, 0.f, 0.f});
    float bg[3] = {0.f, 0.f, 0.f};

    RenderOutput out = render_gaussians(pos, color, opacity, scale, quat, cam, 16, 16, bg);
    const int at = 8 * 16 + 8;
    // Centre pixel: d = 0, so alpha = opacity exactly.
    CHECK(out.rgb.data()[at] == Catch::Approx(0.5).margin(1e-7));
    CHECK(out.rgb.data()[256 + at] == Catch::Approx(0.3).margin(1e-7));
    CHECK(out.rgb.data()[512 + at] == Catch::Approx(0.1).margin(1e-7));
    CHECK(out.alpha.data()[at] == Catch::Approx(0.5).margin(1e-7));
    CHECK(out.depth.data()[at] == Catch::Approx(1.0).margin(1e-7));  // 0.5 * z

    // A pixel far outside the 3-sigma footprint holds pure background.
    float bg2[3] = {0.25f, 0.5f, 0.75f};
    RenderOutput out2 = render_gaussians(pos, color, opacity, scale, quat, cam, 16, 16, bg2);
    CHECK(out2.rgb.data()[0] == 0.25f);
    CHECK(out2.rgb.data()[256] == 0.5f);
    CHECK(out2.rgb.data()[512] == 0.75f);
    CHECK(out2.alpha.data()[0] == 0.0f);
    CHECK(out2.depth.data()[0] == 0.0f);
}

TEST_CASE("compositing respects depth order, not input order") {
    geo::Camera cam = axis_cam(10.0, 8.0, 8.0);
    // Red splat in front of blue, both on the optical axis.
    Tensor pos = Tensor::from_data({3, 2}, {0.f, 0.f, 0.f, 0.f, 1.f, 2.f});
    Tensor color = Tensor::from_data({3, 2}, {1.f, 0.f, 0.f, 0.f, 0.f, 1.f});
    Tensor opacity = Tensor::from_data({2}, {0.9f, 0.9f});
    Tensor scale = Tensor::from_data({3, 2}, {0.05f, 0.05f, 0.05f, 0.05f, 0.05f, 0.05f});
    Tensor quat = Tensor::from_data({4, 2}, {1.f, 1.f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f});
    float bg[3] = {0.f, 0.f, 0.f};

    RenderOutput out = render_gaussians(pos, color, opacity, scale, quat, cam, 16, 16, bg);
    const int at = 8 * 16 + 8;
    CHECK(out.rgb.data()[at] == Catch::Approx(0.9).margin(1e-6));          // front red
    CHECK(out.rgb.data()[512 + at] == Catch::Approx(0.09).margin(1e-6));   // 0.1 * 0.9 blue

    // Swapping the input order must not change the image.
    Tensor pos2 = Tensor::from_data({3, 2}, {0.f, 0.f, 0.f, 0.f, 2.f, 1.f});
    Tensor color2 = Tensor::from_data({3, 2}, {0.f, 1.f, 0.f, 0.f, 1.f, 0.f});
    Tensor out_a = rasterize_gaussians(pos, color, opacity, scale, quat, cam, 16, 16, bg);
    Tensor out_b = rasterize_gaussians(pos2, color2, opacity, scale, quat, cam, 16, 16, bg);
    for (int64_t i = 0; i < out_a.numel(); ++i) {
        REQUIRE(out_a.data()[i] == out_b.data()[i]);
    }
}

TEST_CASE("tiled rasterizer matches the brute-force reference") {
    const int w = 48, h = 40;  // multiple tiles, ragged right and bottom edges
    float bg[3] = {0.1f, 0.2f, 0.3f};
    double worst = 0.0;
    for (int seed = 0; seed < 50; ++seed) {
        Rng rng(static_cast<uint64_t>(100 + seed));
        geo::Camera cam = geo::Camera::look_at(
            {rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)},
            {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 2.0}, {0, 1, 0}, 30.0, w / 2.0,
            h / 2.0);
        Scene s = random_scene(cam, w, h, 20, rng);
        Tensor tiled = rasterize_gaussians(s.pos, s.color, s.opacity, s.scale, s.quat, cam, w, h, bg);
        std::vector<double> ref = reference_render(s.pos, s.color, s.opacity, s.scale, s.quat,
                                                   cam, w, h, bg);
        for (int64_t i = 0; i < tiled.numel(); ++i) {
            worst = std::max(worst, std::abs(tiled.data()[i] - ref[static_cast<size_t>(i)]));
        }
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("per-pixel compositing agrees with first principles") {
    // Rebuild alpha blending from scratch: project each splat, invert the
    // 2x2 covariance, fold front to back with the published cutoffs.
    const int w = 8, h = 8;
    int checked = 0;
    double worst = 0.0;
    for (int seed = 0; seed < 1000; ++seed) {
        Rng rng(static_cast<uint64_t>(5000 + seed));
        geo::Camera cam = axis_cam(12.0, w / 2.0, h / 2.0);
        int n = 1 + static_cast<int>(rng.uniform_int(3));
        Scene s = random_scene(cam, w, h, n, rng, 1.0, 1.2, 3.0, 0.05, 0.5, 1.2);
        float bg[3] = {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                       static_cast<float>(rng.uniform())};
        Tensor img = rasterize_gaussians(s.pos, s.color, s.opacity, s.scale, s.quat, cam, w, h, bg);

        int px = static_cast<int>(rng.uniform_int(w));
        int py = static_cast<int>(rng.uniform_int(h));

        struct Hit {
            double z, alpha, col[3];
        };
        std::vector<Hit> hits;
        for (int i = 0; i < n; ++i) {
            float P[3], S[3], Q[4];
            for (int c = 0; c < 3; ++c) P[c] = s.pos.data()[c * n + i];
            for (int c = 0; c < 3; ++c) S[c] = s.scale.data()[c * n + i];
            for (int c = 0; c < 4; ++c) Q[c] = s.quat.data()[c * n + i];
            ProjectedGaussian g = project_gaussian(cam, P, S, Q);
            if (!g.valid) continue;
            double det = g.cov[0] * g.cov[2] - g.cov[1] * g.cov[1];
            double dx = px - g.uv[0], dy = py - g.uv[1];
            double q = (g.cov[2] * dx * dx - 2.0 * g.cov[1] * dx * dy + g.cov[0] * dy * dy) / det;
            if (q > 9.0) continue;
            double alpha = std::min(static_cast<double>(s.opacity.data()[i]) * std::exp(-0.5 * q),
                                    0.9999);
            if (alpha < 1e-4) continue;
            Hit hit;
            hit.z = g.depth;
            hit.alpha = alpha;
            for (int c = 0; c < 3; ++c) hit.col[c] = s.color.data()[c * n + i];
            hits.push_back(hit);
        }
        std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.z < b.z; });

        double T = 1.0, rgb[3] = {0, 0, 0};
        for (const Hit& hit : hits) {
            for (int c = 0; c < 3; ++c) rgb[c] += T * hit.alpha * hit.col[c];
            T *= 1.0 - hit.alpha;
            if (T < 1e-4) break;
        }
        for (int c = 0; c < 3; ++c) rgb[c] += T * bg[c];

        const int64_t hw = static_cast<int64_t>(w) * h;
        int64_t at = static_cast<int64_t>(py) * w + px;
        for (int c = 0; c < 3; ++c) {
            worst = std::max(worst, std::abs(img.data()[c * hw + at] - rgb[c]));
        }
        worst = std::max(worst, std::abs(img.data()[4 * hw + at] - (1.0 - T)));
        ++checked;
    }
    REQUIRE(checked == 1000);
    CHECK(worst <= 1e-6);
}

TEST_CASE("rasterizer gradients match finite differences of the reference") {
    // Footprints cover the whole 6x6 patch and opacities stay moderate, so
    // every pixel is well inside the cutoff boundaries and the finite
    // differences stay smooth.
    const int w = 6, h = 6;
    geo::Camera cam = axis_cam(15.0, 2.5, 2.5);
    const float bg[3] = {0.3f, 0.1f, 0.6f};
    const double bgd[3] = {0.3f, 0.1f, 0.6f};

    for (uint64_t seed = 1; seed <= 3; ++seed) {
        Rng rng(seed);
        const int n = 4;
        Scene s = random_scene(cam, w, h, n, rng, 1.0, 1.8, 2.6, 0.5, 0.8, 0.6);

        gradcheck::Problem prob;
        prob.inputs = {s.pos, s.color, s.opacity, s.scale, s.quat};
        prob.forward_float = [&](const std::vector<Tensor>& in) {
            return rasterize_gaussians(in[0], in[1], in[2], in[3], in[4], cam, w, h, bg);
        };
        prob.forward_double = [&](const std::vector<gradcheck::dvec>& in) {
            return reference_render(in[0], in[1], in[2], in[3], in[4], cam, w, h, bgd);
        };
        Rng prng(seed * 977);
        double err = gradcheck::max_rel_err(prob, prng);
        INFO("seed " << seed);
        CHECK(err < 1e-2);
    }
}

TEST_CASE("rendering and its backward pass are repeatable") {
    const int w = 33, h = 19;
    geo::Camera cam = axis_cam(14.0, w / 2.0, h / 2.0);
    Rng rng(321);
    Scene s = random_scene(cam, w, h, 12, rng);
    float bg[3] = {0.5f, 0.5f, 0.5f};

    auto run = [&](std::vector<float>& img_out) {
        Tensor pos = Tensor::param(s.pos.shape(), s.pos.vec());
        Tensor color = Tensor::param(s.color.shape(), s.color.vec());
        Tensor opacity = Tensor::param(s.opacity.shape(), s.opacity.vec());
        Tensor scale = Tensor::param(s.scale.shape(), s.scale.vec());
        Tensor quat = Tensor::param(s.quat.shape(), s.quat.vec());
        Tensor img = rasterize_gaussians(pos, color, opacity, scale, quat, cam, w, h, bg);
        img_out = img.vec();
        backward(sum_all(mul(img, img)));
        std::vector<float> grads;
        for (const Tensor* t : {&pos, &color, &opacity, &scale, &quat}) {
            std::vector<float> g = t->grad();
            grads.insert(grads.end(), g.begin(), g.end());
        }
        return grads;
    };
    std::vector<float> img1, img2;
    std::vector<float> g1 = run(img1), g2 = run(img2);
    REQUIRE(img1 == img2);
    REQUIRE(g1 == g2);

    // Gradients reach every input tensor.
    double mag = 0.0;
    for (float v : g1) mag += std::abs(v);
    CHECK(mag > 0.0);
}

TEST_CASE("invalid rasterizer inputs are rejected") {
    geo::Camera cam = axis_cam(10.0, 4.0, 4.0);
    Tensor pos = Tensor::from_data({3, 2}, std::vector<float>(6, 0.5f));
    Tensor color = Tensor::from_data({3, 2}, std::vector<float>(6, 0.5f));
    Tensor opacity = Tensor::from_data({2}, {0.5f, 0.5f});
    Tensor scale = Tensor::from_data({3, 2}, std::vector<float>(6, 0.1f));
    Tensor quat_bad = Tensor::from_data({4, 3}, std::vector<float>(12, 0.5f));
    float bg[3] = {0, 0, 0};
    CHECK_THROWS_AS(rasterize_gaussians(pos, color, opacity, scale, quat_bad, cam, 8, 8, bg),
                    ValueError);
    Tensor quat = Tensor::from_data({4, 2}, std::vector<float>(8, 0.5f));
    CHECK_THROWS_AS(rasterize_gaussians(pos, color, opacity, scale, quat, cam, 0, 8, bg),
                    ValueError);
}
