#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "mugs/geometry/camera.hpp"
#include "mugs/geometry/homography.hpp"
#include "mugs/geometry/warp.hpp"
#include "mugs/scene/oracle.hpp"
#include "mugs/scene/scene.hpp"

using namespace mugs;
using geo::Camera;
using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

Matrix3d make_k(double fx, double fy, double cx, double cy) {
    Matrix3d K = Matrix3d::Identity();
    K(0, 0) = fx;
    K(1, 1) = fy;
    K(0, 2) = cx;
    K(1, 2) = cy;
    return K;
}

Camera random_camera(Rng& rng) {
    Matrix3d R = detail::random_basis(rng);
    Vector3d t(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    double f = rng.uniform(50, 200);
    return Camera(make_k(f, f * rng.uniform(0.9, 1.1), rng.uniform(20, 44), rng.uniform(20, 44)), R,
                  t);
}

}  // namespace

TEST_CASE("projection matches the pinhole formula") {
    Camera cam(make_k(100, 100, 32, 32), Matrix3d::Identity(), Vector3d::Zero());
    auto pr = cam.project(Vector3d(0.1, 0.2, 2.0));
    REQUIRE(pr.valid);
    REQUIRE(pr.uv.x() == Catch::Approx(37.0).margin(1e-12));
    REQUIRE(pr.uv.y() == Catch::Approx(42.0).margin(1e-12));
    REQUIRE(pr.depth == Catch::Approx(2.0).margin(1e-12));

    SECTION("points on the principal axis hit the principal point") {
        for (double z : {0.5, 1.0, 7.0}) {
            auto p = cam.project(Vector3d(0, 0, z));
            REQUIRE(p.uv.x() == Catch::Approx(32.0).margin(1e-12));
            REQUIRE(p.uv.y() == Catch::Approx(32.0).margin(1e-12));
        }
    }
    SECTION("non-positive depth is flagged invalid") {
        REQUIRE_FALSE(cam.project(Vector3d(0, 0, 0)).valid);
        REQUIRE_FALSE(cam.project(Vector3d(0.3, 0, -1)).valid);
    }
}

TEST_CASE("unprojection inverts projection") {
    Camera cam(make_k(100, 100, 32, 32), Matrix3d::Identity(), Vector3d::Zero());
    Vector3d p = cam.unproject(Vector2d(32, 32), 5.0);
    REQUIRE((p - Vector3d(0, 0, 5)).norm() < 1e-12);

    Camera shifted(make_k(100, 100, 32, 32), Matrix3d::Identity(), Vector3d(0, 0, -1));
    Vector3d q = shifted.unproject(Vector2d(32, 32), 2.0);
    REQUIRE((q - Vector3d(0, 0, 3)).norm() < 1e-12);

    REQUIRE_THROWS_AS(cam.unproject(Vector2d(1, 1), 0.0), ValueError);
    REQUIRE_THROWS_AS(cam.unproject(Vector2d(1, 1), -2.0), ValueError);

    SECTION("round trip over random cameras and points") {
        Rng rng(99);
        for (int c = 0; c < 20; ++c) {
            Camera cam2 = random_camera(rng);
            for (int i = 0; i < 50; ++i) {
                Vector3d xc(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(0.2, 10.0));
                Vector3d P = cam2.R().transpose() * (xc - cam2.t());
                auto pr = cam2.project(P);
                REQUIRE(pr.valid);
                Vector3d back = cam2.unproject(pr.uv, pr.depth);
                REQUIRE((back - P).norm() < 1e-5);
            }
        }
    }
}

TEST_CASE("ray directions are scaled to unit axis depth") {
    Rng rng(5);
    for (int c = 0; c < 10; ++c) {
        Camera cam = random_camera(rng);
        Vector2d uv(rng.uniform(0, 63), rng.uniform(0, 63));
        double s = rng.uniform(0.5, 8.0);
        Vector3d P = cam.center() + s * cam.ray_dir(uv);
        auto pr = cam.project(P);
        REQUIRE(pr.depth == Catch::Approx(s).epsilon(1e-9));
        REQUIRE((pr.uv - uv).norm() < 1e-6);
    }
}

TEST_CASE("look_at centres the requested target") {
    Vector3d pos(1.0, -2.0, 0.5), target(0.2, 0.3, 4.0);
    Camera cam = Camera::look_at(pos, target, Vector3d(0, 1, 0), 120.0, 31.5, 31.5);
    auto pr = cam.project(target);
    REQUIRE(pr.valid);
    REQUIRE(pr.uv.x() == Catch::Approx(31.5).margin(1e-9));
    REQUIRE(pr.uv.y() == Catch::Approx(31.5).margin(1e-9));
    REQUIRE((cam.center() - pos).norm() < 1e-12);
}

TEST_CASE("camera validation rejects malformed parameters") {
    Matrix3d K = make_k(100, 100, 32, 32);
    Matrix3d bad_r = Matrix3d::Identity();
    bad_r(0, 0) = 2.0;
    REQUIRE_THROWS_AS(Camera(K, bad_r, Vector3d::Zero()), ValueError);
    Matrix3d mirror = Matrix3d::Identity();
    mirror(0, 0) = -1.0;  // det -1
    REQUIRE_THROWS_AS(Camera(K, mirror, Vector3d::Zero()), ValueError);
    Matrix3d bad_k = K;
    bad_k(2, 2) = 2.0;
    REQUIRE_THROWS_AS(Camera(bad_k, Matrix3d::Identity(), Vector3d::Zero()), ValueError);
    bad_k = K;
    bad_k(0, 0) = -5.0;
    REQUIRE_THROWS_AS(Camera(bad_k, Matrix3d::Identity(), Vector3d::Zero()), ValueError);
    bad_k = K;
    bad_k(1, 0) = 0.5;
    REQUIRE_THROWS_AS(Camera(bad_k, Matrix3d::Identity(), Vector3d::Zero()), ValueError);
}

TEST_CASE("downscaled cameras keep pixel centres aligned") {
    Rng rng(7);
    for (int c = 0; c < 5; ++c) {
        Camera cam = random_camera(rng);
        for (int k : {2, 4}) {
            Camera low = cam.downscaled(k);
            Vector3d P = cam.center() + rng.uniform(1.0, 5.0) * cam.ray_dir(Vector2d(30, 25));
            auto full = cam.project(P);
            auto lev = low.project(P);
            REQUIRE(lev.uv.x() == Catch::Approx((full.uv.x() - (k - 1) / 2.0) / k).margin(1e-9));
            REQUIRE(lev.uv.y() == Catch::Approx((full.uv.y() - (k - 1) / 2.0) / k).margin(1e-9));
            REQUIRE(lev.depth == Catch::Approx(full.depth).margin(1e-12));
        }
    }
    REQUIRE_THROWS_AS(random_camera(rng).downscaled(0), ValueError);
}

TEST_CASE("homography of a camera with itself is the identity") {
    Rng rng(11);
    for (int c = 0; c < 5; ++c) {
        Camera cam = random_camera(rng);
        for (double z : {0.5, 2.0, 50.0}) {
            Matrix3d H = geo::homography(cam, cam, z);
            REQUIRE((H - Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-6);
        }
    }
}

TEST_CASE("homography at infinite depth reduces to the pure-rotation map") {
    Rng rng(13);
    for (int c = 0; c < 5; ++c) {
        Camera target = random_camera(rng);
        Camera source = random_camera(rng);
        Matrix3d H = geo::homography(target, source, 1e9);
        Matrix3d Hinf = target.K() * target.R() * source.R().transpose() * source.K().inverse();
        Hinf /= Hinf(2, 2);
        REQUIRE((H - Hinf).cwiseAbs().maxCoeff() < 1e-4);
    }
}

TEST_CASE("homography maps source projections of plane points to target projections") {
    Rng rng(17);
    int checked = 0;
    for (int c = 0; c < 10; ++c) {
        Camera target = random_camera(rng);
        // Source nearby, similar orientation, so plane points stay in front.
        Vector3d offset(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.1, 0.1));
        Matrix3d wobble =
            Eigen::AngleAxisd(rng.uniform(-0.15, 0.15), detail::random_unit(rng)).toRotationMatrix();
        Camera source(target.K(), wobble * target.R(), target.t() + offset);
        double z = rng.uniform(1.0, 4.0);
        Matrix3d frame = detail::frame_from_normal(target.axis());
        Matrix3d H = geo::homography(target, source, z);
        for (int i = 0; i < 10; ++i) {
            Vector3d P = target.center() + z * target.axis() +
                         frame.row(0).transpose() * rng.uniform(-0.5, 0.5) +
                         frame.row(1).transpose() * rng.uniform(-0.5, 0.5);
            auto pt = target.project(P);
            auto ps = source.project(P);
            if (!pt.valid || !ps.valid) continue;
            Vector2d mapped = geo::apply_homography(H, ps.uv);
            REQUIRE((mapped - pt.uv).norm() < 1e-4);
            ++checked;
        }
    }
    REQUIRE(checked >= 50);
}

TEST_CASE("homographies of a shared plane are mutual inverses") {
    Rng rng(19);
    for (int c = 0; c < 5; ++c) {
        // Same orientation, lateral baseline: both cameras' default sweep
        // planes at depth z coincide in world space.
        Matrix3d R = detail::random_basis(rng);
        Matrix3d K = make_k(rng.uniform(60, 150), rng.uniform(60, 150), 31.5, 31.5);
        Camera a(K, R, Vector3d(0, 0, 0));
        Vector3d axis = a.axis();
        Vector3d lateral(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
        lateral -= axis * lateral.dot(axis);
        Camera b(K, R, a.t() - R * lateral);  // centre shifted by `lateral`
        double z = rng.uniform(1.0, 4.0);
        Matrix3d Hab = geo::homography(a, b, z);
        Matrix3d Hba = geo::homography(b, a, z);
        Matrix3d P = Hab * Hba;
        P /= P(2, 2);
        REQUIRE((P - Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-4);
    }
}

TEST_CASE("homography rejects degenerate planes") {
    Rng rng(23);
    Camera cam = random_camera(rng);
    REQUIRE_THROWS_AS(geo::homography(cam, cam, 0.0), ValueError);
    REQUIRE_THROWS_AS(geo::homography(cam, cam, -1.0), ValueError);
    Matrix3d frame = detail::frame_from_normal(cam.axis());
    REQUIRE_THROWS_AS(geo::homography(cam, cam, 1.0, frame.row(0).transpose()), ValueError);
}

TEST_CASE("identity warp reproduces the image with a full mask") {
    Rng rng(29);
    Tensor img = Tensor::alloc({3, 12, 17});
    for (size_t i = 0; i < img.numel(); ++i) img.mut_data()[i] = static_cast<float>(rng.uniform());
    auto r = geo::warp_image(img, Matrix3d::Identity(), 12, 17);
    for (size_t i = 0; i < img.numel(); ++i) {
        REQUIRE(r.image.data()[i] == Catch::Approx(img.data()[i]).margin(1e-6));
    }
    for (float m : r.mask) REQUIRE(m == 1.0f);
}

TEST_CASE("integer translation warps shift pixels and mask the border") {
    Tensor img = Tensor::alloc({1, 4, 5});
    for (int i = 0; i < 20; ++i) img.mut_data()[i] = static_cast<float>(i + 1);
    Matrix3d H = Matrix3d::Identity();
    H(0, 2) = 2.0;  // source pixel x maps to target pixel x + 2
    H(1, 2) = 1.0;
    auto r = geo::warp_image(img, H, 4, 5);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 5; ++x) {
            float got = r.image.data()[y * 5 + x];
            float mask = r.mask[y * 5 + x];
            if (x >= 2 && y >= 1) {
                REQUIRE(mask == 1.0f);
                REQUIRE(got == Catch::Approx(img.data()[(y - 1) * 5 + (x - 2)]).margin(1e-6));
            } else {
                REQUIRE(mask == 0.0f);
                REQUIRE(got == 0.0f);
            }
        }
    }
}

TEST_CASE("plane-sweep warp reproduces the target view of a plane scene") {
    // One textured plane at z = 2 in front of two nearby cameras; warping the
    // source through the plane homography must match the target photometrically.
    Scene scene;
    Primitive plane;
    plane.kind = PrimKind::Plane;
    plane.center = Vector3d(0, 0, 2);
    plane.normal = Vector3d(0, 0, 1);
    plane.basis = detail::frame_from_normal(plane.normal);
    plane.tex.kind = TexKind::Gradient;
    plane.tex.color_a = Vector3d(0.9, 0.2, 0.1);
    plane.tex.color_b = Vector3d(0.1, 0.7, 0.9);
    plane.tex.frequency = 1.0;
    plane.tex.axis = Vector3d(0.8, 0.6, 0.0);
    scene.prims.push_back(plane);

    Camera target = Camera::look_at(Vector3d(0, 0, 0), Vector3d(0, 0, 2), Vector3d(0, 1, 0), 100.0,
                                    31.5, 31.5);
    Camera source = Camera::look_at(Vector3d(0.25, -0.15, 0.05), Vector3d(0, 0, 2),
                                    Vector3d(0, 1, 0), 100.0, 31.5, 31.5);
    OracleRender rt = render_oracle(scene, target, 64, 64);
    OracleRender rs = render_oracle(scene, source, 64, 64);

    double plane_depth = 2.0;  // target sits at the origin looking down +z
    auto warped = geo::warp_image(rs.rgb, geo::homography(target, source, plane_depth), 64, 64);
    double sum = 0.0;
    long count = 0;
    const size_t px = 64 * 64;
    for (size_t i = 0; i < px; ++i) {
        if (warped.mask[i] != 1.0f) continue;
        for (int c = 0; c < 3; ++c) {
            sum += std::abs(static_cast<double>(warped.image.data()[c * px + i]) -
                            rt.rgb.data()[c * px + i]);
            ++count;
        }
    }
    REQUIRE(count > static_cast<long>(px) * 3 / 2);
    REQUIRE(sum / count < 2.0 / 255.0);
}

TEST_CASE("camera text files round-trip exactly") {
    Rng rng(31);
    std::vector<geo::NamedCamera> cams;
    for (int i = 0; i < 4; ++i) {
        cams.push_back({i == 3 ? "target" : "source", random_camera(rng)});
    }
    std::string path = "cameras_roundtrip_test.txt";
    geo::save_cameras(cams, path);
    auto back = geo::load_cameras(path);
    REQUIRE(back.size() == cams.size());
    for (size_t i = 0; i < cams.size(); ++i) {
        REQUIRE(back[i].role == cams[i].role);
        REQUIRE((back[i].camera.K() - cams[i].camera.K()).cwiseAbs().maxCoeff() == 0.0);
        REQUIRE((back[i].camera.R() - cams[i].camera.R()).cwiseAbs().maxCoeff() == 0.0);
        REQUIRE((back[i].camera.t() - cams[i].camera.t()).cwiseAbs().maxCoeff() == 0.0);
    }
    std::remove(path.c_str());

    SECTION("corrupt files are rejected") {
        REQUIRE_THROWS_AS(geo::load_cameras("no_such_cameras.txt"), IoError);
        {
            std::ofstream f("cameras_bad_header.txt");
            f << "not-a-camera-file\n";
        }
        REQUIRE_THROWS_AS(geo::load_cameras("cameras_bad_header.txt"), IoError);
        std::remove("cameras_bad_header.txt");
        {
            std::ofstream f("cameras_truncated.txt");
            f << "mugs-cameras v1\ncount 2\ncamera source\n";
            f << "K 100 0 32 0 100 32 0 0 1\n";
        }
        REQUIRE_THROWS_AS(geo::load_cameras("cameras_truncated.txt"), IoError);
        std::remove("cameras_truncated.txt");
        {
            std::ofstream f("cameras_invalid.txt");
            f << "mugs-cameras v1\ncount 1\ncamera source\n";
            f << "K 100 0 32 0 100 32 0 0 1\n";
            f << "R 2 0 0 0 1 0 0 0 1\n";  // not orthonormal
            f << "t 0 0 0\n";
        }
        REQUIRE_THROWS_AS(geo::load_cameras("cameras_invalid.txt"), IoError);
        std::remove("cameras_invalid.txt");
    }
}
