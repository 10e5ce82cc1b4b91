#pragma once

// Pinhole cameras. World-to-camera convention: x_cam = R * x_world + t,
// z_cam > 0 in front of the camera. Pixel coordinates are pixel centres:
// the image spans [0, W-1] x [0, H-1] at integer centres. Depth is distance
// along the principal axis (third row of R), not along the ray.

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mugs/core/checkpoint.hpp"  // IoError
#include "mugs/core/tensor.hpp"      // ValueError

namespace mugs::geo {

using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

struct Projection {
    Vector2d uv;
    double depth;  // z_cam
    bool valid;    // depth > eps
};

class Camera {
  public:
    Camera() : K_(Matrix3d::Identity()), R_(Matrix3d::Identity()), t_(Vector3d::Zero()) {}

    Camera(const Matrix3d& K, const Matrix3d& R, const Vector3d& t) : K_(K), R_(R), t_(t) { validate(); }

    void validate() const {
        if (!(K_(0, 0) > 0.0) || !(K_(1, 1) > 0.0))
            throw ValueError("Camera: focal entries must be positive");
        if (std::abs(K_(1, 0)) > 1e-9 || std::abs(K_(2, 0)) > 1e-9 || std::abs(K_(2, 1)) > 1e-9)
            throw ValueError("Camera: K must be upper triangular");
        if (std::abs(K_(2, 2) - 1.0) > 1e-9) throw ValueError("Camera: K(2,2) must be 1");
        Matrix3d err = R_ * R_.transpose() - Matrix3d::Identity();
        if (err.cwiseAbs().maxCoeff() > 1e-5) throw ValueError("Camera: R is not orthonormal");
        if (R_.determinant() < 0.0) throw ValueError("Camera: R must be a proper rotation (det +1)");
    }

    const Matrix3d& K() const { return K_; }
    const Matrix3d& R() const { return R_; }
    const Vector3d& t() const { return t_; }

    Vector3d center() const { return -R_.transpose() * t_; }

    // Principal axis (viewing direction) in world coordinates.
    Vector3d axis() const { return R_.row(2).transpose(); }

    Projection project(const Vector3d& P) const {
        Vector3d xc = R_ * P + t_;
        Projection pr;
        pr.depth = xc.z();
        pr.valid = xc.z() > 1e-9;
        if (pr.valid) {
            Vector3d h = K_ * xc;
            pr.uv = Vector2d(h.x() / h.z(), h.y() / h.z());
        } else {
            pr.uv = Vector2d(0, 0);
        }
        return pr;
    }

    Vector3d unproject(const Vector2d& uv, double depth) const {
        if (!(depth > 0.0)) throw ValueError("Camera::unproject: depth must be positive");
        Vector3d xc = depth * (K_.inverse() * Vector3d(uv.x(), uv.y(), 1.0));
        return R_.transpose() * (xc - t_);
    }

    // World-space ray direction for a pixel, scaled so that the point
    // center() + s * ray_dir(uv) has axis-depth exactly s.
    Vector3d ray_dir(const Vector2d& uv) const {
        return R_.transpose() * (K_.inverse() * Vector3d(uv.x(), uv.y(), 1.0));
    }

    // Camera for an image downsampled by integer factor k, pixel-centre
    // convention: level pixel u' has centre k*u' + (k-1)/2 in full-res coords.
    Camera downscaled(int k) const {
        if (k < 1) throw ValueError("Camera::downscaled: factor must be >= 1");
        if (k == 1) return *this;
        Matrix3d A = Matrix3d::Identity();
        double kk = static_cast<double>(k);
        A(0, 0) = 1.0 / kk;
        A(1, 1) = 1.0 / kk;
        A(0, 2) = -(kk - 1.0) / (2.0 * kk);
        A(1, 2) = -(kk - 1.0) / (2.0 * kk);
        return Camera(A * K_, R_, t_);
    }

    static Camera look_at(const Vector3d& position, const Vector3d& target, const Vector3d& up,
                          double focal, double cx, double cy) {
        Vector3d z = (target - position).normalized();
        Vector3d x = up.cross(z);
        if (x.norm() < 1e-9) throw ValueError("Camera::look_at: up parallel to view direction");
        x.normalize();
        Vector3d y = z.cross(x);
        Matrix3d R;
        R.row(0) = x.transpose();
        R.row(1) = y.transpose();
        R.row(2) = z.transpose();
        Matrix3d K = Matrix3d::Identity();
        K(0, 0) = focal;
        K(1, 1) = focal;
        K(0, 2) = cx;
        K(1, 2) = cy;
        return Camera(K, R, -R * position);
    }

  private:
    Matrix3d K_, R_;
    Vector3d t_;
};

// --- text IO: role + full K, R, t per camera ---

struct NamedCamera {
    std::string role;  // "source" or "target"
    Camera camera;
};

inline void save_cameras(const std::vector<NamedCamera>& cams, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cameras: cannot write " + path);
    f.precision(17);
    f << "mugs-cameras v1\n";
    f << "count " << cams.size() << "\n";
    for (const auto& nc : cams) {
        f << "camera " << nc.role << "\n";
        const auto& c = nc.camera;
        f << "K";
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) f << " " << c.K()(i, j);
        f << "\nR";
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) f << " " << c.R()(i, j);
        f << "\nt";
        for (int i = 0; i < 3; ++i) f << " " << c.t()(i);
        f << "\n";
    }
    if (!f) throw IoError("cameras: write failed " + path);
}

inline std::vector<NamedCamera> load_cameras(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cameras: cannot open " + path);
    std::string line;
    auto bad = [&](const std::string& what) { return IoError("cameras: " + what + " in " + path); };
    if (!std::getline(f, line) || line != "mugs-cameras v1") throw bad("bad header");
    size_t count = 0;
    {
        if (!std::getline(f, line)) throw bad("missing count");
        std::istringstream is(line);
        std::string kw;
        if (!(is >> kw >> count) || kw != "count") throw bad("bad count line");
    }
    std::vector<NamedCamera> out;
    for (size_t ci = 0; ci < count; ++ci) {
        NamedCamera nc;
        if (!std::getline(f, line)) throw bad("truncated file");
        {
            std::istringstream is(line);
            std::string kw;
            if (!(is >> kw >> nc.role) || kw != "camera") throw bad("bad camera line");
        }
        Matrix3d K, R;
        Vector3d t;
        auto read_mat = [&](const char* tag, Matrix3d& m) {
            if (!std::getline(f, line)) throw bad("truncated matrix");
            std::istringstream is(line);
            std::string kw;
            if (!(is >> kw) || kw != tag) throw bad(std::string("expected ") + tag + " row");
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    if (!(is >> m(i, j))) throw bad(std::string("bad ") + tag + " numbers");
        };
        read_mat("K", K);
        read_mat("R", R);
        {
            if (!std::getline(f, line)) throw bad("truncated t");
            std::istringstream is(line);
            std::string kw;
            if (!(is >> kw) || kw != "t") throw bad("expected t row");
            for (int i = 0; i < 3; ++i)
                if (!(is >> t(i))) throw bad("bad t numbers");
        }
        try {
            nc.camera = Camera(K, R, t);
        } catch (const ValueError& e) {
            throw IoError("cameras: invalid camera " + std::to_string(ci) + " in " + path + ": " + e.what());
        }
        out.push_back(std::move(nc));
    }
    return out;
}

}  // namespace mugs::geo
