#pragma once

// Plane-induced homographies for plane-sweep stereo.
//
// The sweep plane for depth z is fronto-parallel to the target camera by
// default: it passes through C_t + z * axis_t with normal n (world frame,
// n = axis_t unless overridden). homography() returns the exact
// source-to-target pixel map H: for any point P on that plane,
// H * proj_source(P) == proj_target(P) in homogeneous coordinates.
//
// Derivation (target-to-source direction, then inverted): a target pixel u
// backprojects to the ray C_t + s * R_t^T K_t^-1 u~; intersecting the plane
// and projecting into the source collapses to
//   H_ts = K_s R_s [ z (n . axis_t) I + (C_t - C_s) n^T ] R_t^T K_t^-1 .

#include <Eigen/Dense>

#include "mugs/geometry/camera.hpp"

namespace mugs::geo {

struct PlaneSweepConfig {
    std::vector<double> depths;          // candidate plane depths, ascending
    Vector3d normal = Vector3d::Zero();  // zero means "use target axis"
};

// Target-to-source map for the sweep plane at depth z (used by warping).
inline Matrix3d homography_target_to_source(const Camera& target, const Camera& source, double z,
                                            const Vector3d& normal = Vector3d::Zero()) {
    if (!(z > 0.0)) throw ValueError("homography: plane depth must be positive");
    Vector3d axis_t = target.axis();
    Vector3d n = normal.squaredNorm() > 0.0 ? Vector3d(normal.normalized()) : axis_t;
    double ndota = n.dot(axis_t);
    if (std::abs(ndota) < 1e-9) throw ValueError("homography: plane normal perpendicular to target axis");
    Vector3d baseline = target.center() - source.center();
    Matrix3d core = z * ndota * Matrix3d::Identity() + baseline * n.transpose();
    return source.K() * source.R() * core * target.R().transpose() * target.K().inverse();
}

// Source-to-target map (the public contract). Normalized so H(2,2) == 1
// when that entry is meaningful.
inline Matrix3d homography(const Camera& target, const Camera& source, double z,
                           const Vector3d& normal = Vector3d::Zero()) {
    Matrix3d h = homography_target_to_source(target, source, z, normal).inverse();
    if (std::abs(h(2, 2)) > 1e-12) h /= h(2, 2);
    return h;
}

inline Vector2d apply_homography(const Matrix3d& H, const Vector2d& uv) {
    Vector3d q = H * Vector3d(uv.x(), uv.y(), 1.0);
    return Vector2d(q.x() / q.z(), q.y() / q.z());
}

}  // namespace mugs::geo
