#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "mugs/core/rng.hpp"
#include "mugs/core/tensor.hpp"

namespace mugs {

enum class PrimKind { Sphere, Box, Plane };
enum class TexKind { Checker, Gradient };

struct Texture {
  TexKind kind = TexKind::Checker;
  Eigen::Vector3d color_a{0.8, 0.8, 0.8};
  Eigen::Vector3d color_b{0.2, 0.2, 0.2};
  double frequency = 2.0;   // cycles per world unit in the primitive's local frame
  double phase = 0.0;
  Eigen::Vector3d axis{1.0, 0.0, 0.0};  // gradient direction, local frame, unit
};

struct Primitive {
  PrimKind kind = PrimKind::Sphere;
  Eigen::Vector3d center{0.0, 0.0, 0.0};
  // Rows are the local frame axes: local = basis * (p - center).
  Eigen::Matrix3d basis = Eigen::Matrix3d::Identity();
  double radius = 1.0;                        // sphere
  Eigen::Vector3d half_extent{1.0, 1.0, 1.0}; // box
  Eigen::Vector3d normal{0.0, 0.0, 1.0};      // plane, world frame, unit
  Texture tex;
};

struct Scene {
  std::vector<Primitive> prims;
  Eigen::Vector3d background{0.05, 0.05, 0.08};
  Eigen::Vector3d centroid{0.0, 0.0, 0.0};  // foreground centroid, rig look-at point
  Eigen::Vector3d view_axis{0.0, 0.0, 1.0}; // preferred direction from cameras toward centroid
  double extent = 1.0;                      // foreground bounding radius around centroid
};

struct SceneConfig {
  int min_prims = 3;
  int max_prims = 6;
  bool backdrop = true;   // first primitive becomes a backdrop plane behind the foreground
  bool occluder = false;  // force one primitive to sit close to the cameras
  double extent = 1.0;
  double tex_freq_min = 1.0;
  double tex_freq_max = 3.0;
};

namespace detail {

inline Eigen::Vector3d random_unit(Rng& rng) {
  for (;;) {
    Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
    double n = v.norm();
    if (n > 1e-6) return v / n;
  }
}

inline Eigen::Matrix3d random_basis(Rng& rng) {
  Eigen::Vector3d a = random_unit(rng);
  Eigen::Vector3d h = std::abs(a.x()) < 0.9 ? Eigen::Vector3d(1, 0, 0) : Eigen::Vector3d(0, 1, 0);
  Eigen::Vector3d b = a.cross(h).normalized();
  Eigen::Vector3d c = a.cross(b);
  Eigen::Matrix3d m;
  m.row(0) = a;
  m.row(1) = b;
  m.row(2) = c;
  return m;
}

// Orthonormal frame with the given unit normal as its third row.
inline Eigen::Matrix3d frame_from_normal(const Eigen::Vector3d& n) {
  Eigen::Vector3d h = std::abs(n.x()) < 0.9 ? Eigen::Vector3d(1, 0, 0) : Eigen::Vector3d(0, 1, 0);
  Eigen::Vector3d t1 = n.cross(h).normalized();
  Eigen::Vector3d t2 = n.cross(t1);
  Eigen::Matrix3d m;
  m.row(0) = t1;
  m.row(1) = t2;
  m.row(2) = n;
  return m;
}

inline Texture random_texture(Rng& rng, const SceneConfig& cfg) {
  Texture t;
  t.kind = rng.uniform() < 0.5 ? TexKind::Checker : TexKind::Gradient;
  for (int i = 0; i < 3; ++i) t.color_a[i] = rng.uniform(0.15, 0.95);
  // Keep the pair well separated so every texture carries photometric signal.
  for (int i = 0; i < 3; ++i) {
    double c = t.color_a[i] < 0.5 ? rng.uniform(0.6, 0.95) : rng.uniform(0.05, 0.4);
    t.color_b[i] = c;
  }
  t.frequency = rng.uniform(cfg.tex_freq_min, cfg.tex_freq_max);
  t.phase = rng.uniform(0.0, 1.0);
  t.axis = random_unit(rng);
  return t;
}

}  // namespace detail

inline Eigen::Vector3d texture_color(const Primitive& prim, const Eigen::Vector3d& p_world) {
  Eigen::Vector3d local = prim.basis * (p_world - prim.center);
  const Texture& t = prim.tex;
  if (t.kind == TexKind::Checker) {
    int parity = 0;
    int axes = prim.kind == PrimKind::Plane ? 2 : 3;
    for (int i = 0; i < axes; ++i) {
      parity += static_cast<int>(std::floor(local[i] * t.frequency + t.phase));
    }
    return (parity & 1) ? t.color_b : t.color_a;
  }
  double s = t.axis.dot(local) * t.frequency + t.phase;
  double v = 0.5 + 0.5 * std::sin(2.0 * M_PI * s);
  return t.color_a + v * (t.color_b - t.color_a);
}

struct RayHit {
  bool hit = false;
  double s = 0.0;  // ray parameter, equals z-depth when dir has unit camera-axis component
  int prim = -1;
  Eigen::Vector3d point{0.0, 0.0, 0.0};
};

namespace detail {

inline bool hit_sphere(const Primitive& pr, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                       double& s) {
  Eigen::Vector3d oc = o - pr.center;
  double a = d.dot(d);
  double b = 2.0 * oc.dot(d);
  double c = oc.dot(oc) - pr.radius * pr.radius;
  double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return false;
  double sq = std::sqrt(disc);
  double s0 = (-b - sq) / (2.0 * a);
  double s1 = (-b + sq) / (2.0 * a);
  if (s0 > 1e-6) {
    s = s0;
    return true;
  }
  if (s1 > 1e-6) {
    s = s1;
    return true;
  }
  return false;
}

inline bool hit_box(const Primitive& pr, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                    double& s) {
  Eigen::Vector3d ol = pr.basis * (o - pr.center);
  Eigen::Vector3d dl = pr.basis * d;
  double t0 = -1e300, t1 = 1e300;
  for (int i = 0; i < 3; ++i) {
    double h = pr.half_extent[i];
    if (std::abs(dl[i]) < 1e-12) {
      if (ol[i] < -h || ol[i] > h) return false;
      continue;
    }
    double a = (-h - ol[i]) / dl[i];
    double b = (h - ol[i]) / dl[i];
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return false;
  }
  if (t0 > 1e-6) {
    s = t0;
    return true;
  }
  if (t1 > 1e-6) {
    s = t1;
    return true;
  }
  return false;
}

inline bool hit_plane(const Primitive& pr, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                      double& s) {
  double denom = pr.normal.dot(d);
  if (std::abs(denom) < 1e-12) return false;
  double t = pr.normal.dot(pr.center - o) / denom;
  if (t <= 1e-6) return false;
  s = t;
  return true;
}

}  // namespace detail

inline RayHit raycast(const Scene& scene, const Eigen::Vector3d& origin,
                      const Eigen::Vector3d& dir) {
  RayHit best;
  for (size_t i = 0; i < scene.prims.size(); ++i) {
    const Primitive& pr = scene.prims[i];
    double s = 0.0;
    bool ok = false;
    switch (pr.kind) {
      case PrimKind::Sphere: ok = detail::hit_sphere(pr, origin, dir, s); break;
      case PrimKind::Box: ok = detail::hit_box(pr, origin, dir, s); break;
      case PrimKind::Plane: ok = detail::hit_plane(pr, origin, dir, s); break;
    }
    if (ok && (!best.hit || s < best.s)) {
      best.hit = true;
      best.s = s;
      best.prim = static_cast<int>(i);
      best.point = origin + s * dir;
    }
  }
  return best;
}

inline Scene generate_scene(uint64_t seed, const SceneConfig& cfg = {}) {
  if (cfg.min_prims < 1 || cfg.max_prims < cfg.min_prims) {
    throw ValueError("generate_scene: primitive count range must satisfy 1 <= min <= max");
  }
  if (cfg.extent <= 0.0) throw ValueError("generate_scene: extent must be positive");
  Rng rng(seed);
  Scene scene;
  scene.extent = cfg.extent;
  scene.centroid = Eigen::Vector3d::Zero();
  scene.view_axis = detail::random_unit(rng);
  for (int i = 0; i < 3; ++i) scene.background[i] = rng.uniform(0.02, 0.15);

  int count = cfg.min_prims + rng.uniform_int(cfg.max_prims - cfg.min_prims + 1);
  int fg = count;
  if (cfg.backdrop) {
    // Backdrop plane behind the foreground, facing the cameras.
    Primitive p;
    p.kind = PrimKind::Plane;
    p.normal = scene.view_axis;
    p.center = scene.centroid + scene.view_axis * (cfg.extent * 2.0);
    p.basis = detail::frame_from_normal(p.normal);
    p.tex = detail::random_texture(rng, cfg);
    scene.prims.push_back(p);
    fg = count - 1;
  }
  for (int i = 0; i < fg; ++i) {
    Primitive p;
    p.kind = rng.uniform() < 0.5 ? PrimKind::Sphere : PrimKind::Box;
    Eigen::Vector3d offset = detail::random_unit(rng) * rng.uniform(0.0, cfg.extent * 0.6);
    p.center = scene.centroid + offset;
    p.basis = detail::random_basis(rng);
    p.radius = rng.uniform(0.2, 0.45) * cfg.extent;
    for (int k = 0; k < 3; ++k) p.half_extent[k] = rng.uniform(0.15, 0.4) * cfg.extent;
    p.tex = detail::random_texture(rng, cfg);
    if (cfg.occluder && i == 0) {
      // Park it between the cameras and the rest of the scene so each view
      // loses a different part of the background.
      p.center = scene.centroid - scene.view_axis * (cfg.extent * 0.9) +
                 detail::random_unit(rng) * (cfg.extent * 0.15);
      p.radius = 0.3 * cfg.extent;
      for (int k = 0; k < 3; ++k) p.half_extent[k] = 0.25 * cfg.extent;
    }
    scene.prims.push_back(p);
  }
  return scene;
}

}  // namespace mugs
