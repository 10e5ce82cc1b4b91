#pragma once

// Camera rig generation with measured view overlap. Overlap between two views
// is the fraction of one view's surface pixels whose 3D point projects inside
// the other view's image with positive depth; modes constrain it empirically
// rather than trusting placement geometry.

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mugs/core/rng.hpp"
#include "mugs/geometry/camera.hpp"
#include "mugs/scene/oracle.hpp"
#include "mugs/scene/scene.hpp"

namespace mugs {

enum class BaselineMode { Small, Large };

inline std::string to_string(BaselineMode m) {
  return m == BaselineMode::Small ? "small" : "large";
}

inline BaselineMode baseline_from_string(const std::string& s) {
  if (s == "small") return BaselineMode::Small;
  if (s == "large") return BaselineMode::Large;
  throw ValueError("baseline mode must be 'small' or 'large', got '" + s + "'");
}

struct RigConfig {
  int n_sources = 3;
  BaselineMode mode = BaselineMode::Small;
  int width = 64;
  int height = 64;
  double fov_deg = 50.0;       // horizontal field of view
  double distance = 2.4;       // camera distance from centroid, in scene extents
  double small_spread_deg = 6.0;
  double large_sep_deg = 75.0;     // angular separation between adjacent sources
  double large_look_offset = 1.2;  // lateral look-at offset, in scene extents
  double large_truck = 0.8;        // lateral position offset, in scene extents
  int max_attempts = 100;
};

struct Rig {
  std::vector<geo::Camera> cameras;  // sources first, target last
  int target_index = 0;
  Eigen::MatrixXd overlap;           // overlap(i, j) = fraction of i's pixels visible in j
};

// Directed overlap from view a into view b, measured on an oracle depth map.
inline double view_overlap(const Scene& scene, const geo::Camera& a, const geo::Camera& b,
                           int width, int height) {
  OracleRender ra = render_oracle(scene, a, width, height);
  Eigen::Vector3d origin = a.center();
  long hits = 0, inside = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      float d = ra.depth[static_cast<size_t>(y) * width + x];
      if (!(d > 0.0f)) continue;
      ++hits;
      Eigen::Vector3d P = origin + static_cast<double>(d) * a.ray_dir(Eigen::Vector2d(x, y));
      geo::Projection pr = b.project(P);
      const double eps = 1e-6;  // keep self-overlap exact at the image border
      if (pr.valid && pr.uv.x() >= -eps && pr.uv.x() <= width - 1.0 + eps && pr.uv.y() >= -eps &&
          pr.uv.y() <= height - 1.0 + eps) {
        ++inside;
      }
    }
  }
  return hits > 0 ? static_cast<double>(inside) / static_cast<double>(hits) : 0.0;
}

namespace detail {

// `out` is a world-space lateral hint; the camera position is trucked along
// its component orthogonal to the viewing direction and the look-at target is
// shifted the same way, which is how large-baseline rigs decorrelate views.
inline geo::Camera place_camera(const Scene& scene, const RigConfig& cfg, double phi, double tilt,
                                double dist_scale, const Eigen::Vector3d& out, double look_off,
                                double truck, const Eigen::Vector3d& e1, const Eigen::Vector3d& e2,
                                Rng& rng) {
  Eigen::Vector3d d = std::cos(phi) * scene.view_axis + std::sin(phi) * e1 + tilt * e2;
  d.normalize();
  Eigen::Vector3d lat = out - d * out.dot(d);
  if (lat.norm() > 1e-9) lat.normalize();
  double dist = cfg.distance * scene.extent * dist_scale;
  Eigen::Vector3d pos = scene.centroid - d * dist + lat * (truck * scene.extent);
  Eigen::Vector3d look = scene.centroid + lat * (look_off * scene.extent) +
                         detail::random_unit(rng) * (0.03 * scene.extent);
  Eigen::Vector3d up = std::abs(d.dot(e2)) > 0.9 ? e1 : e2;
  double focal = (cfg.width / 2.0) / std::tan(0.5 * cfg.fov_deg * M_PI / 180.0);
  return geo::Camera::look_at(pos, look, up, focal, (cfg.width - 1) / 2.0,
                              (cfg.height - 1) / 2.0);
}

}  // namespace detail

inline Rig camera_rig(const Scene& scene, const RigConfig& cfg, uint64_t seed) {
  if (cfg.n_sources < 1) throw ValueError("camera_rig: need at least one source view");
  Rng rng(seed);
  Eigen::Matrix3d frame = detail::frame_from_normal(scene.view_axis);
  Eigen::Vector3d e1 = frame.row(0), e2 = frame.row(1);
  const int n = cfg.n_sources;
  double worst_small = -1.0, worst_large = -1.0;

  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    // Escalate with failed attempts: tighter clusters for small baselines,
    // stronger outward offsets for large ones. Keeps the search deterministic
    // while guaranteeing progress on awkward scenes.
    double esc = static_cast<double>(attempt) / std::max(1, cfg.max_attempts - 1);
    double out_mult = cfg.mode == BaselineMode::Large ? 1.0 + 0.6 * esc : 0.0;
    Rig rig;
    rig.target_index = n;
    std::vector<double> phis(n);
    if (cfg.mode == BaselineMode::Small) {
      double spread = cfg.small_spread_deg * (1.0 - 0.7 * esc) * M_PI / 180.0;
      for (int i = 0; i < n; ++i) phis[i] = rng.uniform(-spread, spread);
    } else {
      double sep = cfg.large_sep_deg * M_PI / 180.0;
      for (int i = 0; i < n; ++i) {
        double phi = sep * (i - (n - 1) / 2.0) + rng.uniform(-0.05, 0.05);
        phis[i] = std::clamp(phi, -80.0 * M_PI / 180.0, 80.0 * M_PI / 180.0);
      }
    }
    for (int i = 0; i < n; ++i) {
      double tilt = rng.uniform(-0.06, 0.06);
      // Outward hints fan across the tangent plane so each source frames a
      // different part of the scene.
      double psi = n > 1 ? M_PI * (1.0 - static_cast<double>(i) / (n - 1)) : 0.0;
      Eigen::Vector3d out = std::cos(psi) * e1 + std::sin(psi) * e2;
      rig.cameras.push_back(detail::place_camera(
          scene, cfg, phis[i], tilt, rng.uniform(0.95, 1.05), out,
          out_mult * cfg.large_look_offset, out_mult * cfg.large_truck, e1, e2, rng));
    }
    double phi_t;
    if (cfg.mode == BaselineMode::Small) {
      phi_t = rng.uniform(-cfg.small_spread_deg, cfg.small_spread_deg) * M_PI / 180.0;
    } else {
      double mean = 0.0;
      for (double p : phis) mean += p;
      phi_t = mean / n + rng.uniform(-0.05, 0.05);
    }
    // The target keeps the centroid framed in both modes.
    rig.cameras.push_back(detail::place_camera(scene, cfg, phi_t, rng.uniform(-0.06, 0.06),
                                               rng.uniform(0.95, 1.05), Eigen::Vector3d::Zero(),
                                               0.0, 0.0, e1, e2, rng));

    const int total = n + 1;
    rig.overlap = Eigen::MatrixXd::Ones(total, total);
    for (int i = 0; i < total; ++i) {
      for (int j = 0; j < total; ++j) {
        if (i != j) {
          rig.overlap(i, j) =
              view_overlap(scene, rig.cameras[i], rig.cameras[j], cfg.width, cfg.height);
        }
      }
    }

    bool ok = true;
    if (cfg.mode == BaselineMode::Small) {
      // Every pair, target included, must share most of its view.
      for (int i = 0; i < total && ok; ++i) {
        for (int j = i + 1; j < total && ok; ++j) {
          double o = std::min(rig.overlap(i, j), rig.overlap(j, i));
          worst_small = std::max(worst_small, 0.6 - o);
          if (o < 0.6) ok = false;
        }
      }
    } else {
      // Source pairs must be near-disjoint; the target sits between sources
      // and keeps whatever overlap that geometry gives it.
      for (int i = 0; i < n && ok; ++i) {
        for (int j = i + 1; j < n && ok; ++j) {
          double o = std::max(rig.overlap(i, j), rig.overlap(j, i));
          worst_large = std::max(worst_large, o - 0.3);
          if (o > 0.3) ok = false;
        }
      }
    }
    if (ok) return rig;
  }
  throw ValueError("camera_rig: no placement met the " + to_string(cfg.mode) +
                   "-baseline overlap constraint after " + std::to_string(cfg.max_attempts) +
                   " attempts (worst margin " +
                   std::to_string(cfg.mode == BaselineMode::Small ? worst_small : worst_large) +
                   ")");
}

}  // namespace mugs
