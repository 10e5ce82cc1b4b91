#pragma once

// On-disk dataset layout, one directory per scene:
//   scene_0000/
//     view_00.png ... view_NN.png   source views then target, 8-bit RGB
//     depth_00.pfm ... depth_NN.pfm ground-truth z-depth, 0 = no surface
//     mde_00.pfm ... (sources only)  monocular depth estimates
//     cameras.txt                    roles + intrinsics/extrinsics
//     manifest.txt                   key-value scene metadata
// plus a root manifest.txt listing the scene directories.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mugs/geometry/camera.hpp"
#include "mugs/io/pfm.hpp"
#include "mugs/io/png.hpp"
#include "mugs/scene/mde.hpp"
#include "mugs/scene/oracle.hpp"
#include "mugs/scene/rig.hpp"
#include "mugs/scene/scene.hpp"

namespace mugs {

struct SceneSample {
  int width = 0;
  int height = 0;
  int n_sources = 0;
  BaselineMode mode = BaselineMode::Small;
  double depth_min = 0.0;  // candidate depth range covering the scene
  double depth_max = 0.0;
  std::vector<Tensor> images;               // n_sources + 1, target last, (3,H,W)
  std::vector<std::vector<float>> gt_depth; // n_sources + 1
  std::vector<std::vector<float>> mde;      // n_sources
  std::vector<geo::Camera> cameras;         // n_sources + 1
  int target_index() const { return n_sources; }
};

struct GenConfig {
  SceneConfig scene;
  RigConfig rig;
  double mde_scale_min = 0.8;
  double mde_scale_max = 1.25;
  double mde_shift_frac = 0.1;   // |shift| up to this fraction of median depth
  double mde_noise_sigma = 0.05;
};

inline SceneSample generate_scene_sample(uint64_t seed, const GenConfig& cfg) {
  Scene scene = generate_scene(seed, cfg.scene);
  Rig rig = camera_rig(scene, cfg.rig, seed ^ 0x9e3779b97f4a7c15ull);
  Rng rng(seed ^ 0x6a09e667f3bcc908ull);
  SceneSample s;
  s.width = cfg.rig.width;
  s.height = cfg.rig.height;
  s.n_sources = cfg.rig.n_sources;
  s.mode = cfg.rig.mode;
  s.cameras = rig.cameras;
  double dmin = 1e300, dmax = 0.0;
  for (int v = 0; v <= s.n_sources; ++v) {
    OracleRender r = render_oracle(scene, rig.cameras[v], s.width, s.height);
    s.images.push_back(r.rgb);
    for (float d : r.depth) {
      if (d > 0.0f) {
        dmin = std::min(dmin, static_cast<double>(d));
        dmax = std::max(dmax, static_cast<double>(d));
      }
    }
    s.gt_depth.push_back(std::move(r.depth));
  }
  if (!(dmax > 0.0)) throw ValueError("generate_scene_sample: no surface visible from any view");
  s.depth_min = 0.85 * dmin;
  s.depth_max = 1.15 * dmax;
  for (int v = 0; v < s.n_sources; ++v) {
    MdeParams mp;
    mp.scale = rng.uniform(cfg.mde_scale_min, cfg.mde_scale_max);
    double med = median_positive(s.gt_depth[v]);
    mp.shift = rng.uniform(-cfg.mde_shift_frac, cfg.mde_shift_frac) * med;
    mp.noise_sigma = cfg.mde_noise_sigma;
    mp.seed = rng.next_u64();
    s.mde.push_back(mde_stub(s.gt_depth[v], s.width, s.height, mp));
  }
  return s;
}

namespace detail {

inline std::string view_name(const char* prefix, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%02d.%s", prefix, i, ext);
  return buf;
}

}  // namespace detail

inline void write_scene_sample(const std::string& dir, const SceneSample& s) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const int total = s.n_sources + 1;
  std::vector<geo::NamedCamera> named;
  for (int v = 0; v < total; ++v) {
    write_png(dir + "/" + detail::view_name("view", v, "png"), s.images[v]);
    write_pfm(dir + "/" + detail::view_name("depth", v, "pfm"), s.width, s.height, s.gt_depth[v]);
    if (v < s.n_sources) {
      write_pfm(dir + "/" + detail::view_name("mde", v, "pfm"), s.width, s.height, s.mde[v]);
    }
    named.push_back({v == s.n_sources ? "target" : "source", s.cameras[v]});
  }
  geo::save_cameras(named, dir + "/cameras.txt");
  std::ofstream mf(dir + "/manifest.txt");
  if (!mf) throw IoError("dataset: cannot write " + dir + "/manifest.txt");
  mf.precision(17);
  mf << "width " << s.width << "\n";
  mf << "height " << s.height << "\n";
  mf << "n_sources " << s.n_sources << "\n";
  mf << "baseline " << to_string(s.mode) << "\n";
  mf << "depth_min " << s.depth_min << "\n";
  mf << "depth_max " << s.depth_max << "\n";
}

inline SceneSample load_scene_sample(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.txt");
  if (!mf) throw IoError("dataset: cannot open " + dir + "/manifest.txt");
  SceneSample s;
  std::string key, baseline;
  while (mf >> key) {
    if (key == "width") mf >> s.width;
    else if (key == "height") mf >> s.height;
    else if (key == "n_sources") mf >> s.n_sources;
    else if (key == "baseline") mf >> baseline;
    else if (key == "depth_min") mf >> s.depth_min;
    else if (key == "depth_max") mf >> s.depth_max;
    else throw IoError("dataset: unknown manifest key '" + key + "' in " + dir);
    if (!mf) throw IoError("dataset: bad manifest value for '" + key + "' in " + dir);
  }
  if (s.width < 1 || s.height < 1 || s.n_sources < 1 || !(s.depth_max > s.depth_min) ||
      !(s.depth_min > 0.0)) {
    throw IoError("dataset: incomplete manifest in " + dir);
  }
  s.mode = baseline_from_string(baseline);
  std::vector<geo::NamedCamera> named = geo::load_cameras(dir + "/cameras.txt");
  if (static_cast<int>(named.size()) != s.n_sources + 1) {
    throw IoError("dataset: camera count mismatch in " + dir);
  }
  for (int v = 0; v <= s.n_sources; ++v) {
    const std::string& role = named[v].role;
    if ((v < s.n_sources && role != "source") || (v == s.n_sources && role != "target")) {
      throw IoError("dataset: unexpected camera role '" + role + "' at index " +
                    std::to_string(v) + " in " + dir);
    }
    s.cameras.push_back(named[v].camera);
    Tensor img = read_png(dir + "/" + detail::view_name("view", v, "png"));
    if (img.shape()[1] != s.height || img.shape()[2] != s.width) {
      throw IoError("dataset: image size mismatch in " + dir);
    }
    s.images.push_back(img);
    PfmImage d = read_pfm(dir + "/" + detail::view_name("depth", v, "pfm"));
    if (d.width != s.width || d.height != s.height) {
      throw IoError("dataset: depth size mismatch in " + dir);
    }
    s.gt_depth.push_back(std::move(d.data));
    if (v < s.n_sources) {
      PfmImage m = read_pfm(dir + "/" + detail::view_name("mde", v, "pfm"));
      if (m.width != s.width || m.height != s.height) {
        throw IoError("dataset: mde size mismatch in " + dir);
      }
      s.mde.push_back(std::move(m.data));
    }
  }
  return s;
}

inline std::vector<std::string> write_dataset(const std::string& root, int n_scenes,
                                              uint64_t seed0, const GenConfig& cfg) {
  namespace fs = std::filesystem;
  if (n_scenes < 1) throw ValueError("write_dataset: need at least one scene");
  fs::create_directories(root);
  std::vector<std::string> dirs;
  for (int i = 0; i < n_scenes; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%04d", i);
    SceneSample s = generate_scene_sample(seed0 + static_cast<uint64_t>(i), cfg);
    write_scene_sample(root + "/" + buf, s);
    dirs.push_back(buf);
  }
  std::ofstream mf(root + "/manifest.txt");
  if (!mf) throw IoError("dataset: cannot write " + root + "/manifest.txt");
  mf << "scenes " << n_scenes << "\n";
  for (const std::string& d : dirs) mf << d << "\n";
  return dirs;
}

inline std::vector<std::string> list_dataset(const std::string& root) {
  std::ifstream mf(root + "/manifest.txt");
  if (!mf) throw IoError("dataset: cannot open " + root + "/manifest.txt");
  std::string tok;
  int n = 0;
  mf >> tok >> n;
  if (!mf || tok != "scenes" || n < 1) throw IoError("dataset: bad root manifest in " + root);
  std::vector<std::string> dirs;
  for (int i = 0; i < n; ++i) {
    std::string d;
    mf >> d;
    if (!mf) throw IoError("dataset: root manifest truncated in " + root);
    dirs.push_back(root + "/" + d);
  }
  return dirs;
}

}  // namespace mugs
