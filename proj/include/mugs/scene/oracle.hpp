#pragma once

// Analytic reference renderer: exact ray-primitive intersections, flat albedo
// shading. Serves as ground truth for images and z-depth maps.

#include <vector>

#include "mugs/core/parallel.hpp"
#include "mugs/core/tensor.hpp"
#include "mugs/geometry/camera.hpp"
#include "mugs/scene/scene.hpp"

namespace mugs {

struct OracleRender {
  Tensor rgb;                // (3, H, W), values in [0, 1]
  std::vector<float> depth;  // H*W row-major z-depth, 0 where no surface is hit
  int width = 0;
  int height = 0;
};

inline OracleRender render_oracle(const Scene& scene, const geo::Camera& cam, int width,
                                  int height) {
  if (width < 1 || height < 1) throw ValueError("render_oracle: image size must be positive");
  OracleRender out;
  out.width = width;
  out.height = height;
  out.rgb = Tensor::zeros({3, height, width});
  out.depth.assign(static_cast<size_t>(width) * height, 0.0f);
  float* rgb = out.rgb.mut_data();
  const size_t plane = static_cast<size_t>(width) * height;
  const Eigen::Vector3d origin = cam.center();
  parallel_for(height, [&](int64_t y) {
    for (int x = 0; x < width; ++x) {
      Eigen::Vector3d dir = cam.ray_dir(Eigen::Vector2d(x, static_cast<double>(y)));
      RayHit h = raycast(scene, origin, dir);
      size_t idx = static_cast<size_t>(y) * width + x;
      Eigen::Vector3d c = scene.background;
      if (h.hit) {
        c = texture_color(scene.prims[h.prim], h.point);
        out.depth[idx] = static_cast<float>(h.s);
      }
      for (int ch = 0; ch < 3; ++ch) {
        rgb[ch * plane + idx] = static_cast<float>(std::min(1.0, std::max(0.0, c[ch])));
      }
    }
  }, 1);
  return out;
}

}  // namespace mugs
