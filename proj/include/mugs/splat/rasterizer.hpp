#pragma once

// Differentiable splatting of 3D Gaussians.
//
// Forward: each Gaussian is projected to a 2D mean, depth, and 2x2 screen
// covariance JW Sigma Wt Jt (plus a 0.1-pixel isotropic floor), assigned to
// 16x16 tiles it overlaps within its 3-sigma radius, and composited
// front-to-back per pixel with alpha = opacity * exp(-q/2), q the squared
// Mahalanobis distance. Depth order is a single global sort (ties broken by
// input index); the compositing skips alpha < 1e-4, clamps alpha at 0.9999,
// cuts q > 9, and stops once transmittance drops below 1e-4. The background
// enters with the remaining transmittance. Output channels: rgb, the
// alpha-weighted expected depth, and accumulated alpha.
//
// Backward: analytic. Per-pixel walks run per tile into tile-local buffers;
// a fixed-order reduction over tiles makes gradients independent of thread
// count. The depth sort itself is treated as data (no gradient).
//
// All per-splat geometry and per-pixel accumulation run in double; inputs,
// outputs, and stored gradients are float tensors. Quaternions are taken as
// given (the polynomial R(q) without renormalization), matching the unit
// quaternions the parameter head produces.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mugs/core/parallel.hpp"
#include "mugs/core/tensor.hpp"
#include "mugs/geometry/camera.hpp"

namespace mugs {

inline constexpr int kTileSize = 16;
inline constexpr double kCovFloor = 0.1;
inline constexpr double kAlphaClamp = 0.9999;
inline constexpr double kAlphaSkip = 1e-4;
inline constexpr double kTransmitStop = 1e-4;
inline constexpr double kMahalanobisCut = 9.0;

namespace splat_detail {

struct Prep {
    bool valid = false;
    double mu_cam[3] = {0, 0, 0};  // camera-frame centre
    double uv[2] = {0, 0};         // projected mean, pixel units
    double cov[3] = {0, 0, 0};     // screen covariance a, b, c of [[a,b],[b,c]]
    double cinv[3] = {0, 0, 0};    // its inverse
    double radius = 0;             // 3-sigma bound in pixels
    double sw[9] = {0};            // world covariance, row major
    double J[6] = {0};             // projection Jacobian, 2x3 row major
    double o = 0;                  // opacity
    double col[3] = {0, 0, 0};
    double q[4] = {0}, s[3] = {0};  // quaternion (w,x,y,z) and scales
};

inline void quat_to_rot(const double* q, double* R) {
    double w = q[0], x = q[1], y = q[2], z = q[3];
    R[0] = 1 - 2 * (y * y + z * z);
    R[1] = 2 * (x * y - w * z);
    R[2] = 2 * (x * z + w * y);
    R[3] = 2 * (x * y + w * z);
    R[4] = 1 - 2 * (x * x + z * z);
    R[5] = 2 * (y * z - w * x);
    R[6] = 2 * (x * z - w * y);
    R[7] = 2 * (y * z + w * x);
    R[8] = 1 - 2 * (x * x + y * y);
}

// dR/dq_k, same layout as quat_to_rot.
inline void quat_to_rot_grad(const double* q, int k, double* dR) {
    double w = q[0], x = q[1], y = q[2], z = q[3];
    switch (k) {
        case 0: {
            double m[9] = {0, -z, y, z, 0, -x, -y, x, 0};
            for (int i = 0; i < 9; ++i) dR[i] = 2 * m[i];
            break;
        }
        case 1: {
            double m[9] = {0, y, z, y, -2 * x, -w, z, w, -2 * x};
            for (int i = 0; i < 9; ++i) dR[i] = 2 * m[i];
            break;
        }
        case 2: {
            double m[9] = {-2 * y, x, w, x, 0, z, -w, z, -2 * y};
            for (int i = 0; i < 9; ++i) dR[i] = 2 * m[i];
            break;
        }
        default: {
            double m[9] = {-2 * z, -w, x, w, -2 * z, y, x, y, 0};
            for (int i = 0; i < 9; ++i) dR[i] = 2 * m[i];
            break;
        }
    }
}

struct CamD {
    double R[9];
    double C[3];  // camera centre, world
    double fx, fy, cx, cy;
};

inline CamD cam_to_double(const geo::Camera& cam) {
    CamD c;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) c.R[i * 3 + j] = cam.R()(i, j);
    Eigen::Vector3d ctr = cam.center();
    c.C[0] = ctr.x();
    c.C[1] = ctr.y();
    c.C[2] = ctr.z();
    c.fx = cam.K()(0, 0);
    c.fy = cam.K()(1, 1);
    c.cx = cam.K()(0, 2);
    c.cy = cam.K()(1, 2);
    return c;
}

// Shared by the tiled rasterizer, the reference renderer, and the backward
// pass so every path sees bitwise-identical geometry.
inline Prep prepare_one(const CamD& cam, const double* pos, const double* col, double opacity,
                        const double* scale, const double* quat) {
    Prep p;
    for (int c = 0; c < 3; ++c) p.col[c] = col[c];
    p.o = opacity;
    for (int c = 0; c < 4; ++c) p.q[c] = quat[c];
    for (int c = 0; c < 3; ++c) p.s[c] = scale[c];

    double rel[3] = {pos[0] - cam.C[0], pos[1] - cam.C[1], pos[2] - cam.C[2]};
    for (int i = 0; i < 3; ++i) {
        p.mu_cam[i] = cam.R[i * 3] * rel[0] + cam.R[i * 3 + 1] * rel[1] + cam.R[i * 3 + 2] * rel[2];
    }
    double z = p.mu_cam[2];
    if (!(z > 1e-9)) return p;
    p.uv[0] = cam.fx * p.mu_cam[0] / z + cam.cx;
    p.uv[1] = cam.fy * p.mu_cam[1] / z + cam.cy;

    p.J[0] = cam.fx / z;
    p.J[1] = 0.0;
    p.J[2] = -cam.fx * p.mu_cam[0] / (z * z);
    p.J[3] = 0.0;
    p.J[4] = cam.fy / z;
    p.J[5] = -cam.fy * p.mu_cam[1] / (z * z);

    double Rq[9];
    quat_to_rot(p.q, Rq);
    // sw = Rq diag(s^2) Rq^T
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += Rq[i * 3 + k] * p.s[k] * p.s[k] * Rq[j * 3 + k];
            p.sw[i * 3 + j] = acc;
        }
    }
    // M = J * R (2x3)
    double M[6];
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += p.J[i * 3 + k] * cam.R[k * 3 + j];
            M[i * 3 + j] = acc;
        }
    }
    // cov = M sw M^T + floor
    double MS[6];
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += M[i * 3 + k] * p.sw[k * 3 + j];
            MS[i * 3 + j] = acc;
        }
    }
    double a = MS[0] * M[0] + MS[1] * M[1] + MS[2] * M[2] + kCovFloor;
    double b = MS[0] * M[3] + MS[1] * M[4] + MS[2] * M[5];
    double c = MS[3] * M[3] + MS[4] * M[4] + MS[5] * M[5] + kCovFloor;
    double det = a * c - b * b;
    if (!(det > 0.0) || !std::isfinite(det)) return p;
    p.cov[0] = a;
    p.cov[1] = b;
    p.cov[2] = c;
    p.cinv[0] = c / det;
    p.cinv[1] = -b / det;
    p.cinv[2] = a / det;
    double mid = 0.5 * (a + c);
    double disc = std::sqrt(std::max(0.0, mid * mid - det));
    p.radius = 3.0 * std::sqrt(std::max(1e-12, mid + disc));
    p.valid = std::isfinite(p.radius) && std::isfinite(p.uv[0]) && std::isfinite(p.uv[1]);
    return p;
}

inline std::vector<Prep> prepare_all(const CamD& cam, const double* pos, const double* col,
                                     const double* opa, const double* scl, const double* qua,
                                     int64_t n) {
    std::vector<Prep> prep(static_cast<size_t>(n));
    parallel_for(n, [&](int64_t i) {
        double P[3] = {pos[i], pos[n + i], pos[2 * n + i]};
        double C[3] = {col[i], col[n + i], col[2 * n + i]};
        double S[3] = {scl[i], scl[n + i], scl[2 * n + i]};
        double Q[4] = {qua[i], qua[n + i], qua[2 * n + i], qua[3 * n + i]};
        prep[static_cast<size_t>(i)] = prepare_one(cam, P, C, opa[i], S, Q);
    });
    return prep;
}

// Depth-ascending order over valid splats, input index breaking ties.
inline std::vector<int> sorted_order(const std::vector<Prep>& prep) {
    std::vector<int> order;
    order.reserve(prep.size());
    for (size_t i = 0; i < prep.size(); ++i) {
        if (prep[i].valid) order.push_back(static_cast<int>(i));
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        double za = prep[static_cast<size_t>(a)].mu_cam[2];
        double zb = prep[static_cast<size_t>(b)].mu_cam[2];
        if (za != zb) return za < zb;
        return a < b;
    });
    return order;
}

// One pixel's front-to-back walk. Calls visit(splat_index, alpha, T_before)
// for every composited splat; returns the final transmittance.
template <typename List, typename Visit>
inline double walk_pixel(const std::vector<Prep>& prep, const List& list, double px, double py,
                         Visit&& visit) {
    double T = 1.0;
    for (int idx : list) {
        const Prep& g = prep[static_cast<size_t>(idx)];
        double dx = px - g.uv[0], dy = py - g.uv[1];
        double q = g.cinv[0] * dx * dx + 2.0 * g.cinv[1] * dx * dy + g.cinv[2] * dy * dy;
        if (q > kMahalanobisCut) continue;
        double alpha = std::min(g.o * std::exp(-0.5 * q), kAlphaClamp);
        if (alpha < kAlphaSkip) continue;
        visit(idx, alpha, T);
        T *= 1.0 - alpha;
        if (T < kTransmitStop) break;
    }
    return T;
}

}  // namespace splat_detail

struct RenderOutput {
    Tensor rgb;    // (3, H, W)
    Tensor depth;  // (H, W) alpha-weighted expected depth
    Tensor alpha;  // (H, W) accumulated alpha
};

// Screen-space footprint of one Gaussian, exposed for inspection and tests.
struct ProjectedGaussian {
    bool valid = false;
    double uv[2] = {0, 0};
    double depth = 0;
    double cov[3] = {0, 0, 0};  // a, b, c of [[a,b],[b,c]], floor included
    double radius = 0;
};

inline ProjectedGaussian project_gaussian(const geo::Camera& cam, const float pos[3],
                                          const float scale[3], const float quat[4]) {
    using namespace splat_detail;
    double P[3] = {pos[0], pos[1], pos[2]};
    double S[3] = {scale[0], scale[1], scale[2]};
    double Q[4] = {quat[0], quat[1], quat[2], quat[3]};
    double col[3] = {0, 0, 0};
    Prep p = prepare_one(cam_to_double(cam), P, col, 1.0, S, Q);
    ProjectedGaussian out;
    out.valid = p.valid;
    if (!p.valid) return out;
    out.uv[0] = p.uv[0];
    out.uv[1] = p.uv[1];
    out.depth = p.mu_cam[2];
    for (int i = 0; i < 3; ++i) out.cov[i] = p.cov[i];
    out.radius = p.radius;
    return out;
}

// pos (3,N), color (3,N), opacity (N), scale (3,N), quat (4,N).
// Returns a differentiable (5, H, W) tensor: rgb, depth, alpha stacked.
inline Tensor rasterize_gaussians(const Tensor& pos, const Tensor& color, const Tensor& opacity,
                                  const Tensor& scale, const Tensor& quat, const geo::Camera& cam,
                                  int width, int height, const float background[3]) {
    using namespace splat_detail;
    const int64_t n = opacity.numel();
    if (pos.shape() != Shape({3, static_cast<int>(n)}) ||
        color.shape() != Shape({3, static_cast<int>(n)}) ||
        scale.shape() != Shape({3, static_cast<int>(n)}) ||
        quat.shape() != Shape({4, static_cast<int>(n)}) || opacity.ndim() != 1) {
        throw ValueError("rasterize_gaussians: inconsistent input shapes");
    }
    if (width < 1 || height < 1) throw ValueError("rasterize_gaussians: bad image size");

    const CamD camd = cam_to_double(cam);
    std::vector<double> posd(pos.data(), pos.data() + pos.numel());
    std::vector<double> cold(color.data(), color.data() + color.numel());
    std::vector<double> opad(opacity.data(), opacity.data() + opacity.numel());
    std::vector<double> scld(scale.data(), scale.data() + scale.numel());
    std::vector<double> quad(quat.data(), quat.data() + quat.numel());
    auto prep = std::make_shared<std::vector<Prep>>(
        prepare_all(camd, posd.data(), cold.data(), opad.data(), scld.data(), quad.data(), n));
    std::vector<int> order = sorted_order(*prep);

    const int tiles_x = (width + kTileSize - 1) / kTileSize;
    const int tiles_y = (height + kTileSize - 1) / kTileSize;
    auto tile_lists = std::make_shared<std::vector<std::vector<int>>>(
        static_cast<size_t>(tiles_x) * tiles_y);
    for (int idx : order) {
        const Prep& g = (*prep)[static_cast<size_t>(idx)];
        int x0 = std::max(0, static_cast<int>(std::floor((g.uv[0] - g.radius) / kTileSize)));
        int x1 = std::min(tiles_x - 1, static_cast<int>(std::floor((g.uv[0] + g.radius) / kTileSize)));
        int y0 = std::max(0, static_cast<int>(std::floor((g.uv[1] - g.radius) / kTileSize)));
        int y1 = std::min(tiles_y - 1, static_cast<int>(std::floor((g.uv[1] + g.radius) / kTileSize)));
        for (int ty = y0; ty <= y1; ++ty) {
            for (int tx = x0; tx <= x1; ++tx) {
                (*tile_lists)[static_cast<size_t>(ty) * tiles_x + tx].push_back(idx);
            }
        }
    }

    const double bg[3] = {background[0], background[1], background[2]};
    Tensor out = Tensor::alloc({5, height, width});
    float* od = out.mut_data();
    const int64_t hw = static_cast<int64_t>(height) * width;
    parallel_for(static_cast<int64_t>(tiles_x) * tiles_y, [&](int64_t t) {
        int tx = static_cast<int>(t % tiles_x), ty = static_cast<int>(t / tiles_x);
        const std::vector<int>& list = (*tile_lists)[static_cast<size_t>(t)];
        for (int y = ty * kTileSize; y < std::min(height, (ty + 1) * kTileSize); ++y) {
            for (int x = tx * kTileSize; x < std::min(width, (tx + 1) * kTileSize); ++x) {
                double acc[3] = {0, 0, 0};
                double dep = 0.0;
                double T = walk_pixel(*prep, list, x, y, [&](int idx, double alpha, double Tb) {
                    const Prep& g = (*prep)[static_cast<size_t>(idx)];
                    double w = alpha * Tb;
                    for (int c = 0; c < 3; ++c) acc[c] += w * g.col[c];
                    dep += w * g.mu_cam[2];
                });
                int64_t at = static_cast<int64_t>(y) * width + x;
                for (int c = 0; c < 3; ++c) {
                    od[c * hw + at] = static_cast<float>(acc[c] + T * bg[c]);
                }
                od[3 * hw + at] = static_cast<float>(dep);
                od[4 * hw + at] = static_cast<float>(1.0 - T);
            }
        }
    }, 1);

    autograd::record(
        "rasterize_gaussians", out, {pos, color, opacity, scale, quat},
        [pn = pos.node(), cn = color.node(), on = opacity.node(), sn = scale.node(),
         qn = quat.node(), prep, tile_lists, camd, n, width, height, tiles_x, tiles_y,
         bg0 = bg[0], bg1 = bg[1], bg2 = bg[2]](Node& self) {
            using namespace splat_detail;
            const double bg[3] = {bg0, bg1, bg2};
            const float* g = self.grad.data();
            const int64_t hw = static_cast<int64_t>(height) * width;

            // Per-splat accumulators in compositing space.
            struct Acc {
                double col[3] = {0, 0, 0};
                double o = 0;
                double mu[2] = {0, 0};
                double cov[3] = {0, 0, 0};  // symmetric a, b, c
                double z = 0;
            };
            const int64_t n_tiles = static_cast<int64_t>(tiles_x) * tiles_y;
            std::vector<std::vector<Acc>> per_tile(static_cast<size_t>(n_tiles));
            parallel_for(n_tiles, [&](int64_t t) {
                const std::vector<int>& list = (*tile_lists)[static_cast<size_t>(t)];
                if (list.empty()) return;
                std::vector<Acc>& accs = per_tile[static_cast<size_t>(t)];
                accs.resize(list.size());
                int tx = static_cast<int>(t % tiles_x), ty = static_cast<int>(t / tiles_x);
                std::vector<double> alphas, Ts;
                std::vector<int> hit_slot;
                for (int y = ty * kTileSize; y < std::min(height, (ty + 1) * kTileSize); ++y) {
                    for (int x = tx * kTileSize; x < std::min(width, (tx + 1) * kTileSize); ++x) {
                        int64_t at = static_cast<int64_t>(y) * width + x;
                        double gC[3] = {g[at], g[hw + at], g[2 * hw + at]};
                        double gD = g[3 * hw + at];
                        double gA = g[4 * hw + at];
                        if (gC[0] == 0 && gC[1] == 0 && gC[2] == 0 && gD == 0 && gA == 0) continue;

                        alphas.clear();
                        Ts.clear();
                        hit_slot.clear();
                        int cursor = 0;
                        double Tend = walk_pixel(*prep, list,
                                                 static_cast<double>(x), static_cast<double>(y),
                                                 [&](int idx, double alpha, double Tb) {
                                                     while (list[static_cast<size_t>(cursor)] != idx) ++cursor;
                                                     hit_slot.push_back(cursor);
                                                     alphas.push_back(alpha);
                                                     Ts.push_back(Tb);
                                                 });
                        // Back-to-front: S holds sum_{j>i} w_j col_j + Tend*bg.
                        double S[3] = {Tend * bg[0], Tend * bg[1], Tend * bg[2]};
                        double Sz = 0.0;
                        for (int i = static_cast<int>(hit_slot.size()) - 1; i >= 0; --i) {
                            const Prep& gp = (*prep)[static_cast<size_t>(list[static_cast<size_t>(hit_slot[static_cast<size_t>(i)])])];
                            Acc& a = accs[static_cast<size_t>(hit_slot[static_cast<size_t>(i)])];
                            double alpha = alphas[static_cast<size_t>(i)];
                            double Tb = Ts[static_cast<size_t>(i)];
                            double w = alpha * Tb;
                            double inv1ma = 1.0 / (1.0 - alpha);

                            double gAlpha = 0.0;
                            for (int c = 0; c < 3; ++c) {
                                a.col[c] += gC[c] * w;
                                gAlpha += gC[c] * (Tb * gp.col[c] - S[c] * inv1ma);
                            }
                            a.z += gD * w;
                            gAlpha += gD * (Tb * gp.mu_cam[2] - Sz * inv1ma);
                            gAlpha += gA * (Tend * inv1ma);

                            double dx = x - gp.uv[0], dy = y - gp.uv[1];
                            double q = gp.cinv[0] * dx * dx + 2.0 * gp.cinv[1] * dx * dy +
                                       gp.cinv[2] * dy * dy;
                            double G = std::exp(-0.5 * q);
                            if (gp.o * G < kAlphaClamp) {  // clamp blocks the gradient
                                a.o += gAlpha * G;
                                double gq = -0.5 * gp.o * G * gAlpha;
                                // q = d^T Cinv d
                                double gdx = gq * 2.0 * (gp.cinv[0] * dx + gp.cinv[1] * dy);
                                double gdy = gq * 2.0 * (gp.cinv[1] * dx + gp.cinv[2] * dy);
                                a.mu[0] -= gdx;  // d = p - mu
                                a.mu[1] -= gdy;
                                // dq/dCinv = d d^T, dCinv/dCov = -Cinv dE Cinv
                                double gi_a = gq * dx * dx;
                                double gi_b = gq * 2.0 * dx * dy;  // combined off-diagonal
                                double gi_c = gq * dy * dy;
                                const double ia = gp.cinv[0], ib = gp.cinv[1], ic = gp.cinv[2];
                                // gCov = -Cinv * gCinv * Cinv with symmetric gCinv
                                // (gi_b already folds both off-diagonal entries).
                                double m00 = gi_a * ia + 0.5 * gi_b * ib;
                                double m01 = gi_a * ib + 0.5 * gi_b * ic;
                                double m10 = 0.5 * gi_b * ia + gi_c * ib;
                                double m11 = 0.5 * gi_b * ib + gi_c * ic;
                                a.cov[0] -= ia * m00 + ib * m10;
                                a.cov[1] -= ia * m01 + ib * m11;  // single off-diagonal entry
                                a.cov[2] -= ib * m01 + ic * m11;
                            }

                            for (int c = 0; c < 3; ++c) S[c] += w * gp.col[c];
                            Sz += w * gp.mu_cam[2];
                        }
                    }
                }
            });

            // Fixed-order reduce across tiles: thread-count independent.
            std::vector<Acc> total(static_cast<size_t>(n));
            for (int64_t t = 0; t < n_tiles; ++t) {
                const std::vector<int>& list = (*tile_lists)[static_cast<size_t>(t)];
                const std::vector<Acc>& accs = per_tile[static_cast<size_t>(t)];
                for (size_t i = 0; i < accs.size(); ++i) {
                    Acc& dst = total[static_cast<size_t>(list[i])];
                    const Acc& src = accs[i];
                    for (int c = 0; c < 3; ++c) dst.col[c] += src.col[c];
                    dst.o += src.o;
                    dst.mu[0] += src.mu[0];
                    dst.mu[1] += src.mu[1];
                    for (int c = 0; c < 3; ++c) dst.cov[c] += src.cov[c];
                    dst.z += src.z;
                }
            }

            pn->ensure_grad();
            cn->ensure_grad();
            on->ensure_grad();
            sn->ensure_grad();
            qn->ensure_grad();
            float* gpos = pn->grad.data();
            float* gcol = cn->grad.data();
            float* gopa = on->grad.data();
            float* gscl = sn->grad.data();
            float* gqua = qn->grad.data();

            parallel_for(n, [&](int64_t i) {
                const Prep& p = (*prep)[static_cast<size_t>(i)];
                const Acc& a = total[static_cast<size_t>(i)];
                if (!p.valid) return;
                for (int c = 0; c < 3; ++c) gcol[c * n + i] += static_cast<float>(a.col[c]);
                gopa[i] += static_cast<float>(a.o);

                // Screen mean -> camera coords through the projection.
                double gmu_cam[3] = {0, 0, 0};
                double z = p.mu_cam[2];
                gmu_cam[0] += a.mu[0] * camd.fx / z;
                gmu_cam[1] += a.mu[1] * camd.fy / z;
                gmu_cam[2] += -a.mu[0] * camd.fx * p.mu_cam[0] / (z * z) -
                              a.mu[1] * camd.fy * p.mu_cam[1] / (z * z);
                gmu_cam[2] += a.z;  // depth-output channel

                // Covariance chain: cov = M sw M^T, M = J R.
                double M[6];
                for (int r = 0; r < 2; ++r) {
                    for (int cc = 0; cc < 3; ++cc) {
                        double acc2 = 0.0;
                        for (int k = 0; k < 3; ++k) acc2 += p.J[r * 3 + k] * camd.R[k * 3 + cc];
                        M[r * 3 + cc] = acc2;
                    }
                }
                double gcov[4] = {a.cov[0], a.cov[1], a.cov[1], a.cov[2]};
                // gM = 2 gcov M sw (gcov symmetric)
                double MS[6];
                for (int r = 0; r < 2; ++r) {
                    for (int cc = 0; cc < 3; ++cc) {
                        double acc2 = 0.0;
                        for (int k = 0; k < 3; ++k) acc2 += M[r * 3 + k] * p.sw[k * 3 + cc];
                        MS[r * 3 + cc] = acc2;
                    }
                }
                double gM[6];
                for (int r = 0; r < 2; ++r) {
                    for (int cc = 0; cc < 3; ++cc) {
                        gM[r * 3 + cc] = 2.0 * (gcov[r * 2] * MS[cc] + gcov[r * 2 + 1] * MS[3 + cc]);
                    }
                }
                // gsw = M^T gcov M
                double gsw[9];
                for (int r = 0; r < 3; ++r) {
                    for (int cc = 0; cc < 3; ++cc) {
                        double acc2 = 0.0;
                        for (int u = 0; u < 2; ++u) {
                            for (int v = 0; v < 2; ++v) {
                                acc2 += M[u * 3 + r] * gcov[u * 2 + v] * M[v * 3 + cc];
                            }
                        }
                        gsw[r * 3 + cc] = acc2;
                    }
                }
                // gJ = gM R^T
                double gJ[6];
                for (int r = 0; r < 2; ++r) {
                    for (int cc = 0; cc < 3; ++cc) {
                        double acc2 = 0.0;
                        for (int k = 0; k < 3; ++k) acc2 += gM[r * 3 + k] * camd.R[cc * 3 + k];
                        gJ[r * 3 + cc] = acc2;
                    }
                }
                // J entries depend on mu_cam.
                double fx = camd.fx, fy = camd.fy;
                double x0 = p.mu_cam[0], y0 = p.mu_cam[1];
                gmu_cam[0] += gJ[2] * (-fx / (z * z));
                gmu_cam[1] += gJ[5] * (-fy / (z * z));
                gmu_cam[2] += gJ[0] * (-fx / (z * z)) + gJ[2] * (2.0 * fx * x0 / (z * z * z)) +
                              gJ[4] * (-fy / (z * z)) + gJ[5] * (2.0 * fy * y0 / (z * z * z));

                // World position: mu_cam = R (pos - C).
                for (int cc = 0; cc < 3; ++cc) {
                    double acc2 = 0.0;
                    for (int r = 0; r < 3; ++r) acc2 += camd.R[r * 3 + cc] * gmu_cam[r];
                    gpos[cc * n + i] += static_cast<float>(acc2);
                }

                // World covariance: sw = Rq diag(s^2) Rq^T.
                double Rq[9];
                quat_to_rot(p.q, Rq);
                // gRq = (gsw + gsw^T) Rq diag(s^2); gsw is symmetric already.
                double gRq[9];
                for (int r = 0; r < 3; ++r) {
                    for (int cc = 0; cc < 3; ++cc) {
                        double acc2 = 0.0;
                        for (int k = 0; k < 3; ++k) {
                            acc2 += (gsw[r * 3 + k] + gsw[k * 3 + r]) * Rq[k * 3 + cc];
                        }
                        gRq[r * 3 + cc] = acc2 * p.s[cc] * p.s[cc];
                    }
                }
                for (int k = 0; k < 4; ++k) {
                    double dR[9];
                    quat_to_rot_grad(p.q, k, dR);
                    double acc2 = 0.0;
                    for (int e = 0; e < 9; ++e) acc2 += gRq[e] * dR[e];
                    gqua[k * n + i] += static_cast<float>(acc2);
                }
                // gs_k = (Rq^T gsw Rq)_kk * 2 s_k
                for (int k = 0; k < 3; ++k) {
                    double acc2 = 0.0;
                    for (int r = 0; r < 3; ++r) {
                        for (int cc = 0; cc < 3; ++cc) {
                            acc2 += Rq[r * 3 + k] * gsw[r * 3 + cc] * Rq[cc * 3 + k];
                        }
                    }
                    gscl[k * n + i] += static_cast<float>(acc2 * 2.0 * p.s[k]);
                }
            });
        });
    return out;
}

// Convenience wrapper returning split views of the combined output.
inline RenderOutput render_gaussians(const Tensor& pos, const Tensor& color, const Tensor& opacity,
                                     const Tensor& scale, const Tensor& quat,
                                     const geo::Camera& cam, int width, int height,
                                     const float background[3]) {
    Tensor all = rasterize_gaussians(pos, color, opacity, scale, quat, cam, width, height,
                                     background);
    RenderOutput out;
    out.rgb = slice(all, 0, 0, 3);
    out.depth = reshape(slice(all, 0, 3, 1), {height, width});
    out.alpha = reshape(slice(all, 0, 4, 1), {height, width});
    return out;
}

}  // namespace mugs
