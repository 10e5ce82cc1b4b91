#pragma once

// Composite gradient-check cases: end-to-end slices of the pipeline, each
// verified against an independent double-precision re-implementation. The
// slices pin the wiring (masking, warping, skip connections, attention
// plumbing, compositing) rather than individual kernels, which the primitive
// cases already cover. Thresholds: smooth composites 1e-3, the rasterizer
// 1e-2 (its forward has cutoff branches near which finite differences
// degrade).

#include <cmath>
#include <vector>

#include "mugs/core/grad_check.hpp"
#include "mugs/fusion/refine.hpp"
#include "mugs/fusion/unet3d.hpp"
#include "mugs/gauss/heads.hpp"
#include "mugs/splat/rasterizer.hpp"
#include "mugs/splat/reference.hpp"
#include "mugs/sweep/regularizer.hpp"
#include "mugs/sweep/volume.hpp"

namespace mugs::gradcheck {

namespace cref {

inline void relu_inplace(dvec& v) {
    for (double& x : v) x = x > 0.0 ? x : 0.0;
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

// Mirrors bilinear_sample: closed sample interval, invalid taps produce 0.
inline dvec bilinear(const dvec& src, int C, int H, int W, const std::vector<float>& gx,
                     const std::vector<float>& gy) {
    const size_t n = gx.size();
    dvec out(static_cast<size_t>(C) * n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        double xf = gx[i], yf = gy[i];
        if (!(xf >= 0 && yf >= 0 && xf <= W - 1 && yf <= H - 1)) continue;
        int x0 = std::min(static_cast<int>(xf), W - 2);
        int y0 = std::min(static_cast<int>(yf), H - 2);
        double fx = xf - x0, fy = yf - y0;
        for (int c = 0; c < C; ++c) {
            auto at = [&](int yy, int xx) {
                return src[(static_cast<size_t>(c) * H + yy) * W + xx];
            };
            out[static_cast<size_t>(c) * n + i] = (1 - fx) * (1 - fy) * at(y0, x0) +
                                                  fx * (1 - fy) * at(y0, x0 + 1) +
                                                  (1 - fx) * fy * at(y0 + 1, x0) +
                                                  fx * fy * at(y0 + 1, x0 + 1);
        }
    }
    return out;
}

inline dvec avg_pool3d(const dvec& x, int C, int D, int H, int W) {
    int Do = (D + 1) / 2, Ho = (H + 1) / 2, Wo = (W + 1) / 2;
    dvec o(static_cast<size_t>(C) * Do * Ho * Wo, 0.0);
    for (int c = 0; c < C; ++c)
        for (int od = 0; od < Do; ++od)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    int z1 = std::min(od * 2 + 2, D), y1 = std::min(oy * 2 + 2, H),
                        x1 = std::min(ox * 2 + 2, W);
                    double acc = 0.0;
                    for (int z = od * 2; z < z1; ++z)
                        for (int y = oy * 2; y < y1; ++y)
                            for (int xx = ox * 2; xx < x1; ++xx)
                                acc += x[((static_cast<size_t>(c) * D + z) * H + y) * W + xx];
                    o[((static_cast<size_t>(c) * Do + od) * Ho + oy) * Wo + ox] =
                        acc / ((z1 - od * 2) * (y1 - oy * 2) * (x1 - ox * 2));
                }
    return o;
}

inline dvec upsample3d(const dvec& x, int C, int D, int H, int W, int Do, int Ho, int Wo) {
    dvec o(static_cast<size_t>(C) * Do * Ho * Wo, 0.0);
    for (int c = 0; c < C; ++c)
        for (int od = 0; od < Do; ++od)
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox)
                    o[((static_cast<size_t>(c) * Do + od) * Ho + oy) * Wo + ox] =
                        x[((static_cast<size_t>(c) * D + od / 2) * H + oy / 2) * W + ox / 2];
    return o;
}

inline dvec concat_ch(const dvec& a, const dvec& b) {
    dvec o(a.size() + b.size());
    std::copy(a.begin(), a.end(), o.begin());
    std::copy(b.begin(), b.end(), o.begin() + static_cast<ptrdiff_t>(a.size()));
    return o;
}

// Softmax along the leading depth axis of a (D, h, w) volume.
inline dvec softmax_depth(const dvec& x, int d, int hw) {
    return ref::softmax(x, 1, d, hw);
}

}  // namespace cref

// Like max_rel_err, but scores each element against the best of the central
// and the two one-sided differences. ReLU composites need this: a probe step
// that flips a pre-activation's sign inside (x-h, x+h) poisons the central
// difference, while the difference taken on the kink-free side stays clean.
// A wrong analytic gradient still disagrees with all three estimates.
//
// The atol term absorbs float accumulation residue on elements whose true
// gradient is structurally zero (a softmax absorbs any uniform logit shift,
// so bias-like parameters can back out ~1e-7 noise instead of an exact 0).
// Differences below atol carry no signal against float-32 noise either way.
inline double robust_max_rel_err(Problem& prob, Rng& rng, double h = 1e-3, double atol = 1e-5) {
    for (Tensor& t : prob.inputs) t.node()->requires_grad = t.node()->needs_grad = true;
    Tensor y = prob.forward_float(prob.inputs);

    std::vector<float> r(static_cast<size_t>(y.numel()));
    for (auto& v : r) v = static_cast<float>(rng.normal());
    Tensor rproj = Tensor::from_data(y.shape(), r);
    Tensor loss = sum_all(mul(y, rproj));
    for (Tensor& t : prob.inputs) t.zero_grad();
    backward(loss);

    std::vector<dvec> dx;
    for (const Tensor& t : prob.inputs) dx.emplace_back(t.data(), t.data() + t.numel());
    auto eval = [&]() {
        dvec out = prob.forward_double(dx);
        double acc = 0.0;
        for (size_t i = 0; i < out.size(); ++i) acc += out[i] * r[i];
        return acc;
    };
    const double l0 = eval();

    double worst = 0.0;
    std::vector<int> which = prob.probe_inputs;
    if (which.empty())
        for (size_t i = 0; i < prob.inputs.size(); ++i) which.push_back(static_cast<int>(i));
    for (int pi : which) {
        const std::vector<float> g = prob.inputs[static_cast<size_t>(pi)].grad();
        dvec& x = dx[static_cast<size_t>(pi)];
        for (size_t j = 0; j < x.size(); ++j) {
            double keep = x[j];
            x[j] = keep + h;
            double lp = eval();
            x[j] = keep - h;
            double lm = eval();
            x[j] = keep;
            const double cands[3] = {(lp - lm) / (2.0 * h), (lp - l0) / h, (l0 - lm) / h};
            double best = 1e300;
            for (double numeric : cands) {
                double gap = std::max(0.0, std::abs(static_cast<double>(g[j]) - numeric) - atol);
                best = std::min(best, gap / std::max(std::abs(numeric), 1e-4));
            }
            worst = std::max(worst, best);
        }
    }
    return worst;
}

// Plane-sweep slice: two warped feature volumes -> pairwise-cosine cost ->
// masked pooling -> factorized regularizer -> per-ray depth distribution.
inline Case sweep_pipeline_case() {
    return {"sweep_pipeline", 1e-3, [](uint64_t seed) {
                Rng rng(seed);
                const int d = 4, h = 8, w = 8, f = 3, hs = 10, ws = 10;
                geo::Camera target = geo::Camera::look_at({0, 0, 0}, {0, 0, 1}, {0, 1, 0}, 10.0,
                                                          3.5, 3.5);
                std::vector<geo::Camera> src;
                src.push_back(geo::Camera::look_at({0.25, 0.05, 0}, {0, 0, 2}, {0, 1, 0}, 12.0,
                                                   4.5, 4.5));
                src.push_back(geo::Camera::look_at({-0.2, -0.1, 0.05}, {0, 0, 2}, {0, 1, 0}, 12.0,
                                                   4.5, 4.5));
                std::vector<float> cand = linear_depth_candidates(1.2, 3.2, d, h, w);

                auto randv = [&](int64_t k, double lo, double hi) {
                    std::vector<float> v(static_cast<size_t>(k));
                    for (float& x : v) x = static_cast<float>(rng.uniform(lo, hi));
                    return v;
                };
                // Geometry is data: capture grids and masks once. Masks depend
                // only on projection, so any feature tensor recovers them.
                std::vector<VolumeGrids> grids;
                std::vector<std::vector<float>> masks;
                Tensor probe_feat = Tensor::zeros({f, hs, ws});
                for (int j = 0; j < 2; ++j) {
                    grids.push_back(volume_grids(target, src[j], cand, d, h, w));
                    FeatureVolume v = warp_feature_volume(probe_feat, target, src[j],
                                                          cand, d, h, w);
                    masks.push_back(v.mask);
                }

                // The per-voxel cosine curves as 1 / norm^2 where a warped
                // voxel's channel vector shrinks toward zero, which finite
                // differences cannot adjudicate at any step size. Redraw the
                // features until every unmasked voxel keeps a healthy norm.
                auto min_voxel_norm = [&](const std::vector<float>& fv, int view) {
                    dvec df(fv.begin(), fv.end());
                    double lo = 1e30;
                    for (int k = 0; k < d; ++k) {
                        dvec s = cref::bilinear(df, f, hs, ws,
                                                grids[static_cast<size_t>(view)].per_depth[static_cast<size_t>(k)].x,
                                                grids[static_cast<size_t>(view)].per_depth[static_cast<size_t>(k)].y);
                        for (int i = 0; i < h * w; ++i) {
                            if (masks[static_cast<size_t>(view)][static_cast<size_t>(k) * h * w + i] == 0.0f)
                                continue;
                            double ss = 0;
                            for (int c = 0; c < f; ++c) {
                                double a = s[static_cast<size_t>(c) * h * w + i];
                                ss += a * a;
                            }
                            lo = std::min(lo, std::sqrt(ss));
                        }
                    }
                    return lo;
                };
                std::vector<float> f0v, f1v;
                for (int attempt = 0; attempt < 64; ++attempt) {
                    f0v = randv(f * hs * ws, -1, 1);
                    f1v = randv(f * hs * ws, -1, 1);
                    if (std::min(min_voxel_norm(f0v, 0), min_voxel_norm(f1v, 1)) >= 0.2) break;
                }

                ParamStore ps;
                Tensor feat0 = Tensor::param({f, hs, ws}, f0v);
                Tensor feat1 = Tensor::param({f, hs, ws}, f1v);
                Tensor pair_w = Tensor::param({1}, {0.8f});
                Tensor pool_w = Tensor::param({6, 2 * f, 1, 1, 1}, randv(6 * 2 * f, -0.4, 0.4));
                Tensor pool_b = Tensor::param({6}, randv(6, -0.1, 0.1));
                Regularizer reg = Regularizer::create(ps, "reg", {7, 6}, rng);

                Problem p;
                p.inputs = {feat0, feat1, pair_w, pool_w, pool_b,
                            reg.wa, reg.ba, reg.wb, reg.bb, reg.wh, reg.bh};
                // The head bias shifts every depth logit of a ray equally, so
                // the softmax makes its true gradient exactly zero; probe the
                // head weights instead, whose gradients carry signal.
                p.probe_inputs = {0, 1, 2, 4, 9};
                p.forward_float = [=](const std::vector<Tensor>& in) {
                    std::vector<FeatureVolume> views;
                    views.push_back(warp_feature_volume(in[0], target, src[0], cand, d, h, w));
                    views.push_back(warp_feature_volume(in[1], target, src[1], cand, d, h, w));
                    Tensor sim = cost_volume(views, in[2]);
                    Tensor pooled = pool_feature_volume(views, in[3], in[4]);
                    return reg.forward(pooled, sim, valid_counts(views));
                };
                p.forward_double = [=](const std::vector<dvec>& in) {
                    const int vox = d * h * w;
                    // Warp through the captured grids, zeroing masked voxels.
                    std::vector<dvec> vols;
                    for (int j = 0; j < 2; ++j) {
                        dvec vol(static_cast<size_t>(f) * vox, 0.0);
                        for (int k = 0; k < d; ++k) {
                            dvec s = cref::bilinear(in[static_cast<size_t>(j)], f, hs, ws,
                                                    grids[static_cast<size_t>(j)].per_depth[static_cast<size_t>(k)].x,
                                                    grids[static_cast<size_t>(j)].per_depth[static_cast<size_t>(k)].y);
                            for (int c = 0; c < f; ++c)
                                for (int i = 0; i < h * w; ++i) {
                                    size_t vat = (static_cast<size_t>(c) * d + k) * h * w + i;
                                    if (masks[static_cast<size_t>(j)][static_cast<size_t>(k) * h * w + i] != 0.0f)
                                        vol[vat] = s[static_cast<size_t>(c) * h * w + i];
                                }
                        }
                        vols.push_back(std::move(vol));
                    }
                    // Per-voxel cosine between the channel-normalized views.
                    dvec sim(static_cast<size_t>(vox), 0.0);
                    for (int i = 0; i < vox; ++i) {
                        double ss0 = 0, ss1 = 0, dot = 0;
                        for (int c = 0; c < f; ++c) {
                            double a = vols[0][static_cast<size_t>(c) * vox + i];
                            double b = vols[1][static_cast<size_t>(c) * vox + i];
                            ss0 += a * a;
                            ss1 += b * b;
                            dot += a * b;
                        }
                        double n0 = std::max(std::sqrt(ss0), 1e-8);
                        double n1 = std::max(std::sqrt(ss1), 1e-8);
                        sim[static_cast<size_t>(i)] = in[2][0] * dot / (n0 * n1);
                    }
                    // Masked mean/variance, mixed by the 1x1x1 conv.
                    dvec stats(static_cast<size_t>(2 * f) * vox, 0.0);
                    for (int i = 0; i < vox; ++i) {
                        double cnt = masks[0][static_cast<size_t>(i)] + masks[1][static_cast<size_t>(i)];
                        double inv = cnt > 0 ? 1.0 / cnt : 0.0;
                        for (int c = 0; c < f; ++c) {
                            double a = vols[0][static_cast<size_t>(c) * vox + i];
                            double b = vols[1][static_cast<size_t>(c) * vox + i];
                            double mean = (a + b) * inv;
                            stats[static_cast<size_t>(c) * vox + i] = mean;
                            stats[(static_cast<size_t>(f) + c) * vox + i] =
                                (a * a + b * b) * inv - mean * mean;
                        }
                    }
                    dvec pooled(static_cast<size_t>(6) * vox, 0.0);
                    for (int oc = 0; oc < 6; ++oc)
                        for (int i = 0; i < vox; ++i) {
                            double acc = in[4][static_cast<size_t>(oc)];
                            for (int ic = 0; ic < 2 * f; ++ic)
                                acc += in[3][static_cast<size_t>(oc) * 2 * f + ic] *
                                       stats[static_cast<size_t>(ic) * vox + i];
                            pooled[static_cast<size_t>(oc) * vox + i] = acc;
                        }
                    dvec x = cref::concat_ch(pooled, sim);
                    dvec y = ref::conv3d(x, 7, d, h, w, in[5], 6, 1, 3, 3, in[6]);
                    cref::relu_inplace(y);
                    y = ref::conv3d(y, 6, d, h, w, in[7], 6, 3, 1, 1, in[8]);
                    cref::relu_inplace(y);
                    dvec logits = ref::conv3d(y, 6, d, h, w, in[9], 1, 1, 1, 1, in[10]);
                    dvec prob = cref::softmax_depth(logits, d, h * w);
                    // Uniform fallback on rays with no valid sample.
                    for (int i = 0; i < h * w; ++i) {
                        double alive = 0.0;
                        for (int k = 0; k < d; ++k) {
                            alive += masks[0][static_cast<size_t>(k) * h * w + i] +
                                     masks[1][static_cast<size_t>(k) * h * w + i];
                        }
                        if (alive == 0.0)
                            for (int k = 0; k < d; ++k)
                                prob[static_cast<size_t>(k) * h * w + i] = 1.0 / d;
                    }
                    return prob;
                };
                Rng prng(seed ^ 0x5eedF00dULL);
                return robust_max_rel_err(p, prng, 1e-4);
            }};
}

// Four-level 3D U-Net over a (4, 4, 8, 8) pair volume.
inline Case consistency_unet_case() {
    return {"consistency_unet", 1e-3, [](uint64_t seed) {
                Rng rng(seed);
                const int d = 4, h = 8, w = 8;
                Unet3dConfig cfg;
                cfg.in_channels = 4;
                cfg.base = 4;
                cfg.cue_channels = 6;
                ParamStore ps;
                Unet3d net = Unet3d::create(ps, "unet", cfg, rng);
                std::vector<float> xv(static_cast<size_t>(4 * d * h * w));
                for (float& v : xv) v = static_cast<float>(rng.uniform(-1, 1));
                Tensor x = Tensor::param({4, d, h, w}, xv);

                Problem p;
                p.inputs = {x,       net.we0, net.be0, net.we1, net.be1, net.we2,
                            net.be2, net.we3, net.be3, net.wd2, net.bd2, net.wd1,
                            net.bd1, net.wd0, net.bd0, net.wh,  net.bh};
                p.probe_inputs = {0, 2, 16};
                p.forward_float = [net](const std::vector<Tensor>& in) { return net.forward(in[0]); };
                p.forward_double = [=](const std::vector<dvec>& in) {
                    const int c0 = cfg.base, c1 = cfg.base + 2, c2 = cfg.base + 4, c3 = cfg.base + 6;
                    auto block = [&](const dvec& v, int cin, int dd, int hh, int ww, const dvec& wt,
                                     int cout, const dvec& bias) {
                        dvec o = ref::conv3d(v, cin, dd, hh, ww, wt, cout, 3, 3, 3, bias);
                        cref::relu_inplace(o);
                        return o;
                    };
                    dvec e0 = block(in[0], 4, d, h, w, in[1], c0, in[2]);
                    dvec p0 = cref::avg_pool3d(e0, c0, d, h, w);
                    dvec e1 = block(p0, c0, 2, 4, 4, in[3], c1, in[4]);
                    dvec p1 = cref::avg_pool3d(e1, c1, 2, 4, 4);
                    dvec e2 = block(p1, c1, 1, 2, 2, in[5], c2, in[6]);
                    dvec p2 = cref::avg_pool3d(e2, c2, 1, 2, 2);
                    dvec e3 = block(p2, c2, 1, 1, 1, in[7], c3, in[8]);
                    dvec d2 = block(cref::concat_ch(cref::upsample3d(e3, c3, 1, 1, 1, 1, 2, 2), e2),
                                    c3 + c2, 1, 2, 2, in[9], c2, in[10]);
                    dvec d1 = block(cref::concat_ch(cref::upsample3d(d2, c2, 1, 2, 2, 2, 4, 4), e1),
                                    c2 + c1, 2, 4, 4, in[11], c1, in[12]);
                    dvec d0 = block(cref::concat_ch(cref::upsample3d(d1, c1, 2, 4, 4, d, h, w), e0),
                                    c1 + c0, d, h, w, in[13], c0, in[14]);
                    return ref::conv3d(d0, c0, d, h, w, in[15], cfg.cue_channels, 1, 1, 1, in[16]);
                };
                Rng prng(seed ^ 0xA11CE5ULL);
                return robust_max_rel_err(p, prng, 1e-4);
            }};
}

// Depth-wise attention refinement of a sweep distribution.
inline Case depth_attention_case() {
    return {"depth_attention", 1e-3, [](uint64_t seed) {
                Rng rng(seed);
                const int d = 4, h = 2, w = 2, rays = h * w;
                DepthRefinerConfig cfg;
                cfg.cue_channels = 3;
                cfg.key_dim = 3;
                cfg.value_dim = 2;
                ParamStore ps;
                DepthRefiner r = DepthRefiner::create(ps, "refine", cfg, rng);
                // The output head ships zero-initialized; randomize it so
                // gradients actually cross the attention block.
                for (int64_t i = 0; i < r.wo.numel(); ++i)
                    r.wo.mut_data()[i] = static_cast<float>(rng.uniform(-0.5, 0.5));
                r.bo.mut_data()[0] = static_cast<float>(rng.uniform(-0.2, 0.2));

                std::vector<float> fv(static_cast<size_t>(cfg.cue_channels) * d * h * w);
                for (float& v : fv) v = static_cast<float>(rng.uniform(-1, 1));
                std::vector<float> pv(static_cast<size_t>(d) * h * w);
                for (float& v : pv) v = static_cast<float>(rng.uniform(0.1, 1.0));
                Tensor fused = Tensor::param({cfg.cue_channels, d, h, w}, fv);
                Tensor prob = Tensor::param({d, h, w}, pv);
                std::vector<float> codef = depth_position_code(d, h, w).vec();

                Problem p;
                p.inputs = {fused, prob, r.wq, r.wk, r.wvv, r.wo, r.bo};
                p.forward_float = [r](const std::vector<Tensor>& in) { return r.forward(in[0], in[1]); };
                p.forward_double = [=](const std::vector<dvec>& in) {
                    const int cq = cfg.cue_channels + 4;
                    const int vox = d * h * w;
                    auto code = [&](int c, int i) { return static_cast<double>(codef[static_cast<size_t>(c) * vox + i]); };
                    // 1x1x1 projections.
                    auto qin = [&](int c, int i) {
                        return c < cfg.cue_channels ? in[0][static_cast<size_t>(c) * vox + i]
                                                    : code(c - cfg.cue_channels, i);
                    };
                    auto kin = [&](int c, int i) {
                        return c == 0 ? in[1][static_cast<size_t>(i)] : code(c - 1, i);
                    };
                    dvec out(static_cast<size_t>(vox), 0.0);
                    for (int ray = 0; ray < rays; ++ray) {
                        double attn[4];
                        double q[4][3], k[4][3], v[4][2];
                        for (int i = 0; i < d; ++i) {
                            int at = i * rays + ray;
                            for (int o = 0; o < cfg.key_dim; ++o) {
                                double aq = 0, ak = 0;
                                for (int c = 0; c < cq; ++c) aq += in[2][static_cast<size_t>(o) * cq + c] * qin(c, at);
                                for (int c = 0; c < 5; ++c) ak += in[3][static_cast<size_t>(o) * 5 + c] * kin(c, at);
                                q[i][o] = aq;
                                k[i][o] = ak;
                            }
                            for (int o = 0; o < cfg.value_dim; ++o) {
                                double av = 0;
                                for (int c = 0; c < 5; ++c) av += in[4][static_cast<size_t>(o) * 5 + c] * kin(c, at);
                                v[i][o] = av;
                            }
                        }
                        const double scl = 1.0 / std::sqrt(static_cast<double>(cfg.key_dim));
                        for (int i = 0; i < d; ++i) {
                            double s[4], mx = -1e300;
                            for (int j = 0; j < d; ++j) {
                                double acc = 0;
                                for (int o = 0; o < cfg.key_dim; ++o) acc += q[i][o] * k[j][o];
                                s[j] = acc * scl;
                                mx = std::max(mx, s[j]);
                            }
                            double zs = 0;
                            for (int j = 0; j < d; ++j) {
                                s[j] = std::exp(s[j] - mx);
                                zs += s[j];
                            }
                            double ctx[2] = {0, 0};
                            for (int j = 0; j < d; ++j)
                                for (int o = 0; o < cfg.value_dim; ++o) ctx[o] += s[j] / zs * v[j][o];
                            double a = in[6][0];
                            for (int o = 0; o < cfg.value_dim; ++o) a += ctx[o] * in[5][static_cast<size_t>(o)];
                            attn[i] = a;
                        }
                        double logits[4], mx = -1e300;
                        for (int i = 0; i < d; ++i) {
                            logits[i] = std::log(in[1][static_cast<size_t>(i * rays + ray)] +
                                                 static_cast<double>(kRefineEps)) + attn[i];
                            mx = std::max(mx, logits[i]);
                        }
                        double zs = 0;
                        for (int i = 0; i < d; ++i) {
                            logits[i] = std::exp(logits[i] - mx);
                            zs += logits[i];
                        }
                        for (int i = 0; i < d; ++i) out[static_cast<size_t>(i * rays + ray)] = logits[i] / zs;
                    }
                    return out;
                };
                Rng prng(seed ^ 0xBEEF11ULL);
                return max_rel_err(p, prng);
            }};
}

// Head activations, depth expectation, and Gaussian placement.
inline Case gaussian_heads_case() {
    return {"gaussian_heads", 1e-3, [](uint64_t seed) {
                Rng rng(seed);
                const int h = 4, w = 4, d = 4, n = h * w;
                geo::Camera cam = geo::Camera::look_at({0, 0, 0}, {0, 0, 1}, {0, 1, 0}, 12.0, 1.5,
                                                       1.5);
                std::vector<float> cand = linear_depth_candidates(1.0, 3.0, d, h, w);
                std::vector<float> rv(static_cast<size_t>(n), 1.0f);
                rv[5] = 0.0f;

                std::vector<float> rawv(static_cast<size_t>(11) * n);
                for (float& v : rawv) v = static_cast<float>(rng.uniform(-1.5, 1.5));
                std::vector<float> pv(static_cast<size_t>(d) * n);
                for (float& v : pv) v = static_cast<float>(rng.uniform(0.1, 1.0));
                Tensor raw = Tensor::param({11, h, w}, rawv);
                Tensor prob = Tensor::param({d, h, w}, pv);

                Problem p;
                p.inputs = {raw, prob};
                p.forward_float = [=](const std::vector<Tensor>& in) {
                    GaussianParams gp = gaussian_activations(in[0]);
                    Tensor depth = expected_depth(in[1], cand);
                    GaussianSet set = build_gaussians(cam, gp, depth, rv);
                    return concat({reshape(set.pos, {3 * n}), reshape(set.color, {3 * n}),
                                   set.opacity, reshape(set.scale, {3 * n}),
                                   reshape(set.quat, {4 * n})},
                                  0);
                };
                // Constants below repeat the float path's data preparation
                // (ray directions and 1/focal are cast through float there).
                std::vector<double> rays(static_cast<size_t>(3) * n);
                Eigen::Vector3d origin = cam.center();
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        Eigen::Vector3d dir = cam.ray_dir(Eigen::Vector2d(x, y));
                        for (int c = 0; c < 3; ++c)
                            rays[static_cast<size_t>(c) * n + y * w + x] =
                                static_cast<double>(static_cast<float>(dir[c]));
                    }
                double orig[3] = {static_cast<double>(static_cast<float>(origin.x())),
                                  static_cast<double>(static_cast<float>(origin.y())),
                                  static_cast<double>(static_cast<float>(origin.z()))};
                const double inv_f = static_cast<double>(static_cast<float>(1.0 / cam.K()(0, 0)));
                p.forward_double = [=](const std::vector<dvec>& in) {
                    dvec out;
                    out.reserve(static_cast<size_t>(14) * n);
                    dvec depth(static_cast<size_t>(n), 0.0);
                    for (int i = 0; i < n; ++i) {
                        for (int k = 0; k < d; ++k)
                            depth[static_cast<size_t>(i)] += in[1][static_cast<size_t>(k) * n + i] *
                                                             cand[static_cast<size_t>(k) * n + i];
                    }
                    for (int c = 0; c < 3; ++c)
                        for (int i = 0; i < n; ++i)
                            out.push_back(rays[static_cast<size_t>(c) * n + i] * depth[static_cast<size_t>(i)] +
                                          orig[c]);
                    for (int c = 0; c < 3; ++c)
                        for (int i = 0; i < n; ++i)
                            out.push_back(cref::sigmoid(in[0][static_cast<size_t>(c) * n + i]));
                    for (int i = 0; i < n; ++i)
                        out.push_back(cref::sigmoid(in[0][static_cast<size_t>(3) * n + i]) * rv[static_cast<size_t>(i)]);
                    for (int c = 0; c < 3; ++c)
                        for (int i = 0; i < n; ++i)
                            out.push_back((cref::softplus(in[0][(static_cast<size_t>(4) + c) * n + i]) +
                                           static_cast<double>(kScaleFloor)) *
                                          depth[static_cast<size_t>(i)] * inv_f);
                    const size_t qbase = out.size();
                    out.resize(qbase + static_cast<size_t>(4) * n, 0.0);
                    for (int i = 0; i < n; ++i) {
                        double qv[4], ss = 0;
                        for (int c = 0; c < 4; ++c) {
                            qv[c] = in[0][(static_cast<size_t>(7) + c) * n + i] + (c == 0 ? 1.0 : 0.0);
                            ss += qv[c] * qv[c];
                        }
                        double inv = 1.0 / std::max(std::sqrt(ss), 1e-8);
                        for (int c = 0; c < 4; ++c)
                            out[qbase + static_cast<size_t>(c) * n + i] = qv[c] * inv;
                    }
                    return out;
                };
                Rng prng(seed ^ 0xFEED99ULL);
                return max_rel_err(p, prng);
            }};
}

// End-to-end rasterizer: gradient of an image L1 loss on a 5-splat 16x16
// scene versus finite differences of the double-precision reference.
inline Case rasterizer_case() {
    return {"rasterizer", 1e-2, [](uint64_t seed) {
                Rng rng(seed);
                const int wpx = 16, hpx = 16, ns = 5;
                geo::Camera cam = geo::Camera::look_at({0, 0, 0}, {0, 0, 1}, {0, 1, 0}, 20.0, 7.5,
                                                       7.5);
                // Footprints span the image and opacities stay moderate, so
                // every pixel sits inside the cutoff branches.
                std::vector<float> pos(3 * ns), col(3 * ns), opa(ns), scl(3 * ns), qua(4 * ns);
                Eigen::Vector3d c0 = cam.center();
                for (int i = 0; i < ns; ++i) {
                    Eigen::Vector3d pt = c0 + rng.uniform(1.8, 2.6) *
                                                  cam.ray_dir({rng.uniform(4.0, 12.0),
                                                               rng.uniform(4.0, 12.0)});
                    for (int c = 0; c < 3; ++c) pos[static_cast<size_t>(c * ns + i)] = static_cast<float>(pt[c]);
                    for (int c = 0; c < 3; ++c) col[static_cast<size_t>(c * ns + i)] = static_cast<float>(rng.uniform());
                    opa[static_cast<size_t>(i)] = static_cast<float>(rng.uniform(0.2, 0.5));
                    for (int c = 0; c < 3; ++c)
                        scl[static_cast<size_t>(c * ns + i)] = static_cast<float>(rng.uniform(0.6, 0.8));
                    double qv[4], norm = 0;
                    for (double& x : qv) {
                        x = rng.normal();
                        norm += x * x;
                    }
                    norm = std::sqrt(norm);
                    for (int c = 0; c < 4; ++c) qua[static_cast<size_t>(c * ns + i)] = static_cast<float>(qv[c] / norm);
                }
                Tensor tpos = Tensor::param({3, ns}, pos);
                Tensor tcol = Tensor::param({3, ns}, col);
                Tensor topa = Tensor::param({ns}, opa);
                Tensor tscl = Tensor::param({3, ns}, scl);
                Tensor tqua = Tensor::param({4, ns}, qua);
                const float bg[3] = {0.2f, 0.4f, 0.6f};
                const double bgd[3] = {0.2f, 0.4f, 0.6f};

                // L1 target above the attainable range keeps |.| smooth.
                std::vector<float> tv(static_cast<size_t>(3 * hpx * wpx));
                for (float& v : tv) v = static_cast<float>(rng.uniform(1.5, 2.5));
                Tensor target = Tensor::from_data({3, hpx, wpx}, tv);

                Tensor img = rasterize_gaussians(tpos, tcol, topa, tscl, tqua, cam, wpx, hpx, bg);
                Tensor loss = sum_all(abs(sub(slice(img, 0, 0, 3), target)));
                backward(loss);

                std::vector<dvec> dx = {dvec(pos.begin(), pos.end()), dvec(col.begin(), col.end()),
                                        dvec(opa.begin(), opa.end()), dvec(scl.begin(), scl.end()),
                                        dvec(qua.begin(), qua.end())};
                auto eval = [&]() {
                    std::vector<double> out = reference_render(dx[0], dx[1], dx[2], dx[3], dx[4],
                                                               cam, wpx, hpx, bgd);
                    double acc = 0.0;
                    for (size_t i = 0; i < tv.size(); ++i)
                        acc += std::abs(out[i] - static_cast<double>(tv[i]));
                    return acc;
                };
                const Tensor* tens[5] = {&tpos, &tcol, &topa, &tscl, &tqua};
                double worst = 0.0;
                const double step = 1e-3;
                for (int ti = 0; ti < 5; ++ti) {
                    std::vector<float> g = tens[ti]->grad();
                    for (size_t j = 0; j < dx[static_cast<size_t>(ti)].size(); ++j) {
                        double keep = dx[static_cast<size_t>(ti)][j];
                        dx[static_cast<size_t>(ti)][j] = keep + step;
                        double lp = eval();
                        dx[static_cast<size_t>(ti)][j] = keep - step;
                        double lm = eval();
                        dx[static_cast<size_t>(ti)][j] = keep;
                        double numeric = (lp - lm) / (2.0 * step);
                        double err = std::abs(static_cast<double>(g[j]) - numeric) /
                                     std::max(std::abs(numeric), 1e-4);
                        worst = std::max(worst, err);
                    }
                }
                return worst;
            }};
}

inline std::vector<Case> composite_cases() {
    return {sweep_pipeline_case(), consistency_unet_case(), depth_attention_case(),
            gaussian_heads_case(), rasterizer_case()};
}

// The full registry behind the gradient-check command.
inline std::vector<Case> all_cases() {
    std::vector<Case> cases = primitive_cases();
    std::vector<Case> comp = composite_cases();
    cases.insert(cases.end(), comp.begin(), comp.end());
    return cases;
}

}  // namespace mugs::gradcheck
