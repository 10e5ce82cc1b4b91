#pragma once

// Full feed-forward novel-view model. Two depth levels share the image
// encoders: the coarse level sweeps isometric candidates over the scene's
// depth range on the quarter-resolution grid, the fine level re-sweeps
// candidates resampled from the coarse distribution on the half-resolution
// grid. Each level regresses a depth probability volume from multi-view
// matching, optionally sharpens it with monocular-consistency attention,
// and decodes pixel-aligned gaussians that the tile splatter renders.

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mugs/core/checkpoint.hpp"
#include "mugs/core/rng.hpp"
#include "mugs/fusion/project_sample.hpp"
#include "mugs/fusion/refine.hpp"
#include "mugs/fusion/unet3d.hpp"
#include "mugs/gauss/heads.hpp"
#include "mugs/io/dataset.hpp"
#include "mugs/scene/mde.hpp"
#include "mugs/splat/rasterizer.hpp"
#include "mugs/sweep/encoder.hpp"
#include "mugs/sweep/regularizer.hpp"
#include "mugs/sweep/volume.hpp"

namespace mugs {

// Inverse-CDF resampling: treats a coarse ray's depth probabilities as a
// piecewise-uniform density over D equal bins of [zmin, zmax] and places the
// fine candidates at the quantile midpoints, so they concentrate where the
// coarse stage put mass while always staying inside the range. Each fine ray
// reads the enclosing coarse ray; outputs are per-ray nondecreasing. The
// probabilities are consumed as plain values: candidate placement is a
// sampling decision, not a differentiable path.
inline std::vector<float> resample_candidates(const Tensor& prob, double zmin, double zmax,
                                               int d_fine, int h, int w) {
    const Shape& s = prob.shape();
    if (s.size() != 3) throw ValueError("resample_candidates: prob must be (D, hc, wc)");
    const int dc = s[0], hc = s[1], wc = s[2];
    if (d_fine < 1 || h < 1 || w < 1) throw ValueError("resample_candidates: empty output grid");
    if (!(zmax > zmin)) throw ValueError("resample_candidates: need zmax > zmin");
    const float* p = prob.data();
    const double step = (zmax - zmin) / dc;
    std::vector<float> out(static_cast<size_t>(d_fine) * h * w);
    std::vector<double> cum(dc);
    for (int y = 0; y < h; ++y) {
        const int yc = std::min(y * hc / h, hc - 1);
        for (int x = 0; x < w; ++x) {
            const int xc = std::min(x * wc / w, wc - 1);
            double total = 0.0;
            for (int k = 0; k < dc; ++k) {
                total += std::max(0.0, static_cast<double>(p[(static_cast<size_t>(k) * hc + yc) * wc + xc]));
                cum[k] = total;
            }
            for (int i = 0; i < d_fine; ++i) {
                double z;
                if (total <= 0.0) {
                    z = zmin + (i + 0.5) * (zmax - zmin) / d_fine;  // dead ray: uniform spread
                } else {
                    const double u = (i + 0.5) / d_fine * total;
                    int k = static_cast<int>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
                    if (k >= dc) k = dc - 1;
                    const double lo = k > 0 ? cum[k - 1] : 0.0;
                    const double mass = cum[k] - lo;
                    const double frac = mass > 0.0 ? (u - lo) / mass : 0.5;
                    z = zmin + (k + frac) * step;
                }
                out[(static_cast<size_t>(i) * h + y) * w + x] =
                    static_cast<float>(std::min(std::max(z, zmin), zmax));
            }
        }
    }
    return out;
}

// Lightweight encoder over the normalized monocular depth stub. Produces
// per-view features on the same half/quarter grids as the image encoder so
// they concatenate into the head feature volume.
struct MonoEncoderConfig {
    int hidden = 8;
    int out_channels = 8;
};

struct MonoEncoder {
    MonoEncoderConfig cfg;
    Tensor w1, b1, w2, b2, wf, bf, w3, b3, w4, b4;

    static MonoEncoder create(ParamStore& ps, const std::string& prefix,
                              const MonoEncoderConfig& cfg, Rng& rng) {
        MonoEncoder m;
        m.cfg = cfg;
        m.w1 = detail::conv_weight(ps, prefix + ".conv1.w", cfg.hidden, 1, 3, 3, rng);
        m.b1 = detail::conv_bias(ps, prefix + ".conv1.b", cfg.hidden);
        m.w2 = detail::conv_weight(ps, prefix + ".down1.w", cfg.hidden, cfg.hidden, 2, 2, rng);
        m.b2 = detail::conv_bias(ps, prefix + ".down1.b", cfg.hidden);
        m.wf = detail::conv_weight(ps, prefix + ".fine.w", cfg.out_channels, cfg.hidden, 1, 1, rng);
        m.bf = detail::conv_bias(ps, prefix + ".fine.b", cfg.out_channels);
        m.w3 = detail::conv_weight(ps, prefix + ".down2.w", cfg.hidden, cfg.hidden, 2, 2, rng);
        m.b3 = detail::conv_bias(ps, prefix + ".down2.b", cfg.hidden);
        m.w4 = detail::conv_weight(ps, prefix + ".coarse.w", cfg.out_channels, cfg.hidden, 3, 3, rng);
        m.b4 = detail::conv_bias(ps, prefix + ".coarse.b", cfg.out_channels);
        return m;
    }

    struct Features {
        Tensor fine;    // (out_channels, h/2, w/2)
        Tensor coarse;  // (out_channels, h/4, w/4)
    };

    // depth: raw stub map (h*w). Entries are normalized to d / median - 1 so
    // the features see relative structure; non-positive entries become 0.
    Features forward(const std::vector<float>& depth, int h, int w) const {
        if (depth.size() != static_cast<size_t>(h) * w)
            throw ValueError("MonoEncoder::forward: depth size mismatch");
        const double med = median_positive(depth);
        std::vector<float> norm(depth.size(), 0.0f);
        if (med > 0.0) {
            for (size_t i = 0; i < depth.size(); ++i)
                if (depth[i] > 0.0f) norm[i] = static_cast<float>(depth[i] / med - 1.0);
        }
        Tensor in = Tensor::from_data({1, h, w}, std::move(norm));
        Tensor x1 = relu(conv2d(in, w1, b1));        // (hidden, h, w)
        Tensor x2 = relu(conv2d(x1, w2, b2, 2, 0));  // (hidden, h/2, w/2)
        Features f;
        f.fine = conv2d(x2, wf, bf);
        Tensor x3 = relu(conv2d(x2, w3, b3, 2, 0));  // (hidden, h/4, w/4)
        f.coarse = conv2d(x3, w4, b4);
        return f;
    }
};

struct ModelConfig {
    int n_sources = 2;
    int d_coarse = 64;
    int d_fine = 16;
    bool use_mono = true;    // concatenate monocular features into the head volume
    bool use_refine = true;  // consistency-cue attention over the depth axis
    EncoderConfig encoder;
    MonoEncoderConfig mono;
    int pooled_reg_channels = 6;    // pooled matching features feeding the regularizer
    int pooled_head_channels = 16;  // pooled features feeding the gaussian head
    int reg_width = 6;
    Unet3dConfig unet;  // consistency cue extractor (in_channels must stay 4)
    DepthRefinerConfig refiner;
    GaussianHeadConfig head;  // in_channels is derived from pooled_head_channels
};

// One level's prediction plus its renders at supervision resolution.
struct LevelOutput {
    int h = 0, w = 0;                   // feature/gaussian grid size
    int render_w = 0, render_h = 0;     // supervision render size
    std::vector<float> cand;            // (d*h*w) depth candidates used
    Tensor prob;                        // (d, h, w) final probability volume
    Tensor depth;                       // (h, w) expected depth along each ray
    std::vector<float> ray_valid;       // 1 where any source saw the ray
    GaussianSet gaussians;
    RenderOutput target;                // novel-view render
    std::vector<RenderOutput> sources;  // re-rendered source views (optional)
};

struct PipelineOutput {
    std::vector<LevelOutput> levels;  // [coarse] or [coarse, fine]
};

struct MugsModel {
    ModelConfig cfg;
    ParamStore params;
    Encoder encoder;
    MonoEncoder mono;

    struct Level {
        int d = 0;
        int feat_down = 0;    // image-to-feature-grid downscale
        int render_down = 0;  // image-to-supervision-render downscale
        int mvs_channels = 0;
        Tensor pair_w;
        Tensor pool_reg_w, pool_reg_b;
        Tensor pool_head_w, pool_head_b;
        Regularizer reg;
        Unet3d unet;
        CueAggregator agg;
        DepthRefiner refiner;
        GaussianHead head;
    };
    Level levels[2];  // [0] coarse quarter-res, [1] fine half-res

    static MugsModel create(const ModelConfig& cfg, uint64_t seed) {
        if (cfg.n_sources < 2) throw ValueError("MugsModel: need at least two source views");
        if (cfg.unet.in_channels != 4)
            throw ValueError("MugsModel: the consistency cue volume has four channels");
        MugsModel m;
        m.cfg = cfg;
        Rng rng(seed);
        m.encoder = Encoder::create(m.params, "encoder", cfg.encoder, rng);
        if (cfg.use_mono) m.mono = MonoEncoder::create(m.params, "mono", cfg.mono, rng);
        const int npairs = cfg.n_sources * (cfg.n_sources - 1) / 2;
        for (int lv = 0; lv < 2; ++lv) {
            Level& L = m.levels[lv];
            const std::string p = lv == 0 ? "coarse" : "fine";
            L.d = lv == 0 ? cfg.d_coarse : cfg.d_fine;
            L.feat_down = lv == 0 ? 4 : 2;
            L.render_down = lv == 0 ? 2 : 1;
            L.mvs_channels = lv == 0 ? cfg.encoder.coarse_channels : cfg.encoder.fine_channels;
            L.pair_w = Tensor::param({npairs},
                                     std::vector<float>(npairs, 1.0f / static_cast<float>(npairs)));
            m.params.add(p + ".pair_w", L.pair_w);
            const int reg_in = 2 * L.mvs_channels;  // masked mean and variance
            L.pool_reg_w = detail::conv_weight3d(m.params, p + ".pool_reg.w",
                                                 cfg.pooled_reg_channels, reg_in, 1, 1, 1, rng);
            L.pool_reg_b = detail::conv_bias(m.params, p + ".pool_reg.b", cfg.pooled_reg_channels);
            const int head_in =
                2 * (L.mvs_channels + (cfg.use_mono ? cfg.mono.out_channels : 0));
            L.pool_head_w = detail::conv_weight3d(m.params, p + ".pool_head.w",
                                                  cfg.pooled_head_channels, head_in, 1, 1, 1, rng);
            L.pool_head_b = detail::conv_bias(m.params, p + ".pool_head.b",
                                              cfg.pooled_head_channels);
            RegularizerConfig rc;
            rc.in_channels = cfg.pooled_reg_channels + 1;  // pooled features + matching score
            rc.width = cfg.reg_width;
            L.reg = Regularizer::create(m.params, p + ".reg", rc, rng);
            if (cfg.use_refine) {
                L.unet = Unet3d::create(m.params, p + ".unet", cfg.unet, rng);
                L.agg = CueAggregator::create(m.params, p + ".agg", cfg.unet.cue_channels);
                DepthRefinerConfig dc = cfg.refiner;
                dc.cue_channels = cfg.unet.cue_channels;
                L.refiner = DepthRefiner::create(m.params, p + ".refine", dc, rng);
            }
            GaussianHeadConfig gc = cfg.head;
            gc.in_channels = cfg.pooled_head_channels;
            L.head = GaussianHead::create(m.params, p + ".head", gc, rng);
        }
        return m;
    }

    // Runs the pipeline on one sample. `coarse_only` restricts to the first
    // level (the early training phase); `render_sources` additionally
    // re-renders each source view for reference supervision or evaluation.
    PipelineOutput forward_scene(const SceneSample& s, bool coarse_only,
                                 bool render_sources) const {
        if (s.n_sources != cfg.n_sources)
            throw ValueError("forward_scene: model was built for a different source count");
        if (s.width % 4 != 0 || s.height % 4 != 0)
            throw ValueError("forward_scene: image size must be divisible by 4");
        const int tgt = s.target_index();
        std::vector<Encoder::Features> img_feat;
        std::vector<MonoEncoder::Features> mono_feat;
        for (int i = 0; i < s.n_sources; ++i) {
            img_feat.push_back(encoder.forward(s.images[i]));
            if (cfg.use_mono) mono_feat.push_back(mono.forward(s.mde[i], s.height, s.width));
        }
        PipelineOutput out;
        const float bg[3] = {0.0f, 0.0f, 0.0f};
        const int n_levels = coarse_only ? 1 : 2;
        for (int lv = 0; lv < n_levels; ++lv) {
            const Level& L = levels[lv];
            const int h = s.height / L.feat_down;
            const int w = s.width / L.feat_down;
            std::vector<float> cand =
                lv == 0 ? linear_depth_candidates(s.depth_min, s.depth_max, L.d, h, w)
                        : resample_candidates(out.levels[0].prob, s.depth_min, s.depth_max, L.d,
                                              h, w);
            const geo::Camera feat_cam = s.cameras[tgt].downscaled(L.feat_down);
            std::vector<FeatureVolume> mvs_views;   // matching features only
            std::vector<FeatureVolume> head_views;  // matching + monocular features
            for (int i = 0; i < s.n_sources; ++i) {
                const Tensor& f = lv == 0 ? img_feat[i].coarse : img_feat[i].fine;
                const geo::Camera src_cam = s.cameras[i].downscaled(L.feat_down);
                if (cfg.use_mono) {
                    const Tensor& mf = lv == 0 ? mono_feat[i].coarse : mono_feat[i].fine;
                    FeatureVolume full = warp_feature_volume(concat({f, mf}, 0), feat_cam,
                                                             src_cam, cand, L.d, h, w);
                    mvs_views.push_back(FeatureVolume{slice(full.vol, 0, 0, L.mvs_channels),
                                                      full.mask, full.src_depth});
                    head_views.push_back(std::move(full));
                } else {
                    FeatureVolume v = warp_feature_volume(f, feat_cam, src_cam, cand, L.d, h, w);
                    mvs_views.push_back(v);
                    head_views.push_back(std::move(v));
                }
            }
            Tensor sim = cost_volume(mvs_views, L.pair_w);
            std::vector<float> counts = valid_counts(mvs_views);
            Tensor pooled_reg = pool_feature_volume(mvs_views, L.pool_reg_w, L.pool_reg_b);
            Tensor prob = L.reg.forward(pooled_reg, sim, counts);
            if (cfg.use_refine) {
                std::vector<Tensor> cues;
                for (int i = 0; i < s.n_sources; ++i) {
                    Tensor mde_map = Tensor::from_data({s.height, s.width},
                                                       std::vector<float>(s.mde[i]));
                    Tensor pair = depth_pair_volume(feat_cam, s.cameras[i], mde_map, cand, L.d,
                                                    h, w);
                    cues.push_back(L.unet.forward(pair));
                }
                prob = L.refiner.forward(L.agg.forward(cues), prob);
            }
            Tensor depth = expected_depth(prob, cand);
            Tensor pooled_head = pool_feature_volume(head_views, L.pool_head_w, L.pool_head_b);
            GaussianParams gp = L.head.predict(expected_feature(pooled_head, prob));
            std::vector<float> ray_valid(static_cast<size_t>(h) * w, 0.0f);
            for (int k = 0; k < L.d; ++k)
                for (size_t i = 0; i < ray_valid.size(); ++i)
                    if (counts[static_cast<size_t>(k) * h * w + i] > 0.0f) ray_valid[i] = 1.0f;
            GaussianSet g = build_gaussians(feat_cam, gp, depth, ray_valid);

            LevelOutput lo;
            lo.h = h;
            lo.w = w;
            lo.render_w = s.width / L.render_down;
            lo.render_h = s.height / L.render_down;
            lo.cand = std::move(cand);
            lo.prob = prob;
            lo.depth = depth;
            lo.ray_valid = std::move(ray_valid);
            lo.target = render_gaussians(g.pos, g.color, g.opacity, g.scale, g.quat,
                                         s.cameras[tgt].downscaled(L.render_down), lo.render_w,
                                         lo.render_h, bg);
            if (render_sources) {
                for (int i = 0; i < s.n_sources; ++i)
                    lo.sources.push_back(render_gaussians(
                        g.pos, g.color, g.opacity, g.scale, g.quat,
                        s.cameras[i].downscaled(L.render_down), lo.render_w, lo.render_h, bg));
            }
            lo.gaussians = std::move(g);
            out.levels.push_back(std::move(lo));
        }
        return out;
    }
};

}  // namespace mugs
