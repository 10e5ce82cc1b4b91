#pragma once

// Held-out evaluation: novel-view photometric quality at full resolution,
// per-level depth quality on the matching feature grids, and reference-view
// quality from re-rendered source cameras.

#include <string>
#include <vector>

#include "mugs/train/metrics.hpp"
#include "mugs/train/model.hpp"

namespace mugs {

// Nearest full-resolution sample of a depth map at each feature-grid center.
// A cell at grid index o covers full-res pixels [k*o, k*o + k); its center in
// full-res coordinates is k*o + (k-1)/2, rounded to the nearest pixel.
inline std::vector<float> sample_grid_depth(const std::vector<float>& full, int width, int height,
                                            int k) {
    if (full.size() != static_cast<size_t>(width) * height)
        throw ValueError("sample_grid_depth: size mismatch");
    if (k < 1 || width % k != 0 || height % k != 0)
        throw ValueError("sample_grid_depth: factor must divide the image size");
    const int h = height / k;
    const int w = width / k;
    const int off = k / 2;  // nearest pixel to the cell center (k-1)/2
    std::vector<float> out(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out[static_cast<size_t>(y) * w + x] = full[(static_cast<size_t>(y) * k + off) * width +
                                                       (static_cast<size_t>(x) * k + off)];
    return out;
}

struct SceneEval {
    double psnr = 0.0;   // novel view, fine render vs ground truth at full res
    double ssim = 0.0;
    metrics::DepthMetrics depth_fine;       // expected depth on the half-res grid
    metrics::DepthMetrics depth_coarse;     // expected depth on the quarter-res grid
    metrics::DepthMetrics depth_reference;  // splatted depth at source views (averaged)
    double reference_psnr = 0.0;            // re-rendered source views vs their images
};

inline SceneEval evaluate_scene(const MugsModel& model, const SceneSample& s) {
    PipelineOutput out = model.forward_scene(s, false, true);
    const int tgt = s.target_index();
    const LevelOutput& coarse = out.levels[0];
    const LevelOutput& fine = out.levels[1];
    SceneEval e;
    e.psnr = metrics::psnr(fine.target.rgb.vec(), s.images[tgt].vec());
    e.ssim = metrics::ssim(fine.target.rgb.vec(), s.images[tgt].vec(), 3, s.height, s.width);
    e.depth_fine = metrics::depth_metrics(fine.depth.vec(),
                                          sample_grid_depth(s.gt_depth[tgt], s.width, s.height, 2));
    e.depth_coarse = metrics::depth_metrics(
        coarse.depth.vec(), sample_grid_depth(s.gt_depth[tgt], s.width, s.height, 4));
    double rp = 0.0;
    metrics::DepthMetrics ref;
    for (int i = 0; i < s.n_sources; ++i) {
        rp += metrics::psnr(fine.sources[i].rgb.vec(), s.images[i].vec());
        metrics::DepthMetrics dm = metrics::depth_metrics(fine.sources[i].depth.vec(),
                                                          s.gt_depth[i]);
        ref.abs_err += dm.abs_err;
        ref.acc_2 += dm.acc_2;
        ref.acc_10 += dm.acc_10;
        ref.valid += dm.valid;
    }
    e.reference_psnr = rp / s.n_sources;
    ref.abs_err /= s.n_sources;
    ref.acc_2 /= s.n_sources;
    ref.acc_10 /= s.n_sources;
    e.depth_reference = ref;
    return e;
}

// Projection-and-sampling consistency on the true surface: build a single
// candidate plane out of the target view's ground-truth depth, use the source
// view's ground-truth depth as the monocular map, and compare each
// candidate's source-frame depth (d_p) with the depth sampled at its
// projection (d_s). Away from depth discontinuities the two must agree to a
// small fraction of the sweep's candidate spacing; the filters drop pixels
// where bilinear sampling would straddle an edge on either side.
struct SurfaceConsistency {
    int checked = 0;       // candidates that passed the validity/smoothness filters
    int within = 0;        // of those, |d_s - d_p| < tol
    double max_err = 0.0;  // largest |d_s - d_p| over the checked candidates
    double tol = 0.0;
};

inline SurfaceConsistency measure_surface_consistency(const SceneSample& s, double tol,
                                                      double smooth_frac = 0.03) {
    const int W = s.width, H = s.height;
    const int tgt = s.target_index();
    SurfaceConsistency r;
    r.tol = tol;
    const std::vector<float>& tg = s.gt_depth[tgt];
    // Target-side smoothness: every 3x3 neighbour within smooth_frac of the
    // centre depth, so the candidate sits on a locally smooth patch.
    std::vector<char> smooth(tg.size(), 0);
    for (int y = 1; y + 1 < H; ++y) {
        for (int x = 1; x + 1 < W; ++x) {
            const float c = tg[static_cast<size_t>(y) * W + x];
            if (!(c > 0.0f)) continue;
            bool ok = true;
            for (int dy = -1; dy <= 1 && ok; ++dy)
                for (int dx = -1; dx <= 1 && ok; ++dx) {
                    const float nb = tg[static_cast<size_t>(y + dy) * W + (x + dx)];
                    if (!(nb > 0.0f) || std::abs(nb - c) > smooth_frac * c) ok = false;
                }
            smooth[static_cast<size_t>(y) * W + x] = ok ? 1 : 0;
        }
    }
    std::vector<float> cand(tg.begin(), tg.end());  // one candidate plane: the surface itself
    for (int i = 0; i < s.n_sources; ++i) {
        const std::vector<float>& sg = s.gt_depth[i];
        // One-sided gradient magnitude of the source depth map; borders and
        // invalid pixels get a sentinel so samples near them are rejected.
        std::vector<float> grad(sg.size(), 1e9f);
        for (int y = 0; y + 1 < H; ++y)
            for (int x = 0; x + 1 < W; ++x) {
                const float c = sg[static_cast<size_t>(y) * W + x];
                const float rx = sg[static_cast<size_t>(y) * W + x + 1];
                const float ry = sg[static_cast<size_t>(y + 1) * W + x];
                if (c > 0.0f && rx > 0.0f && ry > 0.0f)
                    grad[static_cast<size_t>(y) * W + x] =
                        std::max(std::abs(rx - c), std::abs(ry - c));
            }
        Tensor pv = depth_pair_volume(s.cameras[tgt], s.cameras[i],
                                      Tensor::from_data({H, W}, std::vector<float>(sg)), cand, 1,
                                      H, W);
        Tensor gv = depth_pair_volume(s.cameras[tgt], s.cameras[i],
                                      Tensor::from_data({H, W}, std::vector<float>(grad)), cand,
                                      1, H, W);
        const float* dp = pv.data();
        const float* ds = dp + tg.size();
        const float* mask = dp + 3 * tg.size();
        const float* gs = gv.data() + tg.size();  // gradient sampled at the same projection
        for (size_t j = 0; j < tg.size(); ++j) {
            if (mask[j] != 1.0f || !smooth[j] || !(tg[j] > 0.0f) || !(ds[j] > 0.0f)) continue;
            if (gs[j] > smooth_frac * ds[j]) continue;  // source-side discontinuity nearby
            const double err = std::abs(static_cast<double>(ds[j]) - static_cast<double>(dp[j]));
            ++r.checked;
            if (err < tol) ++r.within;
            r.max_err = std::max(r.max_err, err);
        }
    }
    return r;
}

struct EvalSummary {
    std::vector<SceneEval> scenes;
    double psnr = 0.0;  // means over scenes
    double ssim = 0.0;
    double reference_psnr = 0.0;
    double fine_leq_coarse_frac = 0.0;  // scenes where the fine level's depth error is no worse
};

inline EvalSummary evaluate_model(const MugsModel& model, const std::vector<SceneSample>& scenes) {
    if (scenes.empty()) throw ValueError("evaluate_model: no scenes");
    EvalSummary sum;
    int fine_leq = 0;
    for (const SceneSample& s : scenes) {
        SceneEval e = evaluate_scene(model, s);
        sum.psnr += e.psnr;
        sum.ssim += e.ssim;
        sum.reference_psnr += e.reference_psnr;
        if (e.depth_fine.abs_err <= e.depth_coarse.abs_err) ++fine_leq;
        sum.scenes.push_back(e);
    }
    const double n = static_cast<double>(scenes.size());
    sum.psnr /= n;
    sum.ssim /= n;
    sum.reference_psnr /= n;
    sum.fine_leq_coarse_frac = fine_leq / n;
    return sum;
}

}  // namespace mugs
