#pragma once

// Training loop: one random scene per iteration, a two-phase schedule (the
// coarse level alone, then both levels jointly), Adam updates, CSV logging,
// checkpoints, and a fail-fast guard that names the op which produced the
// first non-finite value instead of letting it propagate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mugs/train/adam.hpp"
#include "mugs/train/losses.hpp"
#include "mugs/train/metrics.hpp"
#include "mugs/train/model.hpp"

namespace mugs {

struct TrainConfig {
    int iterations = 200;
    double lr = 1e-3;
    bool cosine_schedule = false;  // cosine decay to zero; constant otherwise
    bool reference_views = true;   // also supervise re-rendered source views
    double coarse_phase = 0.3;     // fraction of iterations before the fine level joins
    int val_every = 0;             // 0 disables validation logging
    int checkpoint_every = 0;      // 0 keeps only the final checkpoint
    uint64_t seed = 7;
    std::string out_dir;           // run directory (created if needed); "" disables output
};

struct IterationLog {
    int iteration = 0;
    double total = 0.0;
    double l1 = 0.0;
    double ssim = 0.0;
    double grad = 0.0;
    double reference = 0.0;
    double lr = 0.0;
    double val_psnr = -1.0;  // negative when not measured this iteration
};

struct TrainResult {
    std::vector<IterationLog> log;
    std::string checkpoint_path;
    double final_loss = 0.0;
};

// Creation-order ancestry scan: returns the label of the earliest op holding
// a non-finite value, so the abort message points at the producer rather than
// the symptom.
inline std::string first_non_finite_op(const Tensor& loss) {
    std::vector<Node*> order;
    autograd::topo_order(loss.node().get(), order);
    std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id < b->id; });
    for (Node* n : order)
        for (float v : n->data)
            if (!std::isfinite(v)) return std::string(n->op);
    return "unknown";
}

// Box-downsampled copy of an image for supervising a reduced-resolution
// render; k must be a power of two.
inline Tensor downsample_image(const Tensor& img, int k) {
    Tensor t = img;
    for (int f = k; f > 1; f /= 2) t = avg_pool2d(t);
    return t;
}

namespace detail {

// Photometric objective for one supervised render; accumulates the per-term
// scalars so the trainer can log them individually.
struct LossTerms {
    Tensor l1, ssim, grad, reference;

    void add_target(const Tensor& render, const Tensor& gt) {
        Tensor a = l1_loss(render, gt);
        Tensor s = ssim_loss(render, gt);
        Tensor g = gradient_loss(render, gt);
        l1 = l1.defined() ? add(l1, a) : a;
        ssim = ssim.defined() ? add(ssim, s) : s;
        grad = grad.defined() ? add(grad, g) : g;
    }

    void add_reference(const Tensor& render, const Tensor& gt) {
        Tensor a = l1_loss(render, gt);
        reference = reference.defined() ? add(reference, a) : a;
    }

    Tensor total() const {
        Tensor t = add(add(l1, ssim), grad);
        return reference.defined() ? add(t, reference) : t;
    }
};

inline double scalar(const Tensor& t) { return t.defined() ? t.data()[0] : 0.0; }

}  // namespace detail

// Scene-sum objective over every active level of one pipeline pass.
inline detail::LossTerms scene_loss(const SceneSample& s, const PipelineOutput& out,
                                    bool reference_views) {
    detail::LossTerms terms;
    const int tgt = s.target_index();
    for (const LevelOutput& lo : out.levels) {
        const int k = s.width / lo.render_w;
        terms.add_target(lo.target.rgb, downsample_image(s.images[tgt], k));
        if (reference_views)
            for (size_t i = 0; i < lo.sources.size(); ++i)
                terms.add_reference(lo.sources[i].rgb, downsample_image(s.images[i], k));
    }
    return terms;
}

inline TrainResult train_model(MugsModel& model, const std::vector<SceneSample>& train_scenes,
                               const std::vector<SceneSample>& val_scenes,
                               const TrainConfig& cfg) {
    if (train_scenes.empty()) throw ValueError("train_model: no training scenes");
    if (cfg.iterations < 0) throw ValueError("train_model: negative iteration count");
    const bool emit = !cfg.out_dir.empty();
    if (emit) std::filesystem::create_directories(cfg.out_dir);
    std::ofstream csv;
    if (emit) {
        csv.open(cfg.out_dir + "/train_log.csv");
        if (!csv) throw IoError("train_model: cannot write log in " + cfg.out_dir);
        csv << "iteration,total,l1,ssim,grad,reference,lr,val_psnr\n";
    }
    Adam opt(model.params, AdamConfig{cfg.lr});
    Rng rng(cfg.seed);
    const int coarse_iters = static_cast<int>(cfg.coarse_phase * cfg.iterations);
    TrainResult res;
    for (int it = 0; it < cfg.iterations; ++it) {
        const SceneSample& s =
            train_scenes[static_cast<size_t>(rng.uniform_int(train_scenes.size()))];
        model.params.zero_grads();
        PipelineOutput out = model.forward_scene(s, it < coarse_iters, cfg.reference_views);
        detail::LossTerms terms = scene_loss(s, out, cfg.reference_views);
        Tensor total = terms.total();
        const double tv = detail::scalar(total);
        if (!std::isfinite(tv))
            throw ValueError("training aborted at iteration " + std::to_string(it) +
                             ": first non-finite value produced by op '" +
                             first_non_finite_op(total) + "'");
        backward(total);
        const double lr_scale =
            cfg.cosine_schedule
                ? 0.5 * (1.0 + std::cos(3.14159265358979323846 * it / cfg.iterations))
                : 1.0;
        opt.step(lr_scale);

        IterationLog row;
        row.iteration = it;
        row.total = tv;
        row.l1 = detail::scalar(terms.l1);
        row.ssim = detail::scalar(terms.ssim);
        row.grad = detail::scalar(terms.grad);
        row.reference = detail::scalar(terms.reference);
        row.lr = cfg.lr * lr_scale;
        const bool last = it + 1 == cfg.iterations;
        if (cfg.val_every > 0 && !val_scenes.empty() &&
            ((it + 1) % cfg.val_every == 0 || last)) {
            double acc = 0.0;
            for (const SceneSample& v : val_scenes) {
                PipelineOutput vo = model.forward_scene(v, false, false);
                acc += metrics::psnr(vo.levels[1].target.rgb.vec(),
                                     v.images[v.target_index()].vec());
            }
            row.val_psnr = acc / static_cast<double>(val_scenes.size());
        }
        res.log.push_back(row);
        res.final_loss = tv;
        if (emit) {
            csv << row.iteration << ',' << row.total << ',' << row.l1 << ',' << row.ssim << ','
                << row.grad << ',' << row.reference << ',' << row.lr << ',';
            if (row.val_psnr >= 0.0) csv << row.val_psnr;
            csv << '\n';
        }
        if (emit && cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 && !last) {
            std::ostringstream name;
            name << cfg.out_dir << "/checkpoint_" << std::setfill('0') << std::setw(6) << (it + 1)
                 << ".txt";
            save_checkpoint(model.params, name.str());
        }
    }
    if (emit) {
        res.checkpoint_path = cfg.out_dir + "/checkpoint_final.txt";
        save_checkpoint(model.params, res.checkpoint_path);
    }
    return res;
}

}  // namespace mugs
