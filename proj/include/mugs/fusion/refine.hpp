#pragma once

// Cue aggregation across views and depth-wise attention refinement.
//
// Aggregation: each view's cue volume is summarized by global average
// pooling and a linear head into one scalar logit; a softmax over views
// yields mixing weights, and the fused volume is the weighted sum. At zero
// head weights every view contributes equally.
//
// Refinement: single-head attention along each target ray. Queries come from
// the fused cue volume, keys and values from the sweep depth distribution,
// all tagged with a sinusoidal depth position code. The output projection is
// zero-initialized, so refinement starts as the identity:
//   refined = softmax_D(log(p + eps) + attn) == (p + eps) / (1 + D*eps).

#include <cmath>
#include <vector>

#include "mugs/core/conv.hpp"
#include "mugs/core/linalg.hpp"
#include "mugs/core/ops.hpp"
#include "mugs/sweep/encoder.hpp"

namespace mugs {

inline constexpr float kRefineEps = 1e-8f;

// Sinusoidal depth position code: 4 channels over normalized bin centres,
// constant across pixels. Pure data.
inline Tensor depth_position_code(int d, int h, int w) {
    Tensor code = Tensor::alloc({4, d, h, w});
    float* p = code.mut_data();
    const size_t plane = static_cast<size_t>(h) * w;
    for (int k = 0; k < d; ++k) {
        double t = (k + 0.5) / d;
        float v[4] = {static_cast<float>(std::sin(M_PI * t)), static_cast<float>(std::cos(M_PI * t)),
                      static_cast<float>(std::sin(2.0 * M_PI * t)),
                      static_cast<float>(std::cos(2.0 * M_PI * t))};
        for (int c = 0; c < 4; ++c) {
            std::fill(p + (static_cast<size_t>(c) * d + k) * plane,
                      p + (static_cast<size_t>(c) * d + k + 1) * plane, v[c]);
        }
    }
    return code;
}

struct CueAggregator {
    Tensor wv;  // (cue_channels) logit head weights, zero-init
    Tensor bv;  // (1)

    static CueAggregator create(ParamStore& ps, const std::string& prefix, int cue_channels) {
        CueAggregator a;
        a.wv = Tensor::param({cue_channels}, std::vector<float>(static_cast<size_t>(cue_channels), 0.0f));
        a.bv = Tensor::param({1}, {0.0f});
        ps.add(prefix + ".head.w", a.wv);
        ps.add(prefix + ".head.b", a.bv);
        return a;
    }

    // cues: per-view (C, D, h, w) volumes -> fused (C, D, h, w).
    Tensor forward(const std::vector<Tensor>& cues) const {
        if (cues.empty()) throw ValueError("CueAggregator: no views");
        const Shape& s = cues[0].shape();
        if (s.size() != 4) throw ValueError("CueAggregator: cues must be (C, D, h, w)");
        std::vector<Tensor> logits;
        for (const Tensor& c : cues) {
            Tensor gap = mean(reshape(c, {s[0], s[1] * s[2] * s[3]}), 1);  // (C)
            logits.push_back(add(sum(mul(gap, wv), 0, true), bv));         // (1)
        }
        Tensor weight = softmax(concat(logits, 0), 0);  // (n)
        Tensor fused;
        for (size_t i = 0; i < cues.size(); ++i) {
            Tensor wi = reshape(slice(weight, 0, static_cast<int>(i), 1), {1, 1, 1, 1});
            Tensor term = mul(cues[i], wi);
            fused = fused.defined() ? add(fused, term) : term;
        }
        return fused;
    }
};

struct DepthRefinerConfig {
    int cue_channels = 8;
    int key_dim = 16;
    int value_dim = 8;
};

struct DepthRefiner {
    DepthRefinerConfig cfg;
    Tensor wq, wk, wvv, wo, bo;  // q/k/v projections and the zero-init output head

    static DepthRefiner create(ParamStore& ps, const std::string& prefix,
                               const DepthRefinerConfig& cfg, Rng& rng) {
        DepthRefiner r;
        r.cfg = cfg;
        r.wq = detail::conv_weight3d(ps, prefix + ".q.w", cfg.key_dim, cfg.cue_channels + 4, 1, 1, 1, rng);
        r.wk = detail::conv_weight3d(ps, prefix + ".k.w", cfg.key_dim, 5, 1, 1, 1, rng);
        r.wvv = detail::conv_weight3d(ps, prefix + ".v.w", cfg.value_dim, 5, 1, 1, 1, rng);
        r.wo = Tensor::param({cfg.value_dim, 1},
                             std::vector<float>(static_cast<size_t>(cfg.value_dim), 0.0f));
        r.bo = Tensor::param({1}, {0.0f});
        ps.add(prefix + ".out.w", r.wo);
        ps.add(prefix + ".out.b", r.bo);
        return r;
    }

    // Per-ray attention logits (D, h, w) from fused cues (C, D, h, w) and the
    // sweep depth distribution (D, h, w).
    Tensor attention(const Tensor& fused, const Tensor& prob) const {
        const Shape& s = fused.shape();
        if (s.size() != 4 || s[0] != cfg.cue_channels) {
            throw ValueError("DepthRefiner: fused cues must be (cue_channels, D, h, w)");
        }
        const int d = s[1], h = s[2], w = s[3];
        if (prob.shape() != Shape({d, h, w})) {
            throw ValueError("DepthRefiner: prob must be (D, h, w)");
        }
        Tensor code = depth_position_code(d, h, w);
        Tensor q = conv3d(concat({fused, code}, 0), wq, Tensor());               // (dk, D, h, w)
        Tensor kin = concat({reshape(prob, {1, d, h, w}), code}, 0);             // (5, D, h, w)
        Tensor k = conv3d(kin, wk, Tensor());
        Tensor v = conv3d(kin, wvv, Tensor());                                   // (dv, D, h, w)

        const int rays = h * w;
        Tensor qr = reshape(permute(q, {2, 3, 1, 0}), {rays, d, cfg.key_dim});
        Tensor kr = reshape(permute(k, {2, 3, 0, 1}), {rays, cfg.key_dim, d});
        Tensor vr = reshape(permute(v, {2, 3, 1, 0}), {rays, d, cfg.value_dim});
        Tensor scores = affine(bmm(qr, kr), 1.0f / std::sqrt(static_cast<float>(cfg.key_dim)), 0.0f);
        Tensor ctx = bmm(softmax(scores, 2), vr);                                // (rays, D, dv)
        Tensor out = add(matmul(reshape(ctx, {rays * d, cfg.value_dim}), wo), bo);
        return permute(reshape(out, {h, w, d}), {2, 0, 1});
    }

    // Refined depth distribution: softmax_D(log(prob + eps) + attention).
    Tensor forward(const Tensor& fused, const Tensor& prob) const {
        Tensor logits = add(mugs::log(affine(prob, 1.0f, kRefineEps)), attention(fused, prob));
        return softmax(logits, 0);
    }
};

}  // namespace mugs
