#pragma once

// Differentiable bilinear sampling. Coordinates are pixel-centre based:
// (x, y) in [0, W-1] x [0, H-1] is in bounds. Out-of-bounds samples return 0
// and are reported through the validity mask. Gradients flow to the source
// values only; the sample grid is data.

#include <vector>

#include "mugs/core/parallel.hpp"
#include "mugs/core/tensor.hpp"

namespace mugs {

struct SampleGrid {
    std::vector<float> x, y;  // size rows*cols, row-major
    int rows = 0, cols = 0;
};

// src (C,H,W), grid of rows x cols points -> out (C,rows,cols).
// mask_out (optional, rows*cols) receives 1 for in-bounds samples else 0.
inline Tensor bilinear_sample(const Tensor& src, const SampleGrid& grid, std::vector<float>* mask_out = nullptr) {
    if (src.ndim() != 3) throw ShapeError("bilinear_sample: expected (C,H,W), got " + shape_str(src.shape()));
    const int C = src.dim(0), H = src.dim(1), W = src.dim(2);
    const int R = grid.rows, Q = grid.cols;
    const int64_t n = static_cast<int64_t>(R) * Q;
    if (static_cast<int64_t>(grid.x.size()) != n || static_cast<int64_t>(grid.y.size()) != n)
        throw ShapeError("bilinear_sample: grid size mismatch");

    // Per-point taps, shared across channels.
    struct Tap {
        int i00;
        float w00, w01, w10, w11;
        int dx, dy;  // 0 or 1: whether the +1 neighbour exists
        bool valid;
    };
    auto taps = std::make_shared<std::vector<Tap>>(static_cast<size_t>(n));
    if (mask_out) mask_out->assign(static_cast<size_t>(n), 0.0f);
    {
        Tap* tp = taps->data();
        const float* gxp = grid.x.data();
        const float* gyp = grid.y.data();
        parallel_for(n, [&](int64_t i) {
            float xf = gxp[i], yf = gyp[i];
            Tap t{};
            t.valid = std::isfinite(xf) && std::isfinite(yf) && xf >= 0.0f && yf >= 0.0f &&
                      xf <= static_cast<float>(W - 1) && yf <= static_cast<float>(H - 1);
            if (t.valid) {
                int x0 = static_cast<int>(xf);
                int y0 = static_cast<int>(yf);
                if (x0 > W - 2) x0 = W - 2 < 0 ? 0 : W - 2;
                if (y0 > H - 2) y0 = H - 2 < 0 ? 0 : H - 2;
                float fx = xf - static_cast<float>(x0);
                float fy = yf - static_cast<float>(y0);
                t.dx = (W > 1) ? 1 : 0;
                t.dy = (H > 1) ? 1 : 0;
                t.i00 = y0 * W + x0;
                t.w00 = (1.0f - fx) * (1.0f - fy);
                t.w01 = fx * (1.0f - fy);
                t.w10 = (1.0f - fx) * fy;
                t.w11 = fx * fy;
            }
            tp[i] = t;
        });
        if (mask_out)
            for (int64_t i = 0; i < n; ++i) (*mask_out)[static_cast<size_t>(i)] = tp[i].valid ? 1.0f : 0.0f;
    }

    Tensor out = Tensor::alloc({C, R, Q});
    {
        const float* s = src.data();
        float* o = out.mut_data();
        const Tap* tp = taps->data();
        parallel_for(static_cast<int64_t>(C), [&](int64_t c) {
            const float* plane = s + c * H * W;
            float* oplane = o + c * n;
            for (int64_t i = 0; i < n; ++i) {
                const Tap& t = tp[i];
                if (!t.valid) {
                    oplane[i] = 0.0f;
                    continue;
                }
                oplane[i] = t.w00 * plane[t.i00] + t.w01 * plane[t.i00 + t.dx] +
                            t.w10 * plane[t.i00 + t.dy * W] + t.w11 * plane[t.i00 + t.dy * W + t.dx];
            }
        }, 1);
    }
    autograd::record("bilinear_sample", out, {src}, [sn = src.node(), taps, C, H, W, n](Node& self) {
        sn->ensure_grad();
        const float* g = self.grad.data();
        float* gs = sn->grad.data();
        const Tap* tp = taps->data();
        parallel_for(static_cast<int64_t>(C), [&](int64_t c) {
            float* gplane = gs + c * H * W;
            const float* go = g + c * n;
            for (int64_t i = 0; i < n; ++i) {
                const Tap& t = tp[i];
                if (!t.valid) continue;
                float gv = go[i];
                gplane[t.i00] += t.w00 * gv;
                gplane[t.i00 + t.dx] += t.w01 * gv;
                gplane[t.i00 + t.dy * W] += t.w10 * gv;
                gplane[t.i00 + t.dy * W + t.dx] += t.w11 * gv;
            }
        }, 1);
    });
    return out;
}

}  // namespace mugs
