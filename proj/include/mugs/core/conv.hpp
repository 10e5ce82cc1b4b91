#pragma once

// 2D/3D convolutions, average pooling, nearest upsampling, and a separable
// depthwise 1D convolution (used for Gaussian windows). Layout is channels
// first: (C,H,W) and (C,D,H,W). Inner loops run along the contiguous W axis.
//
// Parallel work is partitioned by output (or input, in backward) channel so
// each memory cell has a single owner; results are thread-count independent.

#include <cmath>
#include <vector>

#include "mugs/core/parallel.hpp"
#include "mugs/core/tensor.hpp"

namespace mugs {

namespace detail {

struct Conv2dDims {
    int Cin, H, W, Cout, kh, kw, stride, ph, pw, Ho, Wo;
};

inline Conv2dDims conv2d_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
    if (x.ndim() != 3 || w.ndim() != 4)
        throw ShapeError("conv2d: expected x (C,H,W) and w (Cout,Cin,kh,kw), got " + shape_str(x.shape()) +
                         " and " + shape_str(w.shape()));
    Conv2dDims d;
    d.Cin = x.dim(0);
    d.H = x.dim(1);
    d.W = x.dim(2);
    d.Cout = w.dim(0);
    d.kh = w.dim(2);
    d.kw = w.dim(3);
    d.stride = stride;
    if (w.dim(1) != d.Cin)
        throw ShapeError("conv2d: weight expects " + std::to_string(w.dim(1)) + " input channels, x has " +
                         std::to_string(d.Cin));
    d.ph = pad >= 0 ? pad : (d.kh - 1) / 2;
    d.pw = pad >= 0 ? pad : (d.kw - 1) / 2;
    d.Ho = (d.H + 2 * d.ph - d.kh) / stride + 1;
    d.Wo = (d.W + 2 * d.pw - d.kw) / stride + 1;
    if (d.Ho <= 0 || d.Wo <= 0) throw ShapeError("conv2d: kernel larger than padded input");
    return d;
}

// Valid ox range so that ix = ox*stride + k - pad stays inside [0, limit).
inline void ox_range(int k, int pad, int stride, int in_limit, int out_limit, int& lo, int& hi) {
    int shift = k - pad;  // ix = ox*stride + shift
    lo = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
    hi = std::min(out_limit, shift >= in_limit ? 0 : (in_limit - 1 - shift) / stride + 1);
}

}  // namespace detail

// x (Cin,H,W), w (Cout,Cin,kh,kw), b (Cout) or undefined. pad=-1 means
// "same" padding (odd kernels).
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride = 1, int pad = -1) {
    auto d = detail::conv2d_dims(x, w, stride, pad);
    if (b.defined() && (b.ndim() != 1 || b.dim(0) != d.Cout))
        throw ShapeError("conv2d: bias shape " + shape_str(b.shape()));
    Tensor out = Tensor::alloc({d.Cout, d.Ho, d.Wo});
    {
        const float* px = x.data();
        const float* pw = w.data();
        const float* pb = b.defined() ? b.data() : nullptr;
        float* po = out.mut_data();
        parallel_for(
            d.Cout,
            [&](int64_t oc) {
                float* oplane = po + oc * d.Ho * d.Wo;
                std::fill(oplane, oplane + d.Ho * d.Wo, pb ? pb[oc] : 0.0f);
                for (int ic = 0; ic < d.Cin; ++ic) {
                    const float* xplane = px + static_cast<int64_t>(ic) * d.H * d.W;
                    const float* wbase = pw + ((oc * d.Cin + ic) * d.kh) * d.kw;
                    for (int oy = 0; oy < d.Ho; ++oy) {
                        float* orow = oplane + oy * d.Wo;
                        for (int ky = 0; ky < d.kh; ++ky) {
                            int iy = oy * d.stride + ky - d.ph;
                            if (iy < 0 || iy >= d.H) continue;
                            const float* xrow = xplane + iy * d.W;
                            const float* wrow = wbase + ky * d.kw;
                            for (int kx = 0; kx < d.kw; ++kx) {
                                float wv = wrow[kx];
                                if (wv == 0.0f) continue;
                                int lo, hi;
                                detail::ox_range(kx, d.pw, d.stride, d.W, d.Wo, lo, hi);
                                const float* xs = xrow + kx - d.pw;
                                if (d.stride == 1) {
                                    for (int ox = lo; ox < hi; ++ox) orow[ox] += wv * xs[ox];
                                } else {
                                    for (int ox = lo; ox < hi; ++ox) orow[ox] += wv * xs[ox * d.stride];
                                }
                            }
                        }
                    }
                }
            },
            1);
    }
    autograd::record("conv2d", out, {x, w, b.defined() ? b : Tensor::zeros({d.Cout})},
                     [xn = x.node(), wn = w.node(), bn = b.defined() ? b.node() : nullptr, d](Node& self) {
                         const float* g = self.grad.data();
                         const float* px = xn->data.data();
                         const float* pw = wn->data.data();
                         if (bn && bn->needs_grad) {
                             bn->ensure_grad();
                             for (int oc = 0; oc < d.Cout; ++oc) {
                                 const float* gp = g + static_cast<int64_t>(oc) * d.Ho * d.Wo;
                                 double acc = 0.0;
                                 for (int i = 0; i < d.Ho * d.Wo; ++i) acc += gp[i];
                                 bn->grad[static_cast<size_t>(oc)] += static_cast<float>(acc);
                             }
                         }
                         if (wn->needs_grad) {
                             wn->ensure_grad();
                             float* gw = wn->grad.data();
                             parallel_for(
                                 d.Cout,
                                 [&](int64_t oc) {
                                     for (int ic = 0; ic < d.Cin; ++ic) {
                                         const float* xplane = px + static_cast<int64_t>(ic) * d.H * d.W;
                                         float* gwbase = gw + ((oc * d.Cin + ic) * d.kh) * d.kw;
                                         for (int ky = 0; ky < d.kh; ++ky)
                                             for (int kx = 0; kx < d.kw; ++kx) {
                                                 int lo, hi;
                                                 detail::ox_range(kx, d.pw, d.stride, d.W, d.Wo, lo, hi);
                                                 double acc = 0.0;
                                                 for (int oy = 0; oy < d.Ho; ++oy) {
                                                     int iy = oy * d.stride + ky - d.ph;
                                                     if (iy < 0 || iy >= d.H) continue;
                                                     const float* grow =
                                                         g + (oc * d.Ho + oy) * d.Wo;
                                                     const float* xs = xplane + iy * d.W + kx - d.pw;
                                                     float rowacc = 0.0f;
                                                     if (d.stride == 1) {
                                                         for (int ox = lo; ox < hi; ++ox)
                                                             rowacc += grow[ox] * xs[ox];
                                                     } else {
                                                         for (int ox = lo; ox < hi; ++ox)
                                                             rowacc += grow[ox] * xs[ox * d.stride];
                                                     }
                                                     acc += rowacc;
                                                 }
                                                 gwbase[ky * d.kw + kx] += static_cast<float>(acc);
                                             }
                                     }
                                 },
                                 1);
                         }
                         if (xn->needs_grad) {
                             xn->ensure_grad();
                             float* gx = xn->grad.data();
                             parallel_for(
                                 d.Cin,
                                 [&](int64_t ic) {
                                     float* gxplane = gx + ic * d.H * d.W;
                                     for (int oc = 0; oc < d.Cout; ++oc) {
                                         const float* wbase = pw + ((oc * d.Cin + ic) * d.kh) * d.kw;
                                         for (int oy = 0; oy < d.Ho; ++oy) {
                                             const float* grow = g + (static_cast<int64_t>(oc) * d.Ho + oy) * d.Wo;
                                             for (int ky = 0; ky < d.kh; ++ky) {
                                                 int iy = oy * d.stride + ky - d.ph;
                                                 if (iy < 0 || iy >= d.H) continue;
                                                 float* gxrow = gxplane + iy * d.W;
                                                 const float* wrow = wbase + ky * d.kw;
                                                 for (int kx = 0; kx < d.kw; ++kx) {
                                                     float wv = wrow[kx];
                                                     if (wv == 0.0f) continue;
                                                     int lo, hi;
                                                     detail::ox_range(kx, d.pw, d.stride, d.W, d.Wo, lo, hi);
                                                     float* xs = gxrow + kx - d.pw;
                                                     if (d.stride == 1) {
                                                         for (int ox = lo; ox < hi; ++ox) xs[ox] += wv * grow[ox];
                                                     } else {
                                                         for (int ox = lo; ox < hi; ++ox)
                                                             xs[ox * d.stride] += wv * grow[ox];
                                                     }
                                                 }
                                             }
                                         }
                                     }
                                 },
                                 1);
                         }
                     });
    return out;
}

namespace detail {

struct Conv3dDims {
    int Cin, D, H, W, Cout, kd, kh, kw, pd, ph, pw, Do, Ho, Wo;
};

inline Conv3dDims conv3d_dims(const Tensor& x, const Tensor& w) {
    if (x.ndim() != 4 || w.ndim() != 5)
        throw ShapeError("conv3d: expected x (C,D,H,W) and w (Cout,Cin,kd,kh,kw), got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
    Conv3dDims d;
    d.Cin = x.dim(0);
    d.D = x.dim(1);
    d.H = x.dim(2);
    d.W = x.dim(3);
    d.Cout = w.dim(0);
    d.kd = w.dim(2);
    d.kh = w.dim(3);
    d.kw = w.dim(4);
    if (w.dim(1) != d.Cin) throw ShapeError("conv3d: channel mismatch");
    d.pd = (d.kd - 1) / 2;
    d.ph = (d.kh - 1) / 2;
    d.pw = (d.kw - 1) / 2;
    d.Do = d.D;
    d.Ho = d.H;
    d.Wo = d.W;  // stride 1, same padding
    return d;
}

}  // namespace detail

// Stride-1 same-padding 3D convolution. x (Cin,D,H,W), w (Cout,Cin,kd,kh,kw).
inline Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& b) {
    auto d = detail::conv3d_dims(x, w);
    if (b.defined() && (b.ndim() != 1 || b.dim(0) != d.Cout))
        throw ShapeError("conv3d: bias shape " + shape_str(b.shape()));
    Tensor out = Tensor::alloc({d.Cout, d.Do, d.Ho, d.Wo});
    {
        const float* px = x.data();
        const float* pw = w.data();
        const float* pb = b.defined() ? b.data() : nullptr;
        float* po = out.mut_data();
        int64_t plane = static_cast<int64_t>(d.Ho) * d.Wo;
        parallel_for(
            static_cast<int64_t>(d.Cout) * d.Do,
            [&](int64_t job) {
                int oc = static_cast<int>(job / d.Do);
                int od = static_cast<int>(job % d.Do);
                float* oplane = po + (static_cast<int64_t>(oc) * d.Do + od) * plane;
                std::fill(oplane, oplane + plane, pb ? pb[oc] : 0.0f);
                for (int ic = 0; ic < d.Cin; ++ic) {
                    const float* xvol = px + static_cast<int64_t>(ic) * d.D * plane;
                    const float* wb = pw + (((static_cast<int64_t>(oc) * d.Cin + ic) * d.kd) * d.kh) * d.kw;
                    for (int kz = 0; kz < d.kd; ++kz) {
                        int id = od + kz - d.pd;
                        if (id < 0 || id >= d.D) continue;
                        const float* xplane = xvol + static_cast<int64_t>(id) * plane;
                        for (int oy = 0; oy < d.Ho; ++oy) {
                            float* orow = oplane + oy * d.Wo;
                            for (int ky = 0; ky < d.kh; ++ky) {
                                int iy = oy + ky - d.ph;
                                if (iy < 0 || iy >= d.H) continue;
                                const float* xrow = xplane + iy * d.W;
                                const float* wrow = wb + (kz * d.kh + ky) * d.kw;
                                for (int kx = 0; kx < d.kw; ++kx) {
                                    float wv = wrow[kx];
                                    if (wv == 0.0f) continue;
                                    int lo = std::max(0, d.pw - kx);
                                    int hi = std::min(d.Wo, d.W + d.pw - kx);
                                    const float* xs = xrow + kx - d.pw;
                                    for (int ox = lo; ox < hi; ++ox) orow[ox] += wv * xs[ox];
                                }
                            }
                        }
                    }
                }
            },
            1);
    }
    autograd::record(
        "conv3d", out, {x, w, b.defined() ? b : Tensor::zeros({d.Cout})},
        [xn = x.node(), wn = w.node(), bn = b.defined() ? b.node() : nullptr, d](Node& self) {
            const float* g = self.grad.data();
            const float* px = xn->data.data();
            const float* pw = wn->data.data();
            int64_t plane = static_cast<int64_t>(d.Ho) * d.Wo;
            if (bn && bn->needs_grad) {
                bn->ensure_grad();
                for (int oc = 0; oc < d.Cout; ++oc) {
                    const float* gp = g + static_cast<int64_t>(oc) * d.Do * plane;
                    double acc = 0.0;
                    for (int64_t i = 0; i < d.Do * plane; ++i) acc += gp[i];
                    bn->grad[static_cast<size_t>(oc)] += static_cast<float>(acc);
                }
            }
            if (wn->needs_grad) {
                wn->ensure_grad();
                float* gw = wn->grad.data();
                parallel_for(
                    d.Cout,
                    [&](int64_t oc) {
                        for (int ic = 0; ic < d.Cin; ++ic) {
                            const float* xvol = px + static_cast<int64_t>(ic) * d.D * plane;
                            float* gwb = gw + (((oc * d.Cin + ic) * d.kd) * d.kh) * d.kw;
                            for (int kz = 0; kz < d.kd; ++kz)
                                for (int ky = 0; ky < d.kh; ++ky)
                                    for (int kx = 0; kx < d.kw; ++kx) {
                                        int lo = std::max(0, d.pw - kx);
                                        int hi = std::min(d.Wo, d.W + d.pw - kx);
                                        double acc = 0.0;
                                        for (int od = 0; od < d.Do; ++od) {
                                            int id = od + kz - d.pd;
                                            if (id < 0 || id >= d.D) continue;
                                            const float* xplane = xvol + static_cast<int64_t>(id) * plane;
                                            const float* gvol = g + (oc * d.Do + od) * plane;
                                            for (int oy = 0; oy < d.Ho; ++oy) {
                                                int iy = oy + ky - d.ph;
                                                if (iy < 0 || iy >= d.H) continue;
                                                const float* grow = gvol + oy * d.Wo;
                                                const float* xs = xplane + iy * d.W + kx - d.pw;
                                                float rowacc = 0.0f;
                                                for (int ox = lo; ox < hi; ++ox) rowacc += grow[ox] * xs[ox];
                                                acc += rowacc;
                                            }
                                        }
                                        gwb[(kz * d.kh + ky) * d.kw + kx] += static_cast<float>(acc);
                                    }
                        }
                    },
                    1);
            }
            if (xn->needs_grad) {
                xn->ensure_grad();
                float* gx = xn->grad.data();
                parallel_for(
                    d.Cin,
                    [&](int64_t ic) {
                        float* gxvol = gx + ic * d.D * plane;
                        for (int oc = 0; oc < d.Cout; ++oc) {
                            const float* wb = pw + (((static_cast<int64_t>(oc) * d.Cin + ic) * d.kd) * d.kh) * d.kw;
                            for (int od = 0; od < d.Do; ++od) {
                                const float* gvol = g + (static_cast<int64_t>(oc) * d.Do + od) * plane;
                                for (int kz = 0; kz < d.kd; ++kz) {
                                    int id = od + kz - d.pd;
                                    if (id < 0 || id >= d.D) continue;
                                    float* gxplane = gxvol + static_cast<int64_t>(id) * plane;
                                    for (int oy = 0; oy < d.Ho; ++oy) {
                                        const float* grow = gvol + oy * d.Wo;
                                        for (int ky = 0; ky < d.kh; ++ky) {
                                            int iy = oy + ky - d.ph;
                                            if (iy < 0 || iy >= d.H) continue;
                                            float* gxrow = gxplane + iy * d.W;
                                            const float* wrow = wb + (kz * d.kh + ky) * d.kw;
                                            for (int kx = 0; kx < d.kw; ++kx) {
                                                float wv = wrow[kx];
                                                if (wv == 0.0f) continue;
                                                int lo = std::max(0, d.pw - kx);
                                                int hi = std::min(d.Wo, d.W + d.pw - kx);
                                                float* xs = gxrow + kx - d.pw;
                                                for (int ox = lo; ox < hi; ++ox) xs[ox] += wv * grow[ox];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    },
                    1);
            }
        });
    return out;
}

// 2x2 average pooling with ceil semantics; edge windows average fewer cells.
inline Tensor avg_pool2d(const Tensor& x) {
    if (x.ndim() != 3) throw ShapeError("avg_pool2d: expected (C,H,W), got " + shape_str(x.shape()));
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    int Ho = (H + 1) / 2, Wo = (W + 1) / 2;
    Tensor out = Tensor::alloc({C, Ho, Wo});
    {
        const float* p = x.data();
        float* o = out.mut_data();
        parallel_for(static_cast<int64_t>(C) * Ho, [&](int64_t job) {
            int c = static_cast<int>(job / Ho), oy = static_cast<int>(job % Ho);
            int y0 = oy * 2, y1 = std::min(y0 + 2, H);
            for (int ox = 0; ox < Wo; ++ox) {
                int x0 = ox * 2, x1 = std::min(x0 + 2, W);
                float acc = 0.0f;
                for (int y = y0; y < y1; ++y)
                    for (int xx = x0; xx < x1; ++xx) acc += p[(static_cast<int64_t>(c) * H + y) * W + xx];
                o[(static_cast<int64_t>(c) * Ho + oy) * Wo + ox] = acc / static_cast<float>((y1 - y0) * (x1 - x0));
            }
        });
    }
    autograd::record("avg_pool2d", out, {x}, [xn = x.node(), C, H, W, Ho, Wo](Node& self) {
        xn->ensure_grad();
        const float* g = self.grad.data();
        float* gx = xn->grad.data();
        parallel_for(static_cast<int64_t>(C) * Ho, [&](int64_t job) {
            int c = static_cast<int>(job / Ho), oy = static_cast<int>(job % Ho);
            int y0 = oy * 2, y1 = std::min(y0 + 2, H);
            for (int ox = 0; ox < Wo; ++ox) {
                int x0 = ox * 2, x1 = std::min(x0 + 2, W);
                float gv = g[(static_cast<int64_t>(c) * Ho + oy) * Wo + ox] / static_cast<float>((y1 - y0) * (x1 - x0));
                for (int y = y0; y < y1; ++y)
                    for (int xx = x0; xx < x1; ++xx) gx[(static_cast<int64_t>(c) * H + y) * W + xx] += gv;
            }
        });
    });
    return out;
}

// 2x2x2 average pooling over (D,H,W) with ceil semantics.
inline Tensor avg_pool3d(const Tensor& x) {
    if (x.ndim() != 4) throw ShapeError("avg_pool3d: expected (C,D,H,W), got " + shape_str(x.shape()));
    int C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
    int Do = (D + 1) / 2, Ho = (H + 1) / 2, Wo = (W + 1) / 2;
    Tensor out = Tensor::alloc({C, Do, Ho, Wo});
    {
        const float* p = x.data();
        float* o = out.mut_data();
        parallel_for(static_cast<int64_t>(C) * Do, [&](int64_t job) {
            int c = static_cast<int>(job / Do), od = static_cast<int>(job % Do);
            int z0 = od * 2, z1 = std::min(z0 + 2, D);
            for (int oy = 0; oy < Ho; ++oy) {
                int y0 = oy * 2, y1 = std::min(y0 + 2, H);
                for (int ox = 0; ox < Wo; ++ox) {
                    int x0 = ox * 2, x1 = std::min(x0 + 2, W);
                    float acc = 0.0f;
                    for (int z = z0; z < z1; ++z)
                        for (int y = y0; y < y1; ++y)
                            for (int xx = x0; xx < x1; ++xx)
                                acc += p[((static_cast<int64_t>(c) * D + z) * H + y) * W + xx];
                    o[((static_cast<int64_t>(c) * Do + od) * Ho + oy) * Wo + ox] =
                        acc / static_cast<float>((z1 - z0) * (y1 - y0) * (x1 - x0));
                }
            }
        });
    }
    autograd::record("avg_pool3d", out, {x}, [xn = x.node(), C, D, H, W, Do, Ho, Wo](Node& self) {
        xn->ensure_grad();
        const float* g = self.grad.data();
        float* gx = xn->grad.data();
        parallel_for(static_cast<int64_t>(C) * Do, [&](int64_t job) {
            int c = static_cast<int>(job / Do), od = static_cast<int>(job % Do);
            int z0 = od * 2, z1 = std::min(z0 + 2, D);
            for (int oy = 0; oy < Ho; ++oy) {
                int y0 = oy * 2, y1 = std::min(y0 + 2, H);
                for (int ox = 0; ox < Wo; ++ox) {
                    int x0 = ox * 2, x1 = std::min(x0 + 2, W);
                    float gv = g[((static_cast<int64_t>(c) * Do + od) * Ho + oy) * Wo + ox] /
                               static_cast<float>((z1 - z0) * (y1 - y0) * (x1 - x0));
                    for (int z = z0; z < z1; ++z)
                        for (int y = y0; y < y1; ++y)
                            for (int xx = x0; xx < x1; ++xx)
                                gx[((static_cast<int64_t>(c) * D + z) * H + y) * W + xx] += gv;
                }
            }
        });
    });
    return out;
}

// Nearest-neighbour upsampling to (Ho,Wo); requires Hin == ceil(Ho/2).
inline Tensor upsample2d_nn(const Tensor& x, int Ho, int Wo) {
    if (x.ndim() != 3) throw ShapeError("upsample2d: expected (C,H,W)");
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (H != (Ho + 1) / 2 || W != (Wo + 1) / 2)
        throw ShapeError("upsample2d: input " + shape_str(x.shape()) + " is not the half-res of " +
                         std::to_string(Ho) + "x" + std::to_string(Wo));
    Tensor out = Tensor::alloc({C, Ho, Wo});
    {
        const float* p = x.data();
        float* o = out.mut_data();
        parallel_for(static_cast<int64_t>(C) * Ho, [&](int64_t job) {
            int c = static_cast<int>(job / Ho), oy = static_cast<int>(job % Ho);
            const float* irow = p + (static_cast<int64_t>(c) * H + oy / 2) * W;
            float* orow = o + (static_cast<int64_t>(c) * Ho + oy) * Wo;
            for (int ox = 0; ox < Wo; ++ox) orow[ox] = irow[ox / 2];
        });
    }
    autograd::record("upsample2d", out, {x}, [xn = x.node(), C, H, W, Ho, Wo](Node& self) {
        xn->ensure_grad();
        const float* g = self.grad.data();
        float* gx = xn->grad.data();
        parallel_for(static_cast<int64_t>(C) * H, [&](int64_t job) {
            int c = static_cast<int>(job / H), iy = static_cast<int>(job % H);
            float* gxrow = gx + (static_cast<int64_t>(c) * H + iy) * W;
            for (int oy = iy * 2; oy < std::min(iy * 2 + 2, Ho); ++oy) {
                const float* grow = g + (static_cast<int64_t>(c) * Ho + oy) * Wo;
                for (int ox = 0; ox < Wo; ++ox) gxrow[ox / 2] += grow[ox];
            }
        });
    });
    return out;
}

// Nearest-neighbour 3D upsampling to (Do,Ho,Wo); requires half-res input.
inline Tensor upsample3d_nn(const Tensor& x, int Do, int Ho, int Wo) {
    if (x.ndim() != 4) throw ShapeError("upsample3d: expected (C,D,H,W)");
    int C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (D != (Do + 1) / 2 || H != (Ho + 1) / 2 || W != (Wo + 1) / 2)
        throw ShapeError("upsample3d: input " + shape_str(x.shape()) + " is not the half-res source");
    Tensor out = Tensor::alloc({C, Do, Ho, Wo});
    {
        const float* p = x.data();
        float* o = out.mut_data();
        parallel_for(static_cast<int64_t>(C) * Do, [&](int64_t job) {
            int c = static_cast<int>(job / Do), od = static_cast<int>(job % Do);
            for (int oy = 0; oy < Ho; ++oy) {
                const float* irow = p + ((static_cast<int64_t>(c) * D + od / 2) * H + oy / 2) * W;
                float* orow = o + ((static_cast<int64_t>(c) * Do + od) * Ho + oy) * Wo;
                for (int ox = 0; ox < Wo; ++ox) orow[ox] = irow[ox / 2];
            }
        });
    }
    autograd::record("upsample3d", out, {x}, [xn = x.node(), C, D, H, W, Do, Ho, Wo](Node& self) {
        xn->ensure_grad();
        const float* g = self.grad.data();
        float* gx = xn->grad.data();
        parallel_for(static_cast<int64_t>(C) * D, [&](int64_t job) {
            int c = static_cast<int>(job / D), id = static_cast<int>(job % D);
            for (int od = id * 2; od < std::min(id * 2 + 2, Do); ++od)
                for (int oy = 0; oy < Ho; ++oy) {
                    const float* grow = g + ((static_cast<int64_t>(c) * Do + od) * Ho + oy) * Wo;
                    float* gxrow = gx + ((static_cast<int64_t>(c) * D + id) * H + oy / 2) * W;
                    for (int ox = 0; ox < Wo; ++ox) gxrow[ox / 2] += grow[ox];
                }
        });
    });
    return out;
}

// Depthwise valid 1D convolution along W (axis=2) or H (axis=1) with a fixed
// kernel shared by all channels. The kernel is data, not a parameter.
inline Tensor depthwise_conv1d(const Tensor& x, const std::vector<float>& kernel, int axis) {
    if (x.ndim() != 3) throw ShapeError("depthwise_conv1d: expected (C,H,W)");
    if (axis != 1 && axis != 2) throw ShapeError("depthwise_conv1d: axis must be 1 or 2");
    int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    int k = static_cast<int>(kernel.size());
    int Ho = axis == 1 ? H - k + 1 : H;
    int Wo = axis == 2 ? W - k + 1 : W;
    if (Ho <= 0 || Wo <= 0) throw ShapeError("depthwise_conv1d: kernel longer than axis");
    Tensor out = Tensor::alloc({C, Ho, Wo});
    {
        const float* p = x.data();
        float* o = out.mut_data();
        parallel_for(static_cast<int64_t>(C) * Ho, [&](int64_t job) {
            int c = static_cast<int>(job / Ho), oy = static_cast<int>(job % Ho);
            float* orow = o + (static_cast<int64_t>(c) * Ho + oy) * Wo;
            std::fill(orow, orow + Wo, 0.0f);
            for (int t = 0; t < k; ++t) {
                float wv = kernel[static_cast<size_t>(t)];
                const float* irow = axis == 1 ? p + (static_cast<int64_t>(c) * H + oy + t) * W
                                              : p + (static_cast<int64_t>(c) * H + oy) * W + t;
                for (int ox = 0; ox < Wo; ++ox) orow[ox] += wv * irow[ox];
            }
        });
    }
    autograd::record("depthwise_conv1d", out, {x}, [xn = x.node(), kernel, axis, C, H, W, Ho, Wo](Node& self) {
        xn->ensure_grad();
        const float* g = self.grad.data();
        float* gx = xn->grad.data();
        int k = static_cast<int>(kernel.size());
        parallel_for(
            C,
            [&](int64_t c) {
                for (int oy = 0; oy < Ho; ++oy) {
                    const float* grow = g + (c * Ho + oy) * Wo;
                    for (int t = 0; t < k; ++t) {
                        float wv = kernel[static_cast<size_t>(t)];
                        float* gxrow = axis == 1 ? gx + (c * H + oy + t) * W : gx + (c * H + oy) * W + t;
                        for (int ox = 0; ox < Wo; ++ox) gxrow[ox] += wv * grow[ox];
                    }
                }
            },
            1);
    });
    return out;
}

// Separable Gaussian blur, valid region only: (C,H,W) -> (C,H-k+1,W-k+1).
inline Tensor gaussian_blur2d(const Tensor& x, int ksize, float sigma) {
    std::vector<float> kernel(static_cast<size_t>(ksize));
    double s = 0.0;
    int half = (ksize - 1) / 2;
    for (int i = 0; i < ksize; ++i) {
        double d = i - half;
        kernel[static_cast<size_t>(i)] = static_cast<float>(std::exp(-d * d / (2.0 * sigma * sigma)));
        s += kernel[static_cast<size_t>(i)];
    }
    for (auto& v : kernel) v = static_cast<float>(v / s);
    return depthwise_conv1d(depthwise_conv1d(x, kernel, 2), kernel, 1);
}

}  // namespace mugs
