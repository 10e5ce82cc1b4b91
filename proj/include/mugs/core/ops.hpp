#pragma once

// Tensor ops: elementwise with numpy-style broadcasting, reductions,
// axis softmax / L2 normalize, and shape ops. Every op registers a backward
// closure via autograd::record.

#include <cmath>
#include <cstring>
#include <vector>

#include "mugs/core/parallel.hpp"
#include "mugs/core/tensor.hpp"

namespace mugs {

namespace detail {

inline Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
    size_t nd = std::max(a.size(), b.size());
    Shape out(nd);
    for (size_t i = 0; i < nd; ++i) {
        int da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
        int db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
        if (da != db && da != 1 && db != 1)
            throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// Per-out-dim element strides into a tensor of shape `in` broadcast to `out`.
inline std::vector<int64_t> bcast_strides(const Shape& out, const Shape& in) {
    std::vector<int64_t> strides(out.size(), 0);
    int64_t s = 1;
    for (int i = static_cast<int>(in.size()) - 1; i >= 0; --i) {
        size_t od = out.size() - (in.size() - static_cast<size_t>(i));
        strides[od] = (in[static_cast<size_t>(i)] == 1 && out[od] != 1) ? 0 : s;
        s *= in[static_cast<size_t>(i)];
    }
    return strides;
}

// Odometer iteration over `out`, tracking linear indices into two inputs.
template <typename F>
void bcast_iterate(const Shape& out, const std::vector<int64_t>& sa, const std::vector<int64_t>& sb, F&& f) {
    int nd = static_cast<int>(out.size());
    int64_t total = numel_of(out);
    std::vector<int> idx(static_cast<size_t>(nd), 0);
    int64_t ai = 0, bi = 0;
    for (int64_t oi = 0; oi < total; ++oi) {
        f(oi, ai, bi);
        for (int d = nd - 1; d >= 0; --d) {
            ai += sa[static_cast<size_t>(d)];
            bi += sb[static_cast<size_t>(d)];
            if (++idx[static_cast<size_t>(d)] < out[static_cast<size_t>(d)]) break;
            ai -= sa[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
            bi -= sb[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
            idx[static_cast<size_t>(d)] = 0;
        }
    }
}

template <typename F, typename DA, typename DB>
Tensor binary_elementwise(const char* name, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
    const bool same = a.shape() == b.shape();
    Shape os = same ? a.shape() : broadcast_shape(name, a.shape(), b.shape());
    Tensor out = Tensor::alloc(os);
    float* o = out.mut_data();
    const float* pa = a.data();
    const float* pb = b.data();
    if (same) {
        int64_t n = out.numel();
        parallel_for(n, [&](int64_t i) { o[i] = f(pa[i], pb[i]); }, 16384);
    } else {
        auto sa = bcast_strides(os, a.shape());
        auto sb = bcast_strides(os, b.shape());
        bcast_iterate(os, sa, sb, [&](int64_t oi, int64_t ai, int64_t bi) { o[oi] = f(pa[ai], pb[bi]); });
    }
    autograd::record(name, out, {a, b}, [same, an = a.node(), bn = b.node(), da, db](Node& self) {
        const float* g = self.grad.data();
        const float* va = an->data.data();
        const float* vb = bn->data.data();
        const float* y = self.data.data();
        bool ga = an->needs_grad, gb = bn->needs_grad;
        if (ga) an->ensure_grad();
        if (gb) bn->ensure_grad();
        if (same) {
            int64_t n = static_cast<int64_t>(self.data.size());
            float* pga = ga ? an->grad.data() : nullptr;
            float* pgb = gb ? bn->grad.data() : nullptr;
            parallel_for(
                n,
                [&](int64_t i) {
                    if (pga) pga[i] += g[i] * da(va[i], vb[i], y[i]);
                    if (pgb) pgb[i] += g[i] * db(va[i], vb[i], y[i]);
                },
                16384);
        } else {
            auto sa = bcast_strides(self.shape, an->shape);
            auto sb = bcast_strides(self.shape, bn->shape);
            float* pga = ga ? an->grad.data() : nullptr;
            float* pgb = gb ? bn->grad.data() : nullptr;
            bcast_iterate(self.shape, sa, sb, [&](int64_t oi, int64_t ai, int64_t bi) {
                if (pga) pga[ai] += g[oi] * da(va[ai], vb[bi], y[oi]);
                if (pgb) pgb[bi] += g[oi] * db(va[ai], vb[bi], y[oi]);
            });
        }
    });
    return out;
}

template <typename F, typename D>
Tensor unary_elementwise(const char* name, const Tensor& a, F f, D d) {
    Tensor out = Tensor::alloc(a.shape());
    float* o = out.mut_data();
    const float* p = a.data();
    parallel_for(a.numel(), [&](int64_t i) { o[i] = f(p[i]); }, 16384);
    autograd::record(name, out, {a}, [an = a.node(), d](Node& self) {
        an->ensure_grad();
        const float* g = self.grad.data();
        const float* x = an->data.data();
        const float* y = self.data.data();
        float* gx = an->grad.data();
        parallel_for(
            static_cast<int64_t>(self.data.size()), [&](int64_t i) { gx[i] += g[i] * d(x[i], y[i]); }, 16384);
    });
    return out;
}

// outer/n/inner decomposition for single-axis ops.
struct AxisSplit {
    int64_t outer, n, inner;
};

inline AxisSplit axis_split(const char* op, const Shape& s, int axis) {
    if (axis < 0) axis += static_cast<int>(s.size());
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw ShapeError(std::string(op) + ": axis out of range for shape " + shape_str(s));
    AxisSplit sp{1, s[static_cast<size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) sp.outer *= s[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) sp.inner *= s[i];
    return sp;
}

}  // namespace detail

// --- elementwise binary ---

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(
        "add", a, b, [](float x, float y) { return x + y; }, [](float, float, float) { return 1.0f; },
        [](float, float, float) { return 1.0f; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(
        "sub", a, b, [](float x, float y) { return x - y; }, [](float, float, float) { return 1.0f; },
        [](float, float, float) { return -1.0f; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(
        "mul", a, b, [](float x, float y) { return x * y; }, [](float, float y, float) { return y; },
        [](float x, float, float) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(
        "div", a, b, [](float x, float y) { return x / y; }, [](float, float y, float) { return 1.0f / y; },
        [](float, float y, float out) { return -out / y; });
}

// --- elementwise unary ---

inline Tensor neg(const Tensor& a) {
    return detail::unary_elementwise(
        "neg", a, [](float x) { return -x; }, [](float, float) { return -1.0f; });
}

// y = scale * x + shift
inline Tensor affine(const Tensor& a, float scale, float shift) {
    return detail::unary_elementwise(
        "affine", a, [scale, shift](float x) { return scale * x + shift; },
        [scale](float, float) { return scale; });
}

inline Tensor exp(const Tensor& a) {
    return detail::unary_elementwise(
        "exp", a, [](float x) { return std::exp(x); }, [](float, float y) { return y; });
}

inline Tensor log(const Tensor& a) {
    return detail::unary_elementwise(
        "log", a, [](float x) { return std::log(x); }, [](float x, float) { return 1.0f / x; });
}

inline Tensor sqrt(const Tensor& a) {
    return detail::unary_elementwise(
        "sqrt", a, [](float x) { return std::sqrt(x); },
        [](float, float y) { return y > 0.0f ? 0.5f / y : 0.0f; });
}

inline Tensor abs(const Tensor& a) {
    return detail::unary_elementwise(
        "abs", a, [](float x) { return std::fabs(x); },
        [](float x, float) { return x > 0.0f ? 1.0f : (x < 0.0f ? -1.0f : 0.0f); });
}

inline Tensor relu(const Tensor& a) {
    return detail::unary_elementwise(
        "relu", a, [](float x) { return x > 0.0f ? x : 0.0f; },
        [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary_elementwise(
        "sigmoid", a,
        [](float x) {
            if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
            float e = std::exp(x);
            return e / (1.0f + e);
        },
        [](float, float y) { return y * (1.0f - y); });
}

inline Tensor softplus(const Tensor& a) {
    return detail::unary_elementwise(
        "softplus", a, [](float x) { return std::max(x, 0.0f) + std::log1p(std::exp(-std::fabs(x))); },
        [](float x, float) {
            if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
            float e = std::exp(x);
            return e / (1.0f + e);
        });
}

inline Tensor clamp(const Tensor& a, float lo, float hi) {
    return detail::unary_elementwise(
        "clamp", a, [lo, hi](float x) { return std::min(std::max(x, lo), hi); },
        [lo, hi](float x, float) { return (x >= lo && x <= hi) ? 1.0f : 0.0f; });
}

// --- reductions ---

// Sum over one axis. keepdim keeps a size-1 axis in place.
inline Tensor sum(const Tensor& a, int axis, bool keepdim = false) {
    auto sp = detail::axis_split("sum", a.shape(), axis);
    if (axis < 0) axis += a.ndim();
    Shape os = a.shape();
    if (keepdim)
        os[static_cast<size_t>(axis)] = 1;
    else
        os.erase(os.begin() + axis);
    if (os.empty()) os = {1};
    Tensor out = Tensor::alloc(os);
    float* o = out.mut_data();
    const float* p = a.data();
    parallel_for(sp.outer * sp.inner, [&](int64_t q) {
        int64_t ou = q / sp.inner, in = q % sp.inner;
        const float* base = p + (ou * sp.n) * sp.inner + in;
        double acc = 0.0;
        for (int64_t k = 0; k < sp.n; ++k) acc += base[k * sp.inner];
        o[q] = static_cast<float>(acc);
    });
    autograd::record("sum", out, {a}, [an = a.node(), sp](Node& self) {
        an->ensure_grad();
        const float* g = self.grad.data();
        float* gx = an->grad.data();
        parallel_for(sp.outer * sp.inner, [&](int64_t q) {
            int64_t ou = q / sp.inner, in = q % sp.inner;
            float* base = gx + (ou * sp.n) * sp.inner + in;
            float gv = g[q];
            for (int64_t k = 0; k < sp.n; ++k) base[k * sp.inner] += gv;
        });
    });
    return out;
}

inline Tensor mean(const Tensor& a, int axis, bool keepdim = false) {
    auto sp = detail::axis_split("mean", a.shape(), axis);
    Tensor s = sum(a, axis, keepdim);
    return affine(s, 1.0f / static_cast<float>(sp.n), 0.0f);
}

inline Tensor sum_all(const Tensor& a) {
    Tensor out = Tensor::alloc({1});
    const float* p = a.data();
    double total = parallel_reduce<double>(
        a.numel(), 0.0,
        [&](int64_t lo, int64_t hi) {
            double acc = 0.0;
            for (int64_t i = lo; i < hi; ++i) acc += p[i];
            return acc;
        },
        [](double x, double y) { return x + y; });
    out.mut_data()[0] = static_cast<float>(total);
    autograd::record("sum_all", out, {a}, [an = a.node()](Node& self) {
        an->ensure_grad();
        float g = self.grad[0];
        float* gx = an->grad.data();
        parallel_for(
            static_cast<int64_t>(an->data.size()), [&](int64_t i) { gx[i] += g; }, 16384);
    });
    return out;
}

inline Tensor mean_all(const Tensor& a) {
    return affine(sum_all(a), 1.0f / static_cast<float>(a.numel()), 0.0f);
}

// --- axis softmax / normalize ---

inline Tensor softmax(const Tensor& a, int axis) {
    auto sp = detail::axis_split("softmax", a.shape(), axis);
    Tensor out = Tensor::alloc(a.shape());
    float* o = out.mut_data();
    const float* p = a.data();
    parallel_for(sp.outer * sp.inner, [&](int64_t q) {
        int64_t ou = q / sp.inner, in = q % sp.inner;
        const float* x = p + (ou * sp.n) * sp.inner + in;
        float* y = o + (ou * sp.n) * sp.inner + in;
        float mx = x[0];
        for (int64_t k = 1; k < sp.n; ++k) mx = std::max(mx, x[k * sp.inner]);
        double z = 0.0;
        for (int64_t k = 0; k < sp.n; ++k) {
            float e = std::exp(x[k * sp.inner] - mx);
            y[k * sp.inner] = e;
            z += e;
        }
        float inv = static_cast<float>(1.0 / z);
        for (int64_t k = 0; k < sp.n; ++k) y[k * sp.inner] *= inv;
    });
    autograd::record("softmax", out, {a}, [an = a.node(), sp](Node& self) {
        an->ensure_grad();
        const float* g = self.grad.data();
        const float* y = self.data.data();
        float* gx = an->grad.data();
        parallel_for(sp.outer * sp.inner, [&](int64_t q) {
            int64_t ou = q / sp.inner, in = q % sp.inner;
            int64_t base = (ou * sp.n) * sp.inner + in;
            double dot = 0.0;
            for (int64_t k = 0; k < sp.n; ++k) {
                int64_t i = base + k * sp.inner;
                dot += static_cast<double>(g[i]) * y[i];
            }
            float s = static_cast<float>(dot);
            for (int64_t k = 0; k < sp.n; ++k) {
                int64_t i = base + k * sp.inner;
                gx[i] += y[i] * (g[i] - s);
            }
        });
    });
    return out;
}

// x / max(||x||_2, eps) along one axis.
inline Tensor l2_normalize(const Tensor& a, int axis, float eps = 1e-8f) {
    auto sp = detail::axis_split("l2_normalize", a.shape(), axis);
    Tensor out = Tensor::alloc(a.shape());
    float* o = out.mut_data();
    const float* p = a.data();
    parallel_for(sp.outer * sp.inner, [&](int64_t q) {
        int64_t ou = q / sp.inner, in = q % sp.inner;
        int64_t base = (ou * sp.n) * sp.inner + in;
        double ss = 0.0;
        for (int64_t k = 0; k < sp.n; ++k) {
            double v = p[base + k * sp.inner];
            ss += v * v;
        }
        float denom = std::max(static_cast<float>(std::sqrt(ss)), eps);
        float inv = 1.0f / denom;
        for (int64_t k = 0; k < sp.n; ++k) o[base + k * sp.inner] = p[base + k * sp.inner] * inv;
    });
    autograd::record("l2_normalize", out, {a}, [an = a.node(), sp, eps](Node& self) {
        an->ensure_grad();
        const float* g = self.grad.data();
        const float* x = an->data.data();
        float* gx = an->grad.data();
        parallel_for(sp.outer * sp.inner, [&](int64_t q) {
            int64_t ou = q / sp.inner, in = q % sp.inner;
            int64_t base = (ou * sp.n) * sp.inner + in;
            double ss = 0.0, gdotx = 0.0;
            for (int64_t k = 0; k < sp.n; ++k) {
                int64_t i = base + k * sp.inner;
                ss += static_cast<double>(x[i]) * x[i];
                gdotx += static_cast<double>(g[i]) * x[i];
            }
            double norm = std::sqrt(ss);
            double denom = std::max(norm, static_cast<double>(eps));
            double inv = 1.0 / denom;
            // Below eps the denominator is the constant eps.
            double proj = norm > eps ? gdotx * inv * inv * inv : 0.0;
            for (int64_t k = 0; k < sp.n; ++k) {
                int64_t i = base + k * sp.inner;
                gx[i] += static_cast<float>(g[i] * inv - x[i] * proj);
            }
        });
    });
    return out;
}

// --- shape ops ---

inline Tensor reshape(const Tensor& a, Shape ns) {
    int64_t known = 1;
    int infer = -1;
    for (size_t i = 0; i < ns.size(); ++i) {
        if (ns[i] == -1) {
            if (infer >= 0) throw ShapeError("reshape: multiple -1 dims");
            infer = static_cast<int>(i);
        } else {
            known *= ns[i];
        }
    }
    if (infer >= 0) {
        if (known == 0 || a.numel() % known != 0)
            throw ShapeError("reshape: cannot infer dim for " + shape_str(a.shape()) + " -> " + shape_str(ns));
        ns[static_cast<size_t>(infer)] = static_cast<int>(a.numel() / known);
    }
    if (numel_of(ns) != a.numel())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(ns) + " changes element count");
    Tensor out = Tensor::from_data(ns, a.vec());
    autograd::record("reshape", out, {a}, [an = a.node()](Node& self) {
        an->ensure_grad();
        const float* g = self.grad.data();
        float* gx = an->grad.data();
        parallel_for(
            static_cast<int64_t>(self.data.size()), [&](int64_t i) { gx[i] += g[i]; }, 16384);
    });
    return out;
}

inline Tensor permute(const Tensor& a, const std::vector<int>& perm) {
    int nd = a.ndim();
    if (static_cast<int>(perm.size()) != nd) throw ShapeError("permute: perm rank mismatch");
    std::vector<bool> used(static_cast<size_t>(nd), false);
    Shape os(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) {
        int p = perm[static_cast<size_t>(i)];
        if (p < 0 || p >= nd || used[static_cast<size_t>(p)]) throw ShapeError("permute: invalid perm");
        used[static_cast<size_t>(p)] = true;
        os[static_cast<size_t>(i)] = a.dim(p);
    }
    std::vector<int64_t> in_strides(static_cast<size_t>(nd));
    int64_t s = 1;
    for (int i = nd - 1; i >= 0; --i) {
        in_strides[static_cast<size_t>(i)] = s;
        s *= a.dim(i);
    }
    std::vector<int64_t> strides(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) strides[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(perm[static_cast<size_t>(i)])];

    Tensor out = Tensor::alloc(os);
    // emit copies its state so the backward closure can outlive this frame.
    auto emit = [strides, os, nd, total = out.numel()](auto&& f) {
        std::vector<int> idx(static_cast<size_t>(nd), 0);
        int64_t ii = 0;
        for (int64_t oi = 0; oi < total; ++oi) {
            f(oi, ii);
            for (int d = nd - 1; d >= 0; --d) {
                ii += strides[static_cast<size_t>(d)];
                if (++idx[static_cast<size_t>(d)] < os[static_cast<size_t>(d)]) break;
                ii -= strides[static_cast<size_t>(d)] * os[static_cast<size_t>(d)];
                idx[static_cast<size_t>(d)] = 0;
            }
        }
    };
    {
        float* o = out.mut_data();
        const float* p = a.data();
        emit([&](int64_t oi, int64_t ii) { o[oi] = p[ii]; });
    }
    autograd::record("permute", out, {a}, [an = a.node(), emit](Node& self) {
        an->ensure_grad();
        const float* g = self.grad.data();
        float* gx = an->grad.data();
        emit([&](int64_t oi, int64_t ii) { gx[ii] += g[oi]; });
    });
    return out;
}

// Contiguous slice along one axis.
inline Tensor slice(const Tensor& a, int axis, int start, int len) {
    auto sp = detail::axis_split("slice", a.shape(), axis);
    if (axis < 0) axis += a.ndim();
    if (start < 0 || len <= 0 || start + len > a.dim(axis))
        throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") out of bounds for axis size " + std::to_string(a.dim(axis)));
    Shape os = a.shape();
    os[static_cast<size_t>(axis)] = len;
    Tensor out = Tensor::alloc(os);
    float* o = out.mut_data();
    const float* p = a.data();
    parallel_for(sp.outer, [&](int64_t ou) {
        const float* src = p + (ou * sp.n + start) * sp.inner;
        float* dst = o + ou * len * sp.inner;
        std::memcpy(dst, src, static_cast<size_t>(len * sp.inner) * sizeof(float));
    });
    autograd::record("slice", out, {a}, [an = a.node(), sp, start, len](Node& self) {
        an->ensure_grad();
        const float* g = self.grad.data();
        float* gx = an->grad.data();
        parallel_for(sp.outer, [&](int64_t ou) {
            float* dst = gx + (ou * sp.n + start) * sp.inner;
            const float* src = g + ou * len * sp.inner;
            for (int64_t i = 0; i < len * sp.inner; ++i) dst[i] += src[i];
        });
    });
    return out;
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    Shape os = parts[0].shape();
    int nd = parts[0].ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) throw ShapeError("concat: axis out of range");
    int total_axis = 0;
    for (const Tensor& t : parts) {
        if (t.ndim() != nd) throw ShapeError("concat: rank mismatch");
        for (int d = 0; d < nd; ++d)
            if (d != axis && t.dim(d) != os[static_cast<size_t>(d)])
                throw ShapeError("concat: shape mismatch " + shape_str(t.shape()) + " vs " + shape_str(os));
        total_axis += t.dim(axis);
    }
    os[static_cast<size_t>(axis)] = total_axis;
    auto sp = detail::axis_split("concat", os, axis);
    Tensor out = Tensor::alloc(os);
    float* o = out.mut_data();
    int offset = 0;
    for (const Tensor& t : parts) {
        int len = t.dim(axis);
        const float* p = t.data();
        for (int64_t ou = 0; ou < sp.outer; ++ou)
            std::memcpy(o + (ou * sp.n + offset) * sp.inner, p + ou * len * sp.inner,
                        static_cast<size_t>(len * sp.inner) * sizeof(float));
        offset += len;
    }
    std::vector<NodePtr> nodes;
    std::vector<int> lens;
    bool needs = false;
    for (const Tensor& t : parts) {
        nodes.push_back(t.node());
        lens.push_back(t.dim(axis));
        needs |= t.needs_grad();
    }
    if (needs) {
        Node& n = *out.node();
        n.op = "concat";
        n.needs_grad = true;
        n.parents = nodes;
        n.backward_fn = [nodes, lens, sp](Node& self) {
            const float* g = self.grad.data();
            int offset2 = 0;
            for (size_t pi = 0; pi < nodes.size(); ++pi) {
                int len = lens[pi];
                Node* pn = nodes[pi].get();
                if (pn->needs_grad) {
                    pn->ensure_grad();
                    float* gx = pn->grad.data();
                    for (int64_t ou = 0; ou < sp.outer; ++ou) {
                        const float* src = g + (ou * sp.n + offset2) * sp.inner;
                        float* dst = gx + ou * len * sp.inner;
                        for (int64_t i = 0; i < len * sp.inner; ++i) dst[i] += src[i];
                    }
                }
                offset2 += len;
            }
        };
    } else {
        out.node()->op = "concat";
    }
    return out;
}

}  // namespace mugs
