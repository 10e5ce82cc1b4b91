#pragma once

// Dense matmul and batched matmul. Row-major; inner loops run along
// contiguous rows so they vectorize. Gradient accumulation partitions output
// rows per thread, keeping results independent of thread count.

#include "mugs/core/ops.hpp"
#include "mugs/core/parallel.hpp"
#include "mugs/core/tensor.hpp"

namespace mugs {

namespace detail {

inline void mm_forward(const float* A, const float* B, float* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        float* c = C + static_cast<int64_t>(i) * n;
        std::fill(c, c + n, 0.0f);
        const float* a = A + static_cast<int64_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            float av = a[p];
            if (av == 0.0f) continue;
            const float* b = B + static_cast<int64_t>(p) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// dA += G B^T ; dB += A^T G
inline void mm_backward(const float* A, const float* B, const float* G, float* dA, float* dB, int m, int k,
                        int n) {
    if (dA) {
        for (int i = 0; i < m; ++i) {
            const float* g = G + static_cast<int64_t>(i) * n;
            float* da = dA + static_cast<int64_t>(i) * k;
            for (int p = 0; p < k; ++p) {
                const float* b = B + static_cast<int64_t>(p) * n;
                double acc = 0.0;
                for (int j = 0; j < n; ++j) acc += static_cast<double>(g[j]) * b[j];
                da[p] += static_cast<float>(acc);
            }
        }
    }
    if (dB) {
        for (int p = 0; p < k; ++p) {
            float* db = dB + static_cast<int64_t>(p) * n;
            for (int i = 0; i < m; ++i) {
                float av = A[static_cast<int64_t>(i) * k + p];
                if (av == 0.0f) continue;
                const float* g = G + static_cast<int64_t>(i) * n;
                for (int j = 0; j < n; ++j) db[j] += av * g[j];
            }
        }
    }
}

}  // namespace detail

// (m,k) x (k,n) -> (m,n)
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::alloc({m, n});
    detail::mm_forward(a.data(), b.data(), out.mut_data(), m, k, n);
    autograd::record("matmul", out, {a, b}, [an = a.node(), bn = b.node(), m, k, n](Node& self) {
        float* dA = nullptr;
        float* dB = nullptr;
        if (an->needs_grad) {
            an->ensure_grad();
            dA = an->grad.data();
        }
        if (bn->needs_grad) {
            bn->ensure_grad();
            dB = bn->grad.data();
        }
        detail::mm_backward(an->data.data(), bn->data.data(), self.grad.data(), dA, dB, m, k, n);
    });
    return out;
}

// (B,m,k) x (B,k,n) -> (B,m,n)
inline Tensor bmm(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
        throw ShapeError("bmm: incompatible " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    int B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    Tensor out = Tensor::alloc({B, m, n});
    {
        const float* pa = a.data();
        const float* pb = b.data();
        float* po = out.mut_data();
        parallel_for(
            B,
            [&](int64_t i) {
                detail::mm_forward(pa + i * m * k, pb + i * k * n, po + i * m * n, m, k, n);
            },
            1);
    }
    autograd::record("bmm", out, {a, b}, [an = a.node(), bn = b.node(), B, m, k, n](Node& self) {
        if (an->needs_grad) an->ensure_grad();
        if (bn->needs_grad) bn->ensure_grad();
        const float* pa = an->data.data();
        const float* pb = bn->data.data();
        const float* g = self.grad.data();
        float* dA = an->needs_grad ? an->grad.data() : nullptr;
        float* dB = bn->needs_grad ? bn->grad.data() : nullptr;
        parallel_for(
            B,
            [&](int64_t i) {
                detail::mm_backward(pa + i * m * k, pb + i * k * n, g + i * m * n,
                                    dA ? dA + i * m * k : nullptr, dB ? dB + i * k * n : nullptr, m, k, n);
            },
            1);
    });
    return out;
}

// Fully connected: x (rows, in) * w (in, out) + bias (out).
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    Tensor y = matmul(x, w);
    if (!bias.defined()) return y;
    return add(y, reshape(bias, {1, bias.dim(0)}));
}

}  // namespace mugs
