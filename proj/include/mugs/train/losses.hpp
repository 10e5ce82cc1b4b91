#pragma once

// Photometric training losses: L1, a Gaussian-window structural-similarity
// term, and a multi-scale image-gradient penalty that keeps edges sharp where
// plain L1 would blur them. All return scalar tensors on the autodiff tape.

#include "mugs/core/conv.hpp"
#include "mugs/core/ops.hpp"

namespace mugs {

inline Tensor l1_loss(const Tensor& a, const Tensor& b) {
    return mean_all(abs(sub(a, b)));
}

// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
// evaluated on the fully covered interior so no border policy is needed.
// Inputs are (C, H, W) images in [0, 1]; H and W must reach the window size.
inline Tensor ssim_mean(const Tensor& a, const Tensor& b, int ksize = 11, float sigma = 1.5f) {
    const float c1 = 0.01f * 0.01f;
    const float c2 = 0.03f * 0.03f;
    Tensor mu_a = gaussian_blur2d(a, ksize, sigma);
    Tensor mu_b = gaussian_blur2d(b, ksize, sigma);
    Tensor var_a = sub(gaussian_blur2d(mul(a, a), ksize, sigma), mul(mu_a, mu_a));
    Tensor var_b = sub(gaussian_blur2d(mul(b, b), ksize, sigma), mul(mu_b, mu_b));
    Tensor cov = sub(gaussian_blur2d(mul(a, b), ksize, sigma), mul(mu_a, mu_b));
    Tensor num = mul(affine(mul(mu_a, mu_b), 2.0f, c1), affine(cov, 2.0f, c2));
    Tensor den = mul(affine(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), 1.0f, c1),
                     affine(add(var_a, var_b), 1.0f, c2));
    return mean_all(div(num, den));
}

inline Tensor ssim_loss(const Tensor& a, const Tensor& b) {
    return affine(ssim_mean(a, b), -1.0f, 1.0f);
}

// L1 between horizontal/vertical finite differences at `scales` dyadic
// resolutions (the image itself, then repeated 2x average pooling).
inline Tensor gradient_loss(const Tensor& a, const Tensor& b, int scales = 3) {
    Tensor total;
    Tensor ca = a;
    Tensor cb = b;
    for (int s = 0; s < scales; ++s) {
        if (s > 0) {
            ca = avg_pool2d(ca);
            cb = avg_pool2d(cb);
        }
        const int h = ca.dim(1);
        const int w = ca.dim(2);
        if (h < 2 || w < 2) break;
        Tensor dxa = sub(slice(ca, 2, 1, w - 1), slice(ca, 2, 0, w - 1));
        Tensor dxb = sub(slice(cb, 2, 1, w - 1), slice(cb, 2, 0, w - 1));
        Tensor dya = sub(slice(ca, 1, 1, h - 1), slice(ca, 1, 0, h - 1));
        Tensor dyb = sub(slice(cb, 1, 1, h - 1), slice(cb, 1, 0, h - 1));
        Tensor term = add(l1_loss(dxa, dxb), l1_loss(dya, dyb));
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

}  // namespace mugs
