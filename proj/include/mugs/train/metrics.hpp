#pragma once

// Double-precision evaluation metrics, implemented independently of the
// autodiff tensor ops so they can arbitrate the float training pipeline.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace mugs::metrics {

// Peak signal-to-noise ratio for images in [0, 1], capped at 99 dB.
inline double psnr(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("psnr: inputs must be equal-sized and non-empty");
    double se = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, -10.0 * std::log10(mse));
}

// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5) over
// the fully covered interior, averaged across channels. Inputs are flattened
// (c, h, w) images in [0, 1].
inline double ssim(const std::vector<float>& a, const std::vector<float>& b, int c, int h, int w,
                   int ksize = 11, double sigma = 1.5) {
    if (a.size() != b.size() || a.size() != static_cast<size_t>(c) * h * w)
        throw std::invalid_argument("ssim: size mismatch with (c, h, w)");
    if (h < ksize || w < ksize) throw std::invalid_argument("ssim: image smaller than window");
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    std::vector<double> k1d(ksize);
    const double half = (ksize - 1) / 2.0;
    double ksum = 0.0;
    for (int i = 0; i < ksize; ++i) {
        const double d = i - half;
        k1d[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        ksum += k1d[i];
    }
    for (double& v : k1d) v /= ksum;
    const int ho = h - ksize + 1;
    const int wo = w - ksize + 1;
    double total = 0.0;
    for (int ch = 0; ch < c; ++ch) {
        const float* pa = a.data() + static_cast<size_t>(ch) * h * w;
        const float* pb = b.data() + static_cast<size_t>(ch) * h * w;
        for (int y = 0; y < ho; ++y) {
            for (int x = 0; x < wo; ++x) {
                double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
                for (int ky = 0; ky < ksize; ++ky) {
                    for (int kx = 0; kx < ksize; ++kx) {
                        const double wgt = k1d[ky] * k1d[kx];
                        const double va = pa[(y + ky) * w + (x + kx)];
                        const double vb = pb[(y + ky) * w + (x + kx)];
                        ma += wgt * va;
                        mb += wgt * vb;
                        saa += wgt * va * va;
                        sbb += wgt * vb * vb;
                        sab += wgt * va * vb;
                    }
                }
                const double var_a = saa - ma * ma;
                const double var_b = sbb - mb * mb;
                const double cov = sab - ma * mb;
                const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
                const double den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
                total += num / den;
            }
        }
    }
    return total / (static_cast<double>(c) * ho * wo);
}

// Lower median of the strictly positive entries; 0 when there are none.
inline double median_positive_depth(const std::vector<float>& depth) {
    std::vector<float> pos;
    pos.reserve(depth.size());
    for (float v : depth)
        if (v > 0.0f) pos.push_back(v);
    if (pos.empty()) return 0.0;
    const size_t mid = (pos.size() - 1) / 2;
    std::nth_element(pos.begin(), pos.begin() + mid, pos.end());
    return static_cast<double>(pos[mid]);
}

struct DepthMetrics {
    double abs_err = 0.0;  // mean |pred - gt| over valid pixels
    double acc_2 = 0.0;    // fraction of valid pixels within 2% of the median valid depth
    double acc_10 = 0.0;   // fraction within 10%
    int valid = 0;         // pixels with positive ground-truth depth
};

// Valid pixels are those with positive ground-truth depth; accuracy
// thresholds are fractions of the evaluated view's median valid depth.
inline DepthMetrics depth_metrics(const std::vector<float>& pred, const std::vector<float>& gt) {
    if (pred.size() != gt.size())
        throw std::invalid_argument("depth_metrics: prediction/ground-truth size mismatch");
    DepthMetrics m;
    const double med = median_positive_depth(gt);
    if (med <= 0.0) return m;
    const double t2 = 0.02 * med;
    const double t10 = 0.10 * med;
    double err_sum = 0.0;
    int n2 = 0, n10 = 0;
    for (size_t i = 0; i < gt.size(); ++i) {
        if (!(gt[i] > 0.0f)) continue;
        const double err = std::abs(static_cast<double>(pred[i]) - static_cast<double>(gt[i]));
        err_sum += err;
        if (err < t2) ++n2;
        if (err < t10) ++n10;
        ++m.valid;
    }
    if (m.valid == 0) return m;
    m.abs_err = err_sum / m.valid;
    m.acc_2 = static_cast<double>(n2) / m.valid;
    m.acc_10 = static_cast<double>(n10) / m.valid;
    return m;
}

}  // namespace mugs::metrics
