#pragma once

// Finite-difference gradient checking.
//
// Every differentiable op is checked against an independent double-precision
// forward reference (naive loops, no shared code with the float32 kernels).
// Numeric derivatives use central differences with h = 1e-3 on the double
// reference, so finite-difference noise stays far below the pass threshold.
// Error metric per element: |analytic - numeric| / max(|numeric|, 1e-4).
//
// Primitive ops must stay below 1e-3. Composite cases registered elsewhere
// (U-Net, attention, heads, rasterizer) use 1e-2.

#include <functional>
#include <string>
#include <vector>

#include "mugs/core/conv.hpp"
#include "mugs/core/linalg.hpp"
#include "mugs/core/ops.hpp"
#include "mugs/core/rng.hpp"
#include "mugs/core/sample.hpp"
#include "mugs/core/tensor.hpp"

namespace mugs::gradcheck {

using dvec = std::vector<double>;

// --- double-precision naive references ---

namespace ref {

inline dvec conv2d(const dvec& x, int Cin, int H, int W, const dvec& w, int Cout, int kh, int kw,
                   const dvec& b, int stride, int ph, int pw) {
    int Ho = (H + 2 * ph - kh) / stride + 1;
    int Wo = (W + 2 * pw - kw) / stride + 1;
    dvec o(static_cast<size_t>(Cout) * Ho * Wo, 0.0);
    for (int oc = 0; oc < Cout; ++oc)
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                double acc = b.empty() ? 0.0 : b[static_cast<size_t>(oc)];
                for (int ic = 0; ic < Cin; ++ic)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            int iy = oy * stride + ky - ph;
                            int ix = ox * stride + kx - pw;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            acc += x[(static_cast<size_t>(ic) * H + iy) * W + ix] *
                                   w[((static_cast<size_t>(oc) * Cin + ic) * kh + ky) * kw + kx];
                        }
                o[(static_cast<size_t>(oc) * Ho + oy) * Wo + ox] = acc;
            }
    return o;
}

inline dvec conv3d(const dvec& x, int Cin, int D, int H, int W, const dvec& w, int Cout, int kd, int kh,
                   int kw, const dvec& b) {
    int pd = (kd - 1) / 2, ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    dvec o(static_cast<size_t>(Cout) * D * H * W, 0.0);
    for (int oc = 0; oc < Cout; ++oc)
        for (int od = 0; od < D; ++od)
            for (int oy = 0; oy < H; ++oy)
                for (int ox = 0; ox < W; ++ox) {
                    double acc = b.empty() ? 0.0 : b[static_cast<size_t>(oc)];
                    for (int ic = 0; ic < Cin; ++ic)
                        for (int kz = 0; kz < kd; ++kz)
                            for (int ky = 0; ky < kh; ++ky)
                                for (int kx = 0; kx < kw; ++kx) {
                                    int id = od + kz - pd, iy = oy + ky - ph, ix = ox + kx - pw;
                                    if (id < 0 || id >= D || iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                    acc += x[((static_cast<size_t>(ic) * D + id) * H + iy) * W + ix] *
                                           w[(((static_cast<size_t>(oc) * Cin + ic) * kd + kz) * kh + ky) * kw + kx];
                                }
                    o[((static_cast<size_t>(oc) * D + od) * H + oy) * W + ox] = acc;
                }
    return o;
}

inline dvec softmax(const dvec& x, int64_t outer, int64_t n, int64_t inner) {
    dvec y(x.size());
    for (int64_t ou = 0; ou < outer; ++ou)
        for (int64_t in = 0; in < inner; ++in) {
            int64_t base = ou * n * inner + in;
            double mx = x[static_cast<size_t>(base)];
            for (int64_t k = 1; k < n; ++k) mx = std::max(mx, x[static_cast<size_t>(base + k * inner)]);
            double z = 0.0;
            for (int64_t k = 0; k < n; ++k) z += std::exp(x[static_cast<size_t>(base + k * inner)] - mx);
            for (int64_t k = 0; k < n; ++k)
                y[static_cast<size_t>(base + k * inner)] = std::exp(x[static_cast<size_t>(base + k * inner)] - mx) / z;
        }
    return y;
}

inline dvec matmul(const dvec& a, const dvec& b, int m, int k, int n) {
    dvec c(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p)
            for (int j = 0; j < n; ++j)
                c[static_cast<size_t>(i) * n + j] += a[static_cast<size_t>(i) * k + p] * b[static_cast<size_t>(p) * n + j];
    return c;
}

}  // namespace ref

// --- harness ---

struct Problem {
    // Fresh float leaves for the analytic pass; same values promoted to
    // double feed the reference.
    std::vector<Tensor> inputs;
    std::function<Tensor(const std::vector<Tensor>&)> forward_float;
    std::function<dvec(const std::vector<dvec>&)> forward_double;
    // Optional subset of input indices to probe (empty = all).
    std::vector<int> probe_inputs;
};

inline double max_rel_err(Problem& prob, Rng& rng, double h = 1e-3) {
    for (Tensor& t : prob.inputs) t.node()->requires_grad = t.node()->needs_grad = true;
    Tensor y = prob.forward_float(prob.inputs);

    std::vector<float> r(static_cast<size_t>(y.numel()));
    for (auto& v : r) v = static_cast<float>(rng.normal());
    Tensor rproj = Tensor::from_data(y.shape(), r);
    Tensor loss = sum_all(mul(y, rproj));
    for (Tensor& t : prob.inputs) t.zero_grad();
    backward(loss);

    std::vector<dvec> dx;
    for (const Tensor& t : prob.inputs) dx.emplace_back(t.data(), t.data() + t.numel());
    auto eval = [&]() {
        dvec out = prob.forward_double(dx);
        double acc = 0.0;
        for (size_t i = 0; i < out.size(); ++i) acc += out[i] * r[i];
        return acc;
    };

    double worst = 0.0;
    std::vector<int> which = prob.probe_inputs;
    if (which.empty())
        for (size_t i = 0; i < prob.inputs.size(); ++i) which.push_back(static_cast<int>(i));
    for (int pi : which) {
        const std::vector<float> g = prob.inputs[static_cast<size_t>(pi)].grad();
        dvec& x = dx[static_cast<size_t>(pi)];
        for (size_t j = 0; j < x.size(); ++j) {
            double keep = x[j];
            x[j] = keep + h;
            double lp = eval();
            x[j] = keep - h;
            double lm = eval();
            x[j] = keep;
            double numeric = (lp - lm) / (2.0 * h);
            double err = std::abs(static_cast<double>(g[j]) - numeric) / std::max(std::abs(numeric), 1e-4);
            worst = std::max(worst, err);
        }
    }
    return worst;
}

struct Case {
    std::string name;
    double threshold;
    std::function<double(uint64_t)> run;  // seed -> max rel err
};

struct Report {
    std::string op;
    double max_err = 0.0;
    double threshold = 0.0;
    bool pass = true;
};

namespace detail {

inline Tensor rand_tensor(Rng& rng, Shape s, double lo, double hi) {
    std::vector<float> v(static_cast<size_t>(numel_of(s)));
    for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
    return Tensor::from_data(std::move(s), std::move(v));
}

// Magnitudes in [0.3, 1.3] with random sign: keeps gradients away from zero
// and inputs away from the kinks of abs/relu/clamp.
inline Tensor rand_signed(Rng& rng, Shape s) {
    std::vector<float> v(static_cast<size_t>(numel_of(s)));
    for (auto& x : v) x = static_cast<float>(rng.uniform(0.3, 1.3) * (rng.uniform() < 0.5 ? -1.0 : 1.0));
    return Tensor::from_data(std::move(s), std::move(v));
}

template <typename FF, typename FD>
Case unary_case(const char* name, FF ff, FD fd, bool positive = false, bool signed_away = false) {
    std::string n = name;
    return Case{n, 1e-3, [n, ff, fd, positive, signed_away](uint64_t seed) {
                    Rng rng(seed * 7919 + 13);
                    Problem p;
                    Shape s{2, 3, 5};
                    p.inputs = {positive ? rand_tensor(rng, s, 0.2, 1.8)
                                         : (signed_away ? rand_signed(rng, s) : rand_tensor(rng, s, -1.5, 1.5))};
                    p.forward_float = [ff](const std::vector<Tensor>& in) { return ff(in[0]); };
                    p.forward_double = [fd](const std::vector<dvec>& in) {
                        dvec y(in[0].size());
                        for (size_t i = 0; i < y.size(); ++i) y[i] = fd(in[0][i]);
                        return y;
                    };
                    return max_rel_err(p, rng);
                }};
}

template <typename FF, typename FD>
Case binary_case(const char* name, FF ff, FD fd, bool away_from_zero) {
    std::string n = name;
    return Case{n, 1e-3, [n, ff, fd, away_from_zero](uint64_t seed) {
                    Rng rng(seed * 104729 + 7);
                    Problem p;
                    // One exact-shape pair and one broadcast pair per seed.
                    double worst = 0.0;
                    for (int mode = 0; mode < 2; ++mode) {
                        Shape sa{2, 3, 4};
                        Shape sb = mode == 0 ? Shape{2, 3, 4} : Shape{3, 1};
                        Problem q;
                        q.inputs = {away_from_zero ? rand_signed(rng, sa) : rand_tensor(rng, sa, -1.5, 1.5),
                                    away_from_zero ? rand_signed(rng, sb) : rand_tensor(rng, sb, -1.5, 1.5)};
                        q.forward_float = [ff](const std::vector<Tensor>& in) { return ff(in[0], in[1]); };
                        q.forward_double = [fd, sa, sb, mode](const std::vector<dvec>& in) {
                            dvec y(in[0].size());
                            if (mode == 0) {
                                for (size_t i = 0; i < y.size(); ++i) y[i] = fd(in[0][i], in[1][i]);
                            } else {
                                // (2,3,4) vs (3,1) -> b index is the middle axis
                                for (int a = 0; a < 2; ++a)
                                    for (int bidx = 0; bidx < 3; ++bidx)
                                        for (int c = 0; c < 4; ++c)
                                            y[static_cast<size_t>((a * 3 + bidx) * 4 + c)] =
                                                fd(in[0][static_cast<size_t>((a * 3 + bidx) * 4 + c)],
                                                   in[1][static_cast<size_t>(bidx)]);
                            }
                            return y;
                        };
                        worst = std::max(worst, max_rel_err(q, rng));
                    }
                    return worst;
                }};
}

}  // namespace detail

// Primitive tensor-core cases. Composite cases (U-Net, attention, heads,
// rasterizer) are appended by mugs/check/suite.hpp.
inline std::vector<Case> primitive_cases() {
    using detail::rand_signed;
    using detail::rand_tensor;
    std::vector<Case> cases;

    cases.push_back(detail::binary_case(
        "add", [](const Tensor& a, const Tensor& b) { return add(a, b); },
        [](double a, double b) { return a + b; }, false));
    cases.push_back(detail::binary_case(
        "sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); },
        [](double a, double b) { return a - b; }, false));
    cases.push_back(detail::binary_case(
        "mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); },
        [](double a, double b) { return a * b; }, true));
    cases.push_back(detail::binary_case(
        "div", [](const Tensor& a, const Tensor& b) { return div(a, b); },
        [](double a, double b) { return a / b; }, true));

    cases.push_back(detail::unary_case(
        "neg", [](const Tensor& x) { return neg(x); }, [](double x) { return -x; }));
    cases.push_back(detail::unary_case(
        "affine", [](const Tensor& x) { return affine(x, 1.7f, -0.3f); },
        [](double x) { return 1.7f * x + (-0.3f); }));
    cases.push_back(detail::unary_case(
        "exp", [](const Tensor& x) { return mugs::exp(x); }, [](double x) { return std::exp(x); }));
    cases.push_back(detail::unary_case(
        "log", [](const Tensor& x) { return mugs::log(x); }, [](double x) { return std::log(x); }, true));
    cases.push_back(detail::unary_case(
        "sqrt", [](const Tensor& x) { return mugs::sqrt(x); }, [](double x) { return std::sqrt(x); }, true));
    cases.push_back(detail::unary_case(
        "abs", [](const Tensor& x) { return mugs::abs(x); }, [](double x) { return std::abs(x); }, false,
        true));
    cases.push_back(detail::unary_case(
        "relu", [](const Tensor& x) { return relu(x); }, [](double x) { return x > 0 ? x : 0.0; }, false,
        true));
    cases.push_back(detail::unary_case(
        "sigmoid", [](const Tensor& x) { return sigmoid(x); },
        [](double x) { return 1.0 / (1.0 + std::exp(-x)); }));
    cases.push_back(detail::unary_case(
        "softplus", [](const Tensor& x) { return softplus(x); },
        [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }));
    // Bounds at +-0.8; magnitudes sampled outside (0.7, 0.9) keep every
    // element a safe distance from both kinks while covering both branches.
    cases.push_back(Case{"clamp", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 7919 + 13);
                             std::vector<float> v(2 * 3 * 5);
                             for (auto& x : v) {
                                 double m = rng.uniform(0.3, 1.1);
                                 if (m > 0.7) m += 0.2;
                                 x = static_cast<float>(m * (rng.uniform() < 0.5 ? -1.0 : 1.0));
                             }
                             Problem p;
                             p.inputs = {Tensor::from_data({2, 3, 5}, std::move(v))};
                             p.forward_float = [](const std::vector<Tensor>& in) {
                                 return clamp(in[0], -0.8f, 0.8f);
                             };
                             p.forward_double = [](const std::vector<dvec>& in) {
                                 dvec y(in[0].size());
                                 for (size_t i = 0; i < y.size(); ++i)
                                     y[i] = std::min(std::max(in[0][i], -0.8), 0.8);
                                 return y;
                             };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"softmax", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 31 + 5);
                             Problem p;
                             p.inputs = {detail::rand_tensor(rng, {3, 4, 2}, -1.2, 1.2)};
                             p.forward_float = [](const std::vector<Tensor>& in) { return softmax(in[0], 1); };
                             p.forward_double = [](const std::vector<dvec>& in) { return ref::softmax(in[0], 3, 4, 2); };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"l2_normalize", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 37 + 11);
                             Problem p;
                             p.inputs = {detail::rand_signed(rng, {4, 3, 2})};
                             p.forward_float = [](const std::vector<Tensor>& in) { return l2_normalize(in[0], 0); };
                             p.forward_double = [](const std::vector<dvec>& in) {
                                 const dvec& x = in[0];
                                 dvec y(x.size());
                                 for (int in2 = 0; in2 < 6; ++in2) {
                                     double ss = 0.0;
                                     for (int k = 0; k < 4; ++k) ss += x[static_cast<size_t>(k * 6 + in2)] * x[static_cast<size_t>(k * 6 + in2)];
                                     double denom = std::max(std::sqrt(ss), 1e-8);
                                     for (int k = 0; k < 4; ++k) y[static_cast<size_t>(k * 6 + in2)] = x[static_cast<size_t>(k * 6 + in2)] / denom;
                                 }
                                 return y;
                             };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"sum", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 41 + 3);
                             Problem p;
                             p.inputs = {detail::rand_tensor(rng, {3, 4, 2}, -1.0, 1.0)};
                             p.forward_float = [](const std::vector<Tensor>& in) { return sum(in[0], 1); };
                             p.forward_double = [](const std::vector<dvec>& in) {
                                 dvec y(6, 0.0);
                                 for (int a = 0; a < 3; ++a)
                                     for (int k = 0; k < 4; ++k)
                                         for (int c = 0; c < 2; ++c) y[static_cast<size_t>(a * 2 + c)] += in[0][static_cast<size_t>((a * 4 + k) * 2 + c)];
                                 return y;
                             };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"mean", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 43 + 9);
                             Problem p;
                             p.inputs = {detail::rand_tensor(rng, {2, 5, 3}, -1.0, 1.0)};
                             p.forward_float = [](const std::vector<Tensor>& in) { return mean(in[0], 1, true); };
                             p.forward_double = [](const std::vector<dvec>& in) {
                                 dvec y(6, 0.0);
                                 for (int a = 0; a < 2; ++a)
                                     for (int k = 0; k < 5; ++k)
                                         for (int c = 0; c < 3; ++c) y[static_cast<size_t>(a * 3 + c)] += in[0][static_cast<size_t>((a * 5 + k) * 3 + c)] / 5.0;
                                 return y;
                             };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"sum_all", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 47 + 1);
                             Problem p;
                             p.inputs = {detail::rand_tensor(rng, {4, 5}, -1.0, 1.0)};
                             p.forward_float = [](const std::vector<Tensor>& in) { return sum_all(in[0]); };
                             p.forward_double = [](const std::vector<dvec>& in) {
                                 double s = 0.0;
                                 for (double v : in[0]) s += v;
                                 return dvec{s};
                             };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"mean_all", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 53 + 2);
                             Problem p;
                             p.inputs = {detail::rand_tensor(rng, {3, 6}, -1.0, 1.0)};
                             p.forward_float = [](const std::vector<Tensor>& in) { return mean_all(in[0]); };
                             p.forward_double = [](const std::vector<dvec>& in) {
                                 double s = 0.0;
                                 for (double v : in[0]) s += v;
                                 return dvec{s / 18.0};
                             };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"reshape", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 59 + 8);
                             Problem p;
                             p.inputs = {detail::rand_tensor(rng, {3, 4}, -1.0, 1.0)};
                             p.forward_float = [](const std::vector<Tensor>& in) { return reshape(in[0], {2, 6}); };
                             p.forward_double = [](const std::vector<dvec>& in) { return in[0]; };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"permute", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 61 + 4);
                             Problem p;
                             p.inputs = {detail::rand_tensor(rng, {2, 3, 4}, -1.0, 1.0)};
                             p.forward_float = [](const std::vector<Tensor>& in) { return permute(in[0], {2, 0, 1}); };
                             p.forward_double = [](const std::vector<dvec>& in) {
                                 dvec y(24);
                                 for (int a = 0; a < 2; ++a)
                                     for (int b = 0; b < 3; ++b)
                                         for (int c = 0; c < 4; ++c) y[static_cast<size_t>((c * 2 + a) * 3 + b)] = in[0][static_cast<size_t>((a * 3 + b) * 4 + c)];
                                 return y;
                             };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"slice", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 67 + 6);
                             Problem p;
                             p.inputs = {detail::rand_tensor(rng, {2, 5, 3}, -1.0, 1.0)};
                             p.forward_float = [](const std::vector<Tensor>& in) { return slice(in[0], 1, 1, 3); };
                             p.forward_double = [](const std::vector<dvec>& in) {
                                 dvec y;
                                 for (int a = 0; a < 2; ++a)
                                     for (int k = 1; k < 4; ++k)
                                         for (int c = 0; c < 3; ++c) y.push_back(in[0][static_cast<size_t>((a * 5 + k) * 3 + c)]);
                                 return y;
                             };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"concat", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 71 + 12);
                             Problem p;
                             p.inputs = {detail::rand_tensor(rng, {2, 2, 3}, -1.0, 1.0),
                                         detail::rand_tensor(rng, {2, 4, 3}, -1.0, 1.0)};
                             p.forward_float = [](const std::vector<Tensor>& in) {
                                 return concat({in[0], in[1]}, 1);
                             };
                             p.forward_double = [](const std::vector<dvec>& in) {
                                 dvec y;
                                 for (int a = 0; a < 2; ++a) {
                                     for (int k = 0; k < 2; ++k)
                                         for (int c = 0; c < 3; ++c) y.push_back(in[0][static_cast<size_t>((a * 2 + k) * 3 + c)]);
                                     for (int k = 0; k < 4; ++k)
                                         for (int c = 0; c < 3; ++c) y.push_back(in[1][static_cast<size_t>((a * 4 + k) * 3 + c)]);
                                 }
                                 return y;
                             };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"matmul", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 73 + 21);
                             Problem p;
                             p.inputs = {detail::rand_tensor(rng, {3, 4}, -1.0, 1.0),
                                         detail::rand_tensor(rng, {4, 5}, -1.0, 1.0)};
                             p.forward_float = [](const std::vector<Tensor>& in) { return matmul(in[0], in[1]); };
                             p.forward_double = [](const std::vector<dvec>& in) { return ref::matmul(in[0], in[1], 3, 4, 5); };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"bmm", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 79 + 17);
                             Problem p;
                             p.inputs = {detail::rand_tensor(rng, {2, 3, 4}, -1.0, 1.0),
                                         detail::rand_tensor(rng, {2, 4, 2}, -1.0, 1.0)};
                             p.forward_float = [](const std::vector<Tensor>& in) { return bmm(in[0], in[1]); };
                             p.forward_double = [](const std::vector<dvec>& in) {
                                 dvec y;
                                 for (int bb = 0; bb < 2; ++bb) {
                                     dvec a(in[0].begin() + bb * 12, in[0].begin() + (bb + 1) * 12);
                                     dvec b(in[1].begin() + bb * 8, in[1].begin() + (bb + 1) * 8);
                                     dvec c = ref::matmul(a, b, 3, 4, 2);
                                     y.insert(y.end(), c.begin(), c.end());
                                 }
                                 return y;
                             };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"conv2d", 1e-3, [](uint64_t seed) {
                             double worst = 0.0;
                             for (int stride = 1; stride <= 2; ++stride) {
                                 Rng rng(seed * 83 + static_cast<uint64_t>(stride));
                                 Problem p;
                                 p.inputs = {detail::rand_tensor(rng, {2, 5, 6}, -1.0, 1.0),
                                             detail::rand_tensor(rng, {3, 2, 3, 3}, -0.8, 0.8),
                                             detail::rand_tensor(rng, {3}, -0.5, 0.5)};
                                 int s = stride;
                                 p.forward_float = [s](const std::vector<Tensor>& in) {
                                     return conv2d(in[0], in[1], in[2], s);
                                 };
                                 p.forward_double = [s](const std::vector<dvec>& in) {
                                     return ref::conv2d(in[0], 2, 5, 6, in[1], 3, 3, 3, in[2], s, 1, 1);
                                 };
                                 worst = std::max(worst, max_rel_err(p, rng));
                             }
                             return worst;
                         }});

    cases.push_back(Case{"conv3d", 1e-3, [](uint64_t seed) {
                             double worst = 0.0;
                             // cubic kernel and the two factorized shapes
                             const int ks[3][3] = {{3, 3, 3}, {1, 3, 3}, {3, 1, 1}};
                             for (int v = 0; v < 3; ++v) {
                                 Rng rng(seed * 89 + static_cast<uint64_t>(v));
                                 Problem p;
                                 int kd = ks[v][0], kh = ks[v][1], kw = ks[v][2];
                                 p.inputs = {detail::rand_tensor(rng, {2, 4, 4, 5}, -1.0, 1.0),
                                             detail::rand_tensor(rng, {2, 2, kd, kh, kw}, -0.8, 0.8),
                                             detail::rand_tensor(rng, {2}, -0.5, 0.5)};
                                 p.forward_float = [](const std::vector<Tensor>& in) {
                                     return conv3d(in[0], in[1], in[2]);
                                 };
                                 p.forward_double = [kd, kh, kw](const std::vector<dvec>& in) {
                                     return ref::conv3d(in[0], 2, 4, 4, 5, in[1], 2, kd, kh, kw, in[2]);
                                 };
                                 worst = std::max(worst, max_rel_err(p, rng));
                             }
                             return worst;
                         }});

    cases.push_back(Case{"avg_pool2d", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 97 + 3);
                             Problem p;
                             p.inputs = {detail::rand_tensor(rng, {2, 5, 7}, -1.0, 1.0)};  // odd dims hit edge windows
                             p.forward_float = [](const std::vector<Tensor>& in) { return avg_pool2d(in[0]); };
                             p.forward_double = [](const std::vector<dvec>& in) {
                                 int H = 5, W = 7, Ho = 3, Wo = 4;
                                 dvec y(static_cast<size_t>(2 * Ho * Wo), 0.0);
                                 for (int c = 0; c < 2; ++c)
                                     for (int oy = 0; oy < Ho; ++oy)
                                         for (int ox = 0; ox < Wo; ++ox) {
                                             int y1 = std::min(oy * 2 + 2, H), x1 = std::min(ox * 2 + 2, W);
                                             double acc = 0.0;
                                             int cnt = 0;
                                             for (int yy = oy * 2; yy < y1; ++yy)
                                                 for (int xx = ox * 2; xx < x1; ++xx) {
                                                     acc += in[0][static_cast<size_t>((c * H + yy) * W + xx)];
                                                     ++cnt;
                                                 }
                                             y[static_cast<size_t>((c * Ho + oy) * Wo + ox)] = acc / cnt;
                                         }
                                 return y;
                             };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"avg_pool3d", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 101 + 9);
                             Problem p;
                             p.inputs = {detail::rand_tensor(rng, {1, 3, 4, 5}, -1.0, 1.0)};
                             p.forward_float = [](const std::vector<Tensor>& in) { return avg_pool3d(in[0]); };
                             p.forward_double = [](const std::vector<dvec>& in) {
                                 int D = 3, H = 4, W = 5, Do = 2, Ho = 2, Wo = 3;
                                 dvec y(static_cast<size_t>(Do * Ho * Wo), 0.0);
                                 for (int od = 0; od < Do; ++od)
                                     for (int oy = 0; oy < Ho; ++oy)
                                         for (int ox = 0; ox < Wo; ++ox) {
                                             int z1 = std::min(od * 2 + 2, D), y1 = std::min(oy * 2 + 2, H),
                                                 x1 = std::min(ox * 2 + 2, W);
                                             double acc = 0.0;
                                             int cnt = 0;
                                             for (int z = od * 2; z < z1; ++z)
                                                 for (int yy = oy * 2; yy < y1; ++yy)
                                                     for (int xx = ox * 2; xx < x1; ++xx) {
                                                         acc += in[0][static_cast<size_t>((z * H + yy) * W + xx)];
                                                         ++cnt;
                                                     }
                                             y[static_cast<size_t>((od * Ho + oy) * Wo + ox)] = acc / cnt;
                                         }
                                 return y;
                             };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"upsample2d", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 103 + 15);
                             Problem p;
                             p.inputs = {detail::rand_tensor(rng, {2, 3, 4}, -1.0, 1.0)};
                             p.forward_float = [](const std::vector<Tensor>& in) { return upsample2d_nn(in[0], 5, 7); };
                             p.forward_double = [](const std::vector<dvec>& in) {
                                 dvec y(static_cast<size_t>(2 * 5 * 7));
                                 for (int c = 0; c < 2; ++c)
                                     for (int oy = 0; oy < 5; ++oy)
                                         for (int ox = 0; ox < 7; ++ox)
                                             y[static_cast<size_t>((c * 5 + oy) * 7 + ox)] =
                                                 in[0][static_cast<size_t>((c * 3 + oy / 2) * 4 + ox / 2)];
                                 return y;
                             };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"upsample3d", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 107 + 19);
                             Problem p;
                             p.inputs = {detail::rand_tensor(rng, {1, 2, 3, 3}, -1.0, 1.0)};
                             p.forward_float = [](const std::vector<Tensor>& in) { return upsample3d_nn(in[0], 4, 5, 6); };
                             p.forward_double = [](const std::vector<dvec>& in) {
                                 dvec y(static_cast<size_t>(4 * 5 * 6));
                                 for (int od = 0; od < 4; ++od)
                                     for (int oy = 0; oy < 5; ++oy)
                                         for (int ox = 0; ox < 6; ++ox)
                                             y[static_cast<size_t>((od * 5 + oy) * 6 + ox)] =
                                                 in[0][static_cast<size_t>(((od / 2) * 3 + oy / 2) * 3 + ox / 2)];
                                 return y;
                             };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"gaussian_blur2d", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 109 + 23);
                             Problem p;
                             p.inputs = {detail::rand_tensor(rng, {2, 7, 8}, -1.0, 1.0)};
                             p.forward_float = [](const std::vector<Tensor>& in) { return gaussian_blur2d(in[0], 3, 1.0f); };
                             p.forward_double = [](const std::vector<dvec>& in) {
                                 // identical kernel computed in float, promoted
                                 double raw[3];
                                 double s = 0.0;
                                 for (int i = 0; i < 3; ++i) {
                                     double d = i - 1;
                                     raw[i] = static_cast<float>(std::exp(-d * d / 2.0));
                                     s += raw[i];
                                 }
                                 float k[3];
                                 for (int i = 0; i < 3; ++i) k[i] = static_cast<float>(raw[i] / s);
                                 int H = 7, W = 8, Ho = 5, Wo = 6;
                                 dvec y(static_cast<size_t>(2 * Ho * Wo), 0.0);
                                 for (int c = 0; c < 2; ++c)
                                     for (int oy = 0; oy < Ho; ++oy)
                                         for (int ox = 0; ox < Wo; ++ox) {
                                             double acc = 0.0;
                                             for (int ky = 0; ky < 3; ++ky)
                                                 for (int kx = 0; kx < 3; ++kx)
                                                     acc += static_cast<double>(k[ky]) * k[kx] *
                                                            in[0][static_cast<size_t>((c * H + oy + ky) * W + ox + kx)];
                                             y[static_cast<size_t>((c * Ho + oy) * Wo + ox)] = acc;
                                         }
                                 return y;
                             };
                             return max_rel_err(p, rng);
                         }});

    cases.push_back(Case{"bilinear_sample", 1e-3, [](uint64_t seed) {
                             Rng rng(seed * 113 + 29);
                             Problem p;
                             p.inputs = {detail::rand_tensor(rng, {2, 6, 7}, -1.0, 1.0)};
                             SampleGrid grid;
                             grid.rows = 3;
                             grid.cols = 4;
                             for (int i = 0; i < 12; ++i) {
                                 // mix of interior, boundary, and out-of-bounds points
                                 grid.x.push_back(static_cast<float>(rng.uniform(-1.0, 7.5)));
                                 grid.y.push_back(static_cast<float>(rng.uniform(-1.0, 6.5)));
                             }
                             p.forward_float = [grid](const std::vector<Tensor>& in) {
                                 return bilinear_sample(in[0], grid);
                             };
                             p.forward_double = [grid](const std::vector<dvec>& in) {
                                 int H = 6, W = 7;
                                 dvec y(static_cast<size_t>(2 * 12), 0.0);
                                 for (int c = 0; c < 2; ++c)
                                     for (int i = 0; i < 12; ++i) {
                                         double xf = grid.x[static_cast<size_t>(i)], yf = grid.y[static_cast<size_t>(i)];
                                         if (!(xf >= 0 && yf >= 0 && xf <= W - 1 && yf <= H - 1)) continue;
                                         int x0 = std::min(static_cast<int>(xf), W - 2);
                                         int y0 = std::min(static_cast<int>(yf), H - 2);
                                         double fx = xf - x0, fy = yf - y0;
                                         auto at = [&](int yy, int xx) { return in[0][static_cast<size_t>((c * H + yy) * W + xx)]; };
                                         y[static_cast<size_t>(c * 12 + i)] = (1 - fx) * (1 - fy) * at(y0, x0) +
                                                                              fx * (1 - fy) * at(y0, x0 + 1) +
                                                                              (1 - fx) * fy * at(y0 + 1, x0) +
                                                                              fx * fy * at(y0 + 1, x0 + 1);
                                     }
                                 return y;
                             };
                             return max_rel_err(p, rng);
                         }});

    return cases;
}

inline std::vector<Report> run_cases(const std::vector<Case>& cases, const std::string& only_op = "",
                                     int seeds = 10, uint64_t seed0 = 1234) {
    std::vector<Report> reports;
    bool found = only_op.empty();
    for (const Case& c : cases) {
        if (!only_op.empty() && c.name != only_op) continue;
        found = true;
        Report r;
        r.op = c.name;
        r.threshold = c.threshold;
        for (int s = 0; s < seeds; ++s) r.max_err = std::max(r.max_err, c.run(seed0 + static_cast<uint64_t>(s)));
        r.pass = r.max_err < c.threshold;
        reports.push_back(r);
    }
    if (!found) throw ValueError("grad_check: unknown op '" + only_op + "'");
    return reports;
}

}  // namespace mugs::gradcheck
