#pragma once

// Adam optimizer over a ParamStore. Moment accumulators are double precision
// and live outside the checkpointed parameters; iteration follows the store's
// registration order, so updates are deterministic for a fixed model layout.

#include <cmath>
#include <cstdint>
#include <vector>

#include "mugs/core/checkpoint.hpp"

namespace mugs {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
  public:
    explicit Adam(ParamStore& ps, AdamConfig cfg = {}) : cfg_(cfg) {
        for (const auto& [name, t] : ps.items()) {
            params_.push_back(t);
            m_.emplace_back(t.numel(), 0.0);
            v_.emplace_back(t.numel(), 0.0);
        }
    }

    // One update from the gradients currently on the parameters. `lr_scale`
    // multiplies the configured learning rate (for schedules). Parameters
    // whose gradient buffer was never touched this step contribute zeros.
    void step(double lr_scale = 1.0) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        const double lr = cfg_.lr * lr_scale;
        for (size_t i = 0; i < params_.size(); ++i) {
            float* x = params_[i].mut_data();
            const std::vector<float>& g = params_[i].node()->grad;
            std::vector<double>& m = m_[i];
            std::vector<double>& v = v_[i];
            for (size_t j = 0; j < m.size(); ++j) {
                const double gj = j < g.size() ? static_cast<double>(g[j]) : 0.0;
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
                const double mh = m[j] / bc1;
                const double vh = v[j] / bc2;
                x[j] -= static_cast<float>(lr * mh / (std::sqrt(vh) + cfg_.eps));
            }
        }
    }

    int64_t iterations() const { return t_; }

  private:
    AdamConfig cfg_;
    int64_t t_ = 0;
    std::vector<Tensor> params_;  // aliases into the store's parameters
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace mugs
