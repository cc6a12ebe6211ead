#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "onepass/errors.hpp"

namespace onepass {

struct AdamWSpec {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.9;
    double weight_decay = 0.01;
    double eps = 1e-8;

    void validate() const {
        if (!(lr > 0)) throw ConfigError("learning rate must be positive");
        if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) throw ConfigError("betas must lie in (0, 1)");
        if (weight_decay < 0) throw ConfigError("weight decay must be non-negative");
    }
};

// Moment buffers for one parameter block. Decay is decoupled from the
// gradient: p <- p - lr * (wd * p + m_hat / (sqrt(v_hat) + eps)).
class AdamWState {
   public:
    explicit AdamWState(std::size_t n = 0) : m_(n, 0.f), v_(n, 0.f) {}

    std::size_t steps() const noexcept { return t_; }

    void update(std::span<float> p, std::span<const float> g, const AdamWSpec& s, double lr, bool decay = true) {
        if (p.size() != m_.size() || g.size() != m_.size()) throw ConfigError("AdamW block size mismatch");
        ++t_;
        const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(t_));
        const float b1 = static_cast<float>(s.beta1), b2 = static_cast<float>(s.beta2);
        const float step = static_cast<float>(lr / bc1), inv_bc2 = static_cast<float>(1.0 / bc2);
        const float shrink = decay ? static_cast<float>(1.0 - lr * s.weight_decay) : 1.f;
        const float eps = static_cast<float>(s.eps);
        for (std::size_t i = 0; i < p.size(); ++i) {
            m_[i] = b1 * m_[i] + (1.f - b1) * g[i];
            v_[i] = b2 * v_[i] + (1.f - b2) * g[i] * g[i];
            p[i] = p[i] * shrink - step * m_[i] / (std::sqrt(v_[i] * inv_bc2) + eps);
        }
    }

   private:
    std::vector<float> m_, v_;
    std::size_t t_ = 0;
};

}  // namespace onepass
