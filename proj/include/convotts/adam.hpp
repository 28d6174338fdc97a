#pragma once

#include <cmath>
#include <vector>

#include "convotts/errors.hpp"
#include "convotts/graph.hpp"

namespace convotts {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
};

inline void validate_adam(const AdamConfig& cfg) {
    if (!(cfg.lr > 0.0)) throw ConfigError("learning rate must be > 0");
    if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0) throw ConfigError("beta1 must be in [0, 1)");
    if (cfg.beta2 < 0.0 || cfg.beta2 >= 1.0) throw ConfigError("beta2 must be in [0, 1)");
    if (!(cfg.eps > 0.0)) throw ConfigError("adam eps must be > 0");
}

/// Standard bias-corrected Adam over the registered parameter list. Reads
/// each Param's accumulated grad; call zero_grad between steps.
class Adam {
  public:
    Adam(std::vector<Param*> params, const AdamConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
        validate_adam(cfg_);
        for (Param* p : params_) {
            m_.push_back(Tensor::zeros(p->value.shape()));
            v_.push_back(Tensor::zeros(p->value.shape()));
        }
    }

    std::size_t steps() const { return t_; }
    const std::vector<Param*>& params() const { return params_; }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Param& p = *params_[i];
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                const double g = p.grad[j];
                m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
                v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m_[i][j] / c1;
                const double vhat = v_[i][j] / c2;
                p.value[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

  private:
    std::vector<Param*> params_;
    AdamConfig cfg_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::size_t t_ = 0;
};

}  // namespace convotts
