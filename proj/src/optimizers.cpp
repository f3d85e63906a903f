#include "oplab/optimizers.hpp"

#include <cmath>
#include <stdexcept>

namespace oplab {

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "rmsprop") return OptimizerKind::RmsProp;
    throw std::invalid_argument("unknown optimizer: " + s);
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "rmsprop"; }

double lr_at(const OptimCfg& cfg, double progress) {
    return cfg.lr * ((1.0 - progress) + progress * cfg.lr_decay_fraction);
}

Optimizer::Optimizer(const OptimCfg& cfg, size_t num_params) : cfg_(cfg) {
    if (cfg.lr <= 0.0) throw std::invalid_argument("lr must be > 0");
    if (cfg.eps <= 0.0) throw std::invalid_argument("eps must be > 0");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) throw std::invalid_argument("momentum must be in [0, 1)");
    if (cfg.kind == OptimizerKind::Adam) {
        m_.assign(num_params, 0.0);
        v_.assign(num_params, 0.0);
    } else {
        v_.assign(num_params, 0.0);
        if (cfg.rms_centered) mg_.assign(num_params, 0.0);
        if (cfg.momentum > 0.0) mom_.assign(num_params, 0.0);
    }
}

void Optimizer::step(std::span<double> params, std::span<const double> grads, double lr_t) {
    if (params.size() != grads.size() || params.size() != v_.size())
        throw std::invalid_argument("optimizer: size mismatch");
    ++t_;
    if (cfg_.kind == OptimizerKind::Adam) {
        const double b1 = cfg_.momentum, b2 = cfg_.adam_beta2;
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        for (size_t i = 0; i < params.size(); ++i) {
            const double g = grads[i];
            m_[i] = b1 * m_[i] + (1.0 - b1) * g;
            v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
            const double m_hat = m_[i] / bc1;
            const double v_hat = v_[i] / bc2;
            params[i] -= lr_t * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
        return;
    }
    // RMSProp
    const double rho = cfg_.rms_decay;
    for (size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        v_[i] = rho * v_[i] + (1.0 - rho) * g * g;
        double denom_sq = v_[i];
        if (cfg_.rms_centered) {
            mg_[i] = rho * mg_[i] + (1.0 - rho) * g;
            denom_sq -= mg_[i] * mg_[i];
        }
        const double update = lr_t * g / (std::sqrt(std::max(denom_sq, 0.0)) + cfg_.eps);
        if (cfg_.momentum > 0.0) {
            mom_[i] = cfg_.momentum * mom_[i] + update;
            params[i] -= mom_[i];
        } else {
            params[i] -= update;
        }
    }
}

}  // namespace oplab
