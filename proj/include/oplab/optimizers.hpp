#pragma once

#include <span>
#include <string>
#include <vector>

namespace oplab {

enum class OptimizerKind { Adam, RmsProp };

OptimizerKind optimizer_from_string(const std::string& s);
std::string to_string(OptimizerKind k);

struct OptimCfg {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 3e-4;
    double momentum = 0.9;  // Adam beta1 / RMSProp momentum
    double eps = 1e-7;
    double adam_beta2 = 0.999;
    double rms_decay = 0.9;
    bool rms_centered = false;
    /// Terminal learning rate as a fraction of the initial one; 0 decays
    /// to zero, 1 disables decay.
    double lr_decay_fraction = 0.0;
};

/// Linear schedule: lr * ((1 - progress) + progress * fraction).
double lr_at(const OptimCfg& cfg, double progress);

/// First/second-moment state over a flat parameter vector.
class Optimizer {
public:
    Optimizer() = default;
    Optimizer(const OptimCfg& cfg, size_t num_params);

    const OptimCfg& cfg() const { return cfg_; }
    long step_count() const { return t_; }

    /// One update of `params` in place using `grads`, at learning rate lr_t.
    void step(std::span<double> params, std::span<const double> grads, double lr_t);

    // exposed for checkpointing
    std::vector<double>& m() { return m_; }
    std::vector<double>& v() { return v_; }
    std::vector<double>& mg() { return mg_; }
    std::vector<double>& momentum_buf() { return mom_; }
    long& step_counter() { return t_; }
    const std::vector<double>& m() const { return m_; }
    const std::vector<double>& v() const { return v_; }
    const std::vector<double>& mg() const { return mg_; }
    const std::vector<double>& momentum_buf() const { return mom_; }

private:
    OptimCfg cfg_;
    long t_ = 0;
    std::vector<double> m_;    // Adam first moment / unused for RMSProp
    std::vector<double> v_;    // Adam second moment / RMSProp mean square
    std::vector<double> mg_;   // centered RMSProp mean gradient
    std::vector<double> mom_;  // RMSProp momentum buffer
};

}  // namespace oplab
