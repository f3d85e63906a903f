#pragma once

#include <span>
#include <string>
#include <vector>

namespace oplab {

/// One environment's slice of a collected iteration: T consecutive
/// transitions plus the value prediction for the state after the last one.
struct Fragment {
    std::vector<double> rewards;
    std::vector<double> values;  // V(s_t), de-normalized
    double bootstrap_value = 0.0;
    std::vector<char> terminated;
    std::vector<char> abandoned;
    std::vector<double> behavior_log_probs;
    std::vector<double> target_log_probs;  // filled at estimation time

    int length() const { return static_cast<int>(rewards.size()); }
};

struct AdvantageOutput {
    std::vector<double> advantages;
    std::vector<double> value_targets;
};

enum class AdvantageEstimator { NStep, Gae, VTrace };

AdvantageEstimator advantage_estimator_from_string(const std::string& s);
std::string to_string(AdvantageEstimator e);

struct EstimatorCfg {
    AdvantageEstimator kind = AdvantageEstimator::Gae;
    double gamma = 0.99;
    int nstep = 1;
    double lambda = 0.95;      // GAE / V-trace lambda
    double vtrace_c_rho = 1.0; // shared truncation threshold c_bar = rho_bar
    bool handle_abandoned = false;
};

/// N-step targets truncated at termination and bootstrapped at the
/// fragment end. `terminal` marks transitions that ended the episode.
AdvantageOutput nstep(const Fragment& f, std::span<const char> terminal, double gamma, int n);

/// Backward GAE recursion.
AdvantageOutput gae(const Fragment& f, std::span<const char> terminal, double gamma, double lambda);

/// V-trace targets with truncated importance weights. Reduces exactly to
/// gae(gamma, lambda) when all log-ratios are zero and c_bar, rho_bar >= 1.
AdvantageOutput vtrace_estimate(const Fragment& f, std::span<const char> terminal, double gamma, double lambda,
                                double c_bar, double rho_bar);

/// Runs the configured estimator. When handling of abandoned episodes is
/// enabled, each abandoned step gets advantage zero and value target V(s);
/// prior indices see that substitution through the recursion. When
/// disabled, abandonment is treated as ordinary termination.
AdvantageOutput estimate(const Fragment& f, const EstimatorCfg& cfg);

enum class ValueLossKind { Mse, Huber };

struct ValueLossCfg {
    ValueLossKind kind = ValueLossKind::Mse;
    double huber_delta = 1.0;
    bool ppo_clip_enabled = false;
    double ppo_clip = 0.2;
};

struct ValueLossResult {
    double loss = 0.0;
    double d_pred = 0.0;
};

/// MSE is (pred-target)^2; Huber uses the conventional x^2/2 core. With
/// PPO clipping the loss is the pessimistic max of the unclipped loss and
/// the loss at old_pred + clip(pred - old_pred, -eps, eps).
ValueLossResult value_loss(double pred, double old_pred, double target, const ValueLossCfg& cfg);

}  // namespace oplab
