#pragma once

#include <string>
#include <vector>

namespace oplab {

enum class PolicyLossKind { Pg, VTrace, Ppo, Awr, Vmpo, Rpa };

PolicyLossKind policy_loss_from_string(const std::string& s);
std::string to_string(PolicyLossKind k);

struct PolicyLossInput {
    double target_log_prob = 0.0;    // log pi(a|s), differentiable
    double behavior_log_prob = 0.0;  // log mu(a|s), constant
    double advantage = 0.0;
};

struct PolicyLossCfg {
    PolicyLossKind kind = PolicyLossKind::Ppo;
    double ppo_epsilon = 0.2;
    double vtrace_rho = 1.0;
    double awr_beta = 1.0;
    double awr_w_max = 1.5;
    double vmpo_eps = 0.01;
};

struct PolicyLossResult {
    double loss = 0.0;
    double d_target_log_prob = 0.0;
};

PolicyLossResult pg_loss(const PolicyLossInput& in);
PolicyLossResult vtrace_loss(const PolicyLossInput& in, double rho_bar);
/// Clip band is [1/(1+eps), 1+eps].
PolicyLossResult ppo_loss(const PolicyLossInput& in, double eps);
/// Weight min(exp(A/beta), w_max) computed in log space to dodge overflow.
PolicyLossResult awr_loss(const PolicyLossInput& in, double beta, double w_max);
PolicyLossResult rpa_loss(const PolicyLossInput& in);

/// Temperature eta = exp(p) for the top-half softmax weighting, trained by
/// the run's main optimizer on the temperature loss. p is clipped so that
/// eta stays in [1e-6, 1e6].
struct VmpoTemperature {
    double p = 0.0;
    double eta() const;
    void clip();
};

struct VmpoBatchResult {
    double loss = 0.0;
    std::vector<double> d_target_log_probs;  // one per input, zero off the top half
    double temperature_loss = 0.0;
    double d_temperature_p = 0.0;  // gradient of the temperature loss w.r.t. p
    std::vector<int> selected;     // indices of the top-half subset
    std::vector<double> weights;   // softmax weights over `selected`
};

/// Top-half-by-advantage softmax-weighted log-likelihood loss. Weights are
/// constants w.r.t. the policy. Requires at least two samples.
VmpoBatchResult vmpo_loss(const std::vector<PolicyLossInput>& batch, const VmpoTemperature& temp, double eps_n);

}  // namespace oplab
