#include "oplab/policylosses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "oplab/math.hpp"

namespace oplab {

PolicyLossKind policy_loss_from_string(const std::string& s) {
    if (s == "pg") return PolicyLossKind::Pg;
    if (s == "vtrace") return PolicyLossKind::VTrace;
    if (s == "ppo") return PolicyLossKind::Ppo;
    if (s == "awr") return PolicyLossKind::Awr;
    if (s == "vmpo") return PolicyLossKind::Vmpo;
    if (s == "rpa") return PolicyLossKind::Rpa;
    throw std::invalid_argument("unknown policy loss: " + s);
}

std::string to_string(PolicyLossKind k) {
    switch (k) {
        case PolicyLossKind::Pg: return "pg";
        case PolicyLossKind::VTrace: return "vtrace";
        case PolicyLossKind::Ppo: return "ppo";
        case PolicyLossKind::Awr: return "awr";
        case PolicyLossKind::Vmpo: return "vmpo";
        case PolicyLossKind::Rpa: return "rpa";
    }
    return "?";
}

PolicyLossResult pg_loss(const PolicyLossInput& in) {
    return {-in.target_log_prob * in.advantage, -in.advantage};
}

PolicyLossResult vtrace_loss(const PolicyLossInput& in, double rho_bar) {
    const double ratio = std::exp(in.target_log_prob - in.behavior_log_prob);
    const double rho = std::min(ratio, rho_bar);  // stop-gradient weight
    return {rho * -in.target_log_prob * in.advantage, rho * -in.advantage};
}

PolicyLossResult ppo_loss(const PolicyLossInput& in, double eps) {
    const double r = std::exp(in.target_log_prob - in.behavior_log_prob);
    const double lo = 1.0 / (1.0 + eps), hi = 1.0 + eps;
    const double adv = in.advantage;
    const double unclipped = r * adv;
    const double clipped = clamp(r, lo, hi) * adv;
    if (unclipped <= clipped) {
        // pessimistic branch; dr/d(log pi) = r
        return {-unclipped, -r * adv};
    }
    const bool clip_active = r < lo || r > hi;
    return {-clipped, clip_active ? 0.0 : -r * adv};
}

PolicyLossResult awr_loss(const PolicyLossInput& in, double beta, double w_max) {
    if (beta <= 0.0) throw std::invalid_argument("awr: beta must be > 0");
    // min in log space so a huge A/beta cannot overflow
    const double log_w = std::min(in.advantage / beta, std::log(w_max));
    const double w = std::exp(log_w);
    return {-in.target_log_prob * w, -w};
}

PolicyLossResult rpa_loss(const PolicyLossInput& in) {
    const double ind = in.advantage > 0.0 ? 1.0 : 0.0;
    return {-in.target_log_prob * ind, -ind};
}

double VmpoTemperature::eta() const { return std::exp(p); }

void VmpoTemperature::clip() {
    const double lo = std::log(1e-6), hi = std::log(1e6);
    p = clamp(p, lo, hi);
}

VmpoBatchResult vmpo_loss(const std::vector<PolicyLossInput>& batch, const VmpoTemperature& temp, double eps_n) {
    const int n = static_cast<int>(batch.size());
    if (n < 2) throw std::invalid_argument("vmpo: batch size must be >= 2");
    VmpoBatchResult out;
    out.d_target_log_probs.assign(n, 0.0);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return batch[a].advantage > batch[b].advantage; });
    const int k = (n + 1) / 2;
    out.selected.assign(order.begin(), order.begin() + k);

    const double eta = temp.eta();
    double max_a = batch[out.selected[0]].advantage;
    for (int i : out.selected) max_a = std::max(max_a, batch[i].advantage);
    double z = 0.0;
    for (int i : out.selected) z += std::exp((batch[i].advantage - max_a) / eta);

    out.weights.resize(k);
    double weighted_adv = 0.0;
    for (int j = 0; j < k; ++j) {
        const int i = out.selected[j];
        const double w = std::exp((batch[i].advantage - max_a) / eta) / z;
        out.weights[j] = w;
        out.loss -= w * batch[i].target_log_prob;
        out.d_target_log_probs[i] = -w;
        weighted_adv += w * batch[i].advantage;
    }

    // temperature loss eta*eps + eta*log(mean exp(A/eta)) over the selection
    const double lse = max_a / eta + std::log(z / k);
    out.temperature_loss = eta * eps_n + eta * lse;
    const double d_eta = eps_n + lse - weighted_adv / eta;
    out.d_temperature_p = d_eta * eta;  // eta = exp(p)
    return out;
}

}  // namespace oplab
