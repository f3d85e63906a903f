#include "oplab/estimators.hpp"

#include <cmath>
#include <stdexcept>

#include "oplab/math.hpp"

namespace oplab {

AdvantageEstimator advantage_estimator_from_string(const std::string& s) {
    if (s == "nstep") return AdvantageEstimator::NStep;
    if (s == "gae") return AdvantageEstimator::Gae;
    if (s == "vtrace") return AdvantageEstimator::VTrace;
    throw std::invalid_argument("unknown advantage estimator: " + s);
}

std::string to_string(AdvantageEstimator e) {
    switch (e) {
        case AdvantageEstimator::NStep: return "nstep";
        case AdvantageEstimator::Gae: return "gae";
        case AdvantageEstimator::VTrace: return "vtrace";
    }
    return "?";
}

namespace {
void check_fragment(const Fragment& f) {
    if (f.rewards.empty()) throw std::invalid_argument("empty fragment");
    if (f.values.size() != f.rewards.size()) throw std::invalid_argument("fragment field length mismatch");
}
}  // namespace

AdvantageOutput nstep(const Fragment& f, std::span<const char> terminal, double gamma, int n) {
    check_fragment(f);
    if (n < 1) throw std::invalid_argument("nstep: N must be >= 1");
    const int T = f.length();
    AdvantageOutput out;
    out.advantages.resize(T);
    out.value_targets.resize(T);
    for (int t = 0; t < T; ++t) {
        double target = 0.0, disc = 1.0;
        bool terminated = false;
        int i = t;
        for (; i < T && i < t + n; ++i) {
            target += disc * f.rewards[i];
            disc *= gamma;
            if (terminal[i]) {
                terminated = true;
                break;
            }
        }
        if (!terminated) {
            // ran off the lookahead or the fragment; bootstrap
            target += disc * (i < T ? f.values[i] : f.bootstrap_value);
        }
        out.value_targets[t] = target;
        out.advantages[t] = target - f.values[t];
    }
    return out;
}

AdvantageOutput gae(const Fragment& f, std::span<const char> terminal, double gamma, double lambda) {
    check_fragment(f);
    const int T = f.length();
    AdvantageOutput out;
    out.advantages.resize(T);
    out.value_targets.resize(T);
    double next_adv = 0.0;
    for (int t = T - 1; t >= 0; --t) {
        const double cont = terminal[t] ? 0.0 : 1.0;
        const double next_value = t + 1 < T ? f.values[t + 1] : f.bootstrap_value;
        const double delta = f.rewards[t] + gamma * next_value * cont - f.values[t];
        next_adv = delta + gamma * lambda * cont * next_adv;
        out.advantages[t] = next_adv;
        out.value_targets[t] = next_adv + f.values[t];
    }
    return out;
}

AdvantageOutput vtrace_estimate(const Fragment& f, std::span<const char> terminal, double gamma, double lambda,
                                double c_bar, double rho_bar) {
    check_fragment(f);
    if (f.target_log_probs.size() != f.rewards.size() || f.behavior_log_probs.size() != f.rewards.size())
        throw std::invalid_argument("vtrace: log-prob arrays must match fragment length");
    const int T = f.length();
    AdvantageOutput out;
    out.advantages.resize(T);
    out.value_targets.resize(T);
    // vs_t - V(s_t), computed backward
    double next_vs_minus_v = 0.0;
    double next_vs = f.bootstrap_value;
    for (int t = T - 1; t >= 0; --t) {
        const double cont = terminal[t] ? 0.0 : 1.0;
        const double next_value = t + 1 < T ? f.values[t + 1] : f.bootstrap_value;
        const double ratio = std::exp(f.target_log_probs[t] - f.behavior_log_probs[t]);
        const double rho = std::min(ratio, rho_bar);
        const double c = lambda * std::min(ratio, c_bar);
        const double delta = f.rewards[t] + gamma * next_value * cont - f.values[t];
        const double vs_minus_v = rho * delta + gamma * cont * c * next_vs_minus_v;
        out.value_targets[t] = f.values[t] + vs_minus_v;
        // lambda-mixed bootstrap keeps the on-policy case identical to GAE
        const double mixed_next = (1.0 - lambda) * next_value + lambda * next_vs;
        out.advantages[t] = rho * (f.rewards[t] + gamma * mixed_next * cont - f.values[t]);
        next_vs_minus_v = vs_minus_v;
        next_vs = out.value_targets[t];
    }
    return out;
}

AdvantageOutput estimate(const Fragment& f, const EstimatorCfg& cfg) {
    check_fragment(f);
    const int T = f.length();
    std::vector<char> terminal(T);
    const Fragment* frag = &f;
    Fragment patched;
    bool any_abandoned = false;
    for (int t = 0; t < T; ++t) {
        terminal[t] = f.terminated[t] || f.abandoned[t];
        any_abandoned = any_abandoned || f.abandoned[t];
    }
    if (cfg.handle_abandoned && any_abandoned) {
        // abandoned step becomes a terminal step whose "reward" is the
        // current value prediction, which makes its value target V(s) and
        // its advantage zero, and propagates through the recursions
        patched = f;
        for (int t = 0; t < T; ++t)
            if (f.abandoned[t]) patched.rewards[t] = f.values[t];
        frag = &patched;
    }
    switch (cfg.kind) {
        case AdvantageEstimator::NStep: return nstep(*frag, terminal, cfg.gamma, cfg.nstep);
        case AdvantageEstimator::Gae: return gae(*frag, terminal, cfg.gamma, cfg.lambda);
        case AdvantageEstimator::VTrace:
            return vtrace_estimate(*frag, terminal, cfg.gamma, cfg.lambda, cfg.vtrace_c_rho, cfg.vtrace_c_rho);
    }
    throw std::logic_error("bad estimator kind");
}

ValueLossResult value_loss(double pred, double old_pred, double target, const ValueLossCfg& cfg) {
    auto base = [&cfg](double p, double t) -> ValueLossResult {
        const double x = p - t;
        if (cfg.kind == ValueLossKind::Mse) return {x * x, 2.0 * x};
        const double d = cfg.huber_delta;
        if (std::abs(x) <= d) return {0.5 * x * x, x};
        return {d * (std::abs(x) - 0.5 * d), x > 0 ? d : -d};
    };
    const ValueLossResult plain = base(pred, target);
    if (!cfg.ppo_clip_enabled) return plain;
    const double eps = cfg.ppo_clip;
    const double diff = pred - old_pred;
    const double clipped_pred = old_pred + clamp(diff, -eps, eps);
    ValueLossResult clipped = base(clipped_pred, target);
    if (std::abs(diff) > eps) clipped.d_pred = 0.0;  // clip saturated
    // pessimistic max; ties resolve to the unclipped branch
    return clipped.loss > plain.loss ? clipped : plain;
}

}  // namespace oplab
