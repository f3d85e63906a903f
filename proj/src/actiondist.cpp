#include "oplab/actiondist.hpp"

#include <cmath>
#include <stdexcept>

namespace oplab {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5*log(2*pi)
}

StdTransform std_transform_from_string(const std::string& s) {
    if (s == "safe_exp") return StdTransform::SafeExp;
    if (s == "softplus") return StdTransform::Softplus;
    throw std::invalid_argument("unknown std transform: " + s);
}

std::string to_string(StdTransform t) {
    return t == StdTransform::SafeExp ? "safe_exp" : "softplus";
}

ActionPost action_post_from_string(const std::string& s) {
    if (s == "clip") return ActionPost::Clip;
    if (s == "tanh") return ActionPost::Tanh;
    throw std::invalid_argument("unknown action postprocessing: " + s);
}

std::string to_string(ActionPost p) { return p == ActionPost::Clip ? "clip" : "tanh"; }

TransformResult std_transform(StdTransform kind, double x) {
    switch (kind) {
        case StdTransform::SafeExp: {
            const double v = std::exp(clamp(x, -15.0, 15.0));
            // straight-through: the clip is treated as derivative 1
            return {v, v};
        }
        case StdTransform::Softplus:
            return {softplus(x), sigmoid(x)};
    }
    return {};
}

double std_transform_inverse(StdTransform kind, double y) {
    if (y <= 0.0) throw std::domain_error("std transform inverse requires a positive argument");
    switch (kind) {
        case StdTransform::SafeExp: return std::log(y);
        case StdTransform::Softplus: return std::log(std::expm1(y));
    }
    return 0.0;
}

double DistConfig::std_offset() const {
    if (initial_std <= min_std)
        throw std::invalid_argument("initial_std must exceed min_std");
    return std_transform_inverse(std_transform, initial_std - min_std);
}

GaussianHead build_head(std::span<const double> x_mu, std::span<const double> x_rho, const DistConfig& cfg) {
    if (x_mu.size() != x_rho.size()) throw std::invalid_argument("x_mu / x_rho size mismatch");
    const double c_rho = cfg.std_offset();
    GaussianHead h;
    h.action_post = cfg.action_post;
    h.mu.assign(x_mu.begin(), x_mu.end());
    h.sigma.resize(x_mu.size());
    h.dsigma_dxrho.resize(x_mu.size());
    for (size_t i = 0; i < x_rho.size(); ++i) {
        const TransformResult t = std_transform(cfg.std_transform, x_rho[i] + c_rho);
        h.sigma[i] = t.value + cfg.min_std;
        h.dsigma_dxrho[i] = t.deriv;
    }
    return h;
}

double log_tanh_deriv(double x) {
    // log(1 - tanh^2 x) = 2 (log 2 - x - softplus(-2x))
    return 2.0 * (std::log(2.0) - x - softplus(-2.0 * x));
}

ActionSample sample(const GaussianHead& head, Rng& rng) {
    ActionSample s;
    const int n = head.dim();
    s.raw.resize(n);
    s.env_action.resize(n);
    double lp = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        const double x = head.mu[i] + head.sigma[i] * z;
        s.raw[i] = x;
        const double d = (x - head.mu[i]) / head.sigma[i];
        lp += -kHalfLog2Pi - std::log(head.sigma[i]) - 0.5 * d * d;
        if (head.action_post == ActionPost::Clip) {
            s.env_action[i] = clamp(x, -1.0, 1.0);
        } else {
            s.env_action[i] = std::tanh(x);
            lp -= log_tanh_deriv(x);
        }
    }
    s.behavior_log_prob = lp;
    return s;
}

LogProbResult log_prob(const GaussianHead& head, std::span<const double> raw) {
    const int n = head.dim();
    if (static_cast<int>(raw.size()) != n) throw std::invalid_argument("log_prob: dimension mismatch");
    LogProbResult r;
    r.d_mu.resize(n);
    r.d_sigma.resize(n);
    for (int i = 0; i < n; ++i) {
        const double s = head.sigma[i];
        const double d = (raw[i] - head.mu[i]) / s;
        r.value += -kHalfLog2Pi - std::log(s) - 0.5 * d * d;
        r.d_mu[i] = d / s;
        r.d_sigma[i] = (d * d - 1.0) / s;
    }
    return r;
}

EntropyResult entropy(const GaussianHead& head) {
    EntropyResult r;
    const int n = head.dim();
    r.d_mu.assign(n, 0.0);
    r.d_sigma.resize(n);
    for (int i = 0; i < n; ++i) {
        r.value += 0.5 + kHalfLog2Pi + std::log(head.sigma[i]);
        r.d_sigma[i] = 1.0 / head.sigma[i];
    }
    return r;
}

EntropyResult entropy_tanh_sample(const GaussianHead& head, std::span<const double> z) {
    const int n = head.dim();
    if (static_cast<int>(z.size()) != n) throw std::invalid_argument("entropy_tanh_sample: noise dimension mismatch");
    EntropyResult r;
    r.d_mu.resize(n);
    r.d_sigma.resize(n);
    for (int i = 0; i < n; ++i) {
        const double x = head.mu[i] + head.sigma[i] * z[i];
        // -log p(x) along the reparameterized path: log sigma + z^2/2 + const
        r.value += kHalfLog2Pi + std::log(head.sigma[i]) + 0.5 * z[i] * z[i];
        r.value += log_tanh_deriv(x);
        const double dcorr_dx = -2.0 * std::tanh(x);
        r.d_mu[i] = dcorr_dx;
        r.d_sigma[i] = 1.0 / head.sigma[i] + z[i] * dcorr_dx;
    }
    return r;
}

KlResult kl(const GaussianHead& p, const GaussianHead& q) {
    const int n = p.dim();
    if (q.dim() != n) throw std::invalid_argument("kl: dimension mismatch");
    KlResult r;
    r.d_mu_p.resize(n);
    r.d_sigma_p.resize(n);
    r.d_mu_q.resize(n);
    r.d_sigma_q.resize(n);
    for (int i = 0; i < n; ++i) {
        const double sp = p.sigma[i], sq = q.sigma[i];
        const double dm = p.mu[i] - q.mu[i];
        r.value += std::log(sq / sp) + (sp * sp + dm * dm) / (2.0 * sq * sq) - 0.5;
        r.d_mu_p[i] = dm / (sq * sq);
        r.d_mu_q[i] = -dm / (sq * sq);
        r.d_sigma_p[i] = -1.0 / sp + sp / (sq * sq);
        r.d_sigma_q[i] = 1.0 / sq - (sp * sp + dm * dm) / (sq * sq * sq);
    }
    return r;
}

DecoupledKlResult decoupled_kl(const GaussianHead& mu, const GaussianHead& pi) {
    const int n = mu.dim();
    if (pi.dim() != n) throw std::invalid_argument("decoupled_kl: dimension mismatch");
    DecoupledKlResult r;
    r.d_mu_pi_mean.resize(n);
    r.d_sigma_pi_mean.resize(n);
    r.d_mu_pi_std.assign(n, 0.0);
    r.d_sigma_pi_std.resize(n);
    for (int i = 0; i < n; ++i) {
        const double sm = mu.sigma[i], sp = pi.sigma[i];
        const double dm = mu.mu[i] - pi.mu[i];
        // mean term: KL(zeta || pi) with zeta = N(mean(mu), std(pi))
        r.mean_term += dm * dm / (2.0 * sp * sp);
        r.d_mu_pi_mean[i] = -dm / (sp * sp);
        r.d_sigma_pi_mean[i] = -dm * dm / (sp * sp * sp);
        // std term: KL(mu || zeta)
        r.std_term += std::log(sp / sm) + sm * sm / (2.0 * sp * sp) - 0.5;
        r.d_sigma_pi_std[i] = 1.0 / sp - sm * sm / (sp * sp * sp);
    }
    return r;
}

}  // namespace oplab
