#include "oplab/regularizers.hpp"

#include <cmath>
#include <stdexcept>

namespace oplab {

RegMode reg_mode_from_string(const std::string& s) {
    if (s == "none") return RegMode::None;
    if (s == "penalty") return RegMode::Penalty;
    if (s == "constraint") return RegMode::Constraint;
    throw std::invalid_argument("unknown regularization mode: " + s);
}

std::string to_string(RegMode m) {
    switch (m) {
        case RegMode::None: return "none";
        case RegMode::Penalty: return "penalty";
        case RegMode::Constraint: return "constraint";
    }
    return "?";
}

RegKind reg_kind_from_string(const std::string& s) {
    if (s == "entropy") return RegKind::Entropy;
    if (s == "kl_mu_pi") return RegKind::KlMuPi;
    if (s == "kl_pi_mu") return RegKind::KlPiMu;
    if (s == "kl_ref_pi") return RegKind::KlRefPi;
    if (s == "decoupled_kl_mu_pi") return RegKind::DecoupledKlMuPi;
    throw std::invalid_argument("unknown regularizer kind: " + s);
}

std::string to_string(RegKind k) {
    switch (k) {
        case RegKind::Entropy: return "entropy";
        case RegKind::KlMuPi: return "kl_mu_pi";
        case RegKind::KlPiMu: return "kl_pi_mu";
        case RegKind::KlRefPi: return "kl_ref_pi";
        case RegKind::DecoupledKlMuPi: return "decoupled_kl_mu_pi";
    }
    return "?";
}

double LagrangeState::alpha() const { return std::exp(kC * p); }

void LagrangeState::clip() {
    const double lo = std::log(1e-6) / kC, hi = std::log(1e6) / kC;
    p = clamp(p, lo, hi);
}

namespace {
GaussianHead reference_head(int dim) {
    GaussianHead h;
    h.mu.assign(dim, 0.0);
    h.sigma.assign(dim, 1.0);
    h.dsigma_dxrho.assign(dim, 0.0);
    return h;
}
}  // namespace

RegTerm reg_term(RegKind kind, const GaussianHead& current, const GaussianHead& behavior,
                 std::span<const double> tanh_noise) {
    RegTerm out;
    switch (kind) {
        case RegKind::Entropy: {
            const EntropyResult e = current.action_post == ActionPost::Tanh && !tanh_noise.empty()
                                        ? entropy_tanh_sample(current, tanh_noise)
                                        : entropy(current);
            out.value = e.value;
            out.d_mu = e.d_mu;
            out.d_sigma = e.d_sigma;
            return out;
        }
        case RegKind::KlMuPi: {
            const KlResult k = kl(behavior, current);
            out.value = k.value;
            out.d_mu = k.d_mu_q;
            out.d_sigma = k.d_sigma_q;
            return out;
        }
        case RegKind::KlPiMu: {
            const KlResult k = kl(current, behavior);
            out.value = k.value;
            out.d_mu = k.d_mu_p;
            out.d_sigma = k.d_sigma_p;
            return out;
        }
        case RegKind::KlRefPi: {
            const KlResult k = kl(reference_head(current.dim()), current);
            out.value = k.value;
            out.d_mu = k.d_mu_q;
            out.d_sigma = k.d_sigma_q;
            return out;
        }
        case RegKind::DecoupledKlMuPi:
            throw std::invalid_argument("decoupled KL must go through decoupled_reg_term");
    }
    throw std::logic_error("bad regularizer kind");
}

DecoupledRegTerm decoupled_reg_term(const GaussianHead& current, const GaussianHead& behavior) {
    const DecoupledKlResult d = decoupled_kl(behavior, current);
    DecoupledRegTerm out;
    out.mean_term.value = d.mean_term;
    out.mean_term.d_mu = d.d_mu_pi_mean;
    out.mean_term.d_sigma = d.d_sigma_pi_mean;
    out.std_term.value = d.std_term;
    out.std_term.d_mu = d.d_mu_pi_std;
    out.std_term.d_sigma = d.d_sigma_pi_std;
    return out;
}

double penalty_loss(double r, double alpha, RegKind kind) {
    if (alpha < 0.0) throw std::invalid_argument("penalty coefficient must be >= 0");
    return kind == RegKind::Entropy ? alpha * -r : alpha * r;
}

bool constraint_is_lower_bound(RegKind kind) { return kind == RegKind::Entropy; }

ConstraintLoss constraint_loss(double r_detached, const LagrangeState& state, double eps_threshold,
                               bool lower_bound) {
    const double alpha = state.alpha();
    const double violation = lower_bound ? r_detached - eps_threshold : eps_threshold - r_detached;
    // d(alpha * sg(violation))/dp = c * alpha * violation; descending on it
    // grows alpha while the constraint is violated
    return {alpha * violation, LagrangeState::kC * alpha * violation};
}

}  // namespace oplab
