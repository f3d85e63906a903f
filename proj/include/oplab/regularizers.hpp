#pragma once

#include <string>

#include "oplab/actiondist.hpp"

namespace oplab {

enum class RegMode { None, Penalty, Constraint };
enum class RegKind { Entropy, KlMuPi, KlPiMu, KlRefPi, DecoupledKlMuPi };

RegMode reg_mode_from_string(const std::string& s);
std::string to_string(RegMode m);
RegKind reg_kind_from_string(const std::string& s);
std::string to_string(RegKind k);

struct RegularizerCfg {
    RegMode mode = RegMode::None;
    RegKind kind = RegKind::Entropy;
    double penalty = 0.0;    // alpha, penalty mode
    double threshold = 0.0;  // eps, constraint mode
    // decoupled KL carries separate mean/std parameters
    double penalty_mean = 0.0, penalty_std = 0.0;
    double threshold_mean = 0.0, threshold_std = 0.0;
};

/// Lagrange multiplier alpha = exp(c*p) with c = 10 and p clipped so that
/// alpha stays in [1e-6, 1e6].
struct LagrangeState {
    double p = 0.0;
    static constexpr double kC = 10.0;

    double alpha() const;
    void clip();
};

/// Regularizer value with gradients w.r.t. the current policy's head.
/// Entropy returns H itself (the caller owns the sign); KL kinds return
/// the requested divergence with mu/ref treated as constants.
struct RegTerm {
    double value = 0.0;
    std::vector<double> d_mu;
    std::vector<double> d_sigma;
};

/// For the entropy kind under tanh postprocessing, pass the standard
/// normal noise of the stored sample so the squashed-entropy estimate is
/// differentiable along the reparameterized path; pass empty otherwise.
RegTerm reg_term(RegKind kind, const GaussianHead& current, const GaussianHead& behavior,
                 std::span<const double> tanh_noise = {});

/// Both components of the decoupled KL(mu || pi), each with gradients
/// w.r.t. the current policy.
struct DecoupledRegTerm {
    RegTerm mean_term;
    RegTerm std_term;
};
DecoupledRegTerm decoupled_reg_term(const GaussianHead& current, const GaussianHead& behavior);

/// Penalty contribution alpha * R, with R = -H for entropy so that
/// minimizing the loss rewards high entropy.
double penalty_loss(double r, double alpha, RegKind kind);

/// Whether the constraint is a floor on R (entropy) rather than a ceiling.
bool constraint_is_lower_bound(RegKind kind);

/// The multiplier-training term alpha * sg(eps - R) (sign flipped for
/// lower-bound constraints) and its gradient w.r.t. p.
struct ConstraintLoss {
    double loss_term = 0.0;
    double d_p = 0.0;
};
ConstraintLoss constraint_loss(double r_detached, const LagrangeState& state, double eps_threshold,
                               bool lower_bound);

}  // namespace oplab
