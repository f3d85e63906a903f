#pragma once

#include <string>
#include <vector>

#include "oplab/math.hpp"

namespace oplab {

enum class StdTransform { SafeExp, Softplus };
enum class ActionPost { Clip, Tanh };

StdTransform std_transform_from_string(const std::string& s);
std::string to_string(StdTransform t);
ActionPost action_post_from_string(const std::string& s);
std::string to_string(ActionPost p);

/// T_rho(x): nonnegative transform of the raw std parameter, with its
/// derivative. safe_exp clips the exponent to [-15, 15] but keeps a
/// straight-through derivative of exp(clip(x)).
struct TransformResult {
    double value = 0.0;
    double deriv = 0.0;
};
TransformResult std_transform(StdTransform kind, double x);
/// Inverse of T_rho; needed to solve for the std offset.
double std_transform_inverse(StdTransform kind, double y);

struct DistConfig {
    StdTransform std_transform = StdTransform::SafeExp;
    ActionPost action_post = ActionPost::Clip;
    double initial_std = 1.0;  // sigma at x_rho = 0
    double min_std = 1e-3;     // additive floor eps_rho
    bool std_independent = true;

    /// Offset c_rho with T(c_rho) + min_std = initial_std.
    double std_offset() const;
};

/// Diagonal Gaussian over raw actions for one state, after the std
/// transform chain. dsigma_dxrho is kept so losses can chain gradients
/// back to the raw network output (or the global std parameter).
struct GaussianHead {
    std::vector<double> mu;
    std::vector<double> sigma;
    std::vector<double> dsigma_dxrho;
    ActionPost action_post = ActionPost::Clip;

    int dim() const { return static_cast<int>(mu.size()); }
};

GaussianHead build_head(std::span<const double> x_mu, std::span<const double> x_rho, const DistConfig& cfg);

struct ActionSample {
    std::vector<double> raw;         // Gaussian sample x
    std::vector<double> env_action;  // T_u(x), in [-1, 1]
    double behavior_log_prob = 0.0;
};

ActionSample sample(const GaussianHead& head, Rng& rng);

/// log tanh'(x), evaluated stably.
double log_tanh_deriv(double x);

/// Diagonal Gaussian log density of a raw sample. Policy losses always
/// consume this quantity; the tanh density correction cancels in ratios
/// and KLs and is only needed for entropy.
struct LogProbResult {
    double value = 0.0;
    std::vector<double> d_mu;     // d log p / d mu_i
    std::vector<double> d_sigma;  // d log p / d sigma_i
};
LogProbResult log_prob(const GaussianHead& head, std::span<const double> raw);

/// Analytic entropy of the unsquashed Gaussian (clip mode).
struct EntropyResult {
    double value = 0.0;
    std::vector<double> d_mu;
    std::vector<double> d_sigma;
};
EntropyResult entropy(const GaussianHead& head);

/// Single-sample entropy estimate for the tanh-squashed distribution,
/// reparameterized with fixed standard normal noise z:
///   H ~= -log p(mu + sigma z) + sum_i log tanh'(mu_i + sigma_i z_i).
EntropyResult entropy_tanh_sample(const GaussianHead& head, std::span<const double> z);

/// KL(p || q) between diagonal Gaussians, with gradients w.r.t. both sides.
struct KlResult {
    double value = 0.0;
    std::vector<double> d_mu_p, d_sigma_p;
    std::vector<double> d_mu_q, d_sigma_q;
};
KlResult kl(const GaussianHead& p, const GaussianHead& q);

/// KL(mu || pi) split through zeta = N(mean(mu), std(pi)):
/// std_term = KL(mu || zeta), mean_term = KL(zeta || pi); the two sum to
/// the full KL exactly. Gradients are w.r.t. pi.
struct DecoupledKlResult {
    double mean_term = 0.0;
    double std_term = 0.0;
    std::vector<double> d_mu_pi_mean, d_sigma_pi_mean;  // grads of mean_term
    std::vector<double> d_mu_pi_std, d_sigma_pi_std;    // grads of std_term
};
DecoupledKlResult decoupled_kl(const GaussianHead& mu, const GaussianHead& pi);

}  // namespace oplab
