#pragma once

#include <string>
#include <vector>

#include "oplab/actiondist.hpp"
#include "oplab/checkpoint.hpp"
#include "oplab/config.hpp"
#include "oplab/dataflow.hpp"
#include "oplab/envkit.hpp"
#include "oplab/estimators.hpp"
#include "oplab/math.hpp"
#include "oplab/neuralnet.hpp"
#include "oplab/optimizers.hpp"
#include "oplab/policylosses.hpp"
#include "oplab/regularizers.hpp"

namespace oplab {

/// Policy and value networks behind one flat-parameter facade. In shared
/// mode a single torso feeds a policy head and a value head; in separate
/// mode two independent MLPs are concatenated in the flat vector. When the
/// std is state-independent, the global x_rho vector is appended after the
/// network parameters.
class PolicyValueNet {
public:
    PolicyValueNet() = default;
    PolicyValueNet(const ChoiceConfig& cfg, int obs_dim, int act_dim, Rng& rng);

    int obs_dim() const { return obs_dim_; }
    int act_dim() const { return act_dim_; }
    bool shared() const { return shared_; }
    bool std_independent() const { return dist_.std_independent; }
    /// Width of the policy output: act_dim, or 2*act_dim when the raw std
    /// is a second bank of state-dependent outputs.
    int policy_out_dim() const;
    const DistConfig& dist() const { return dist_; }

    struct Eval {
        Matrix policy_out;           // batch x policy_out_dim
        std::vector<double> values;  // batch, in normalized target space
        Mlp::Cache cache_a;          // shared net or policy net
        Mlp::Cache cache_b;          // value net (separate mode only)
    };

    Eval forward(const Matrix& norm_obs) const;
    /// The action distribution for one row of an Eval.
    GaussianHead head(const Eval& ev, int row) const;

    /// Routes (d_mu, d_sigma) for one row into the policy-output gradient
    /// matrix or the global x_rho gradient, chaining through the std
    /// transform recorded in `head`.
    void accumulate_dist_grad(const GaussianHead& head, int row, std::span<const double> d_mu,
                              std::span<const double> d_sigma, Matrix& d_policy_out);

    void backward(const Eval& ev, const Matrix& d_policy_out, std::span<const double> d_values);

    void zero_grad();
    void mark_params_changed();

    size_t num_params() const;
    void gather_params(std::span<double> out) const;
    void scatter_params(std::span<const double> in);
    void gather_grads(std::span<double> out) const;

    void save_to(TensorStore& store, const std::string& prefix) const;
    void load_from(const TensorStore& store, const std::string& prefix);

private:
    std::vector<const Mlp*> nets() const;
    std::vector<Mlp*> nets();

    int obs_dim_ = 0;
    int act_dim_ = 0;
    bool shared_ = true;
    DistConfig dist_;
    Mlp net_a_;  // shared net, or the policy net in separate mode
    Mlp net_b_;  // value net in separate mode
    std::vector<double> x_rho_;
    std::vector<double> d_x_rho_;
};

/// One iteration's worth of experience, stored env-major: the transition
/// (e, t) lives at flat index e * frag_len + t.
struct ExperienceBuffer {
    int num_envs = 0;
    int frag_len = 0;
    std::vector<Fragment> fragments;
    Matrix raw_obs;        // N x obs_dim
    Matrix raw_final_obs;  // num_envs x obs_dim, states after the fragments
    Matrix norm_obs;     // N x obs_dim, as fed to the policy at collection
    Matrix raw_actions;  // N x act_dim, pre-squash Gaussian samples
    Matrix tanh_noise;   // N x act_dim, z = (x - mu) / sigma at collection
    std::vector<GaussianHead> behavior;  // N

    // training targets, refreshed per epoch in recompute mode
    std::vector<double> advantages;
    std::vector<double> norm_targets;
    std::vector<double> old_value_pred;  // normalized, fixed within the iteration

    int size() const { return num_envs * frag_len; }
    int index(int e, int t) const { return e * frag_len + t; }
};

/// Minibatch index sets for one epoch. Fragment-level modes require the
/// batch size to be a multiple of the fragment length; fixed_trajectories
/// ignores the rng and returns the same partition every epoch.
std::vector<std::vector<int>> make_minibatches(int num_envs, int frag_len, BatchHandling mode, int batchsize,
                                               Rng& rng);

struct EvalPoint {
    long env_steps = 0;
    double mean_return = 0.0;
};

struct IterationMetrics {
    long iteration = 0;
    long env_steps = 0;
    double mean_return = 0.0;  // episodes finished during collection; NaN if none
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double reg_value = 0.0;
    double entropy = 0.0;
    double kl = 0.0;  // mean KL(behavior || current) over updates
    double grad_norm = 0.0;
    double lr = 0.0;
    double multiplier = 0.0;
    double multiplier2 = 0.0;
    double vmpo_eta = 0.0;
    double eval_return = 0.0;  // latest evaluation; NaN before the first one
    std::vector<double> epoch_kl;  // mean KL(behavior || current) after each epoch
};

struct RunResult {
    std::vector<EvalPoint> evals;
    std::vector<IterationMetrics> metrics;
    bool failed = false;
    double score = 0.0;
};

/// Mean of the per-checkpoint evaluation returns.
double performance_score(const std::vector<EvalPoint>& curve);
/// Median across seeds.
double aggregate_seeds(std::vector<double> scores);

/// One training run: synchronous collection, advantage estimation, epochs
/// of minibatch updates, periodic deterministic evaluation.
class Trainer {
public:
    Trainer(const ChoiceConfig& cfg, uint64_t seed);

    const ChoiceConfig& cfg() const { return cfg_; }
    PolicyValueNet& net() { return net_; }
    ExperienceBuffer& buffer() { return buffer_; }
    RunningMoments& obs_stats() { return obs_stats_; }
    RunningMoments& value_stats() { return value_stats_; }
    long env_steps() const { return env_steps_; }

    RunResult run();

    void collect_iteration();
    /// (Re)estimates advantages and value targets over the buffer. With
    /// refresh_values, value predictions and target log-probs are first
    /// recomputed with the current networks (recompute mode).
    void prepare_targets(bool refresh_values);
    /// Runs numepochsperstep epochs of minibatch updates; false on a
    /// non-finite loss or gradient (run failed).
    bool train_iteration(IterationMetrics& metrics);

    /// Mean undiscounted return of the deterministic (mean-action) policy.
    double evaluate(int episodes, Rng rng);

    struct BatchLoss {
        double total = 0.0;
        double policy = 0.0;
        double value = 0.0;
        double reg = 0.0;
        double entropy = 0.0;
        double kl = 0.0;
    };

    // Flat parameter vector: network parameters, then x_rho when the std is
    // state-independent, then Lagrange multiplier p(s), then the V-MPO
    // temperature p. Exposed for optimizer wiring and finite-difference
    // gradient checks.
    size_t num_params() const;
    std::vector<double> get_params() const;
    void set_params(std::span<const double> p);
    /// Loss over the given buffer indices; accumulates the flat gradient
    /// into *grad when non-null (grad is overwritten, not accumulated).
    BatchLoss batch_loss(std::span<const int> idx, std::vector<double>* grad);

    double mean_behavior_kl();

    void save_checkpoint(const std::string& path) const;
    void load_checkpoint(const std::string& path);

    static void write_metrics_csv(const std::string& path, const std::vector<IterationMetrics>& metrics);
    void write_summary_json(const std::string& path, const RunResult& result) const;

private:
    int num_extra_params() const;
    double compute_failed_run_baseline();

    ChoiceConfig cfg_;
    uint64_t seed_ = 0;
    EnvSpec env_spec_;
    VecEnv vec_env_;
    PolicyValueNet net_;
    Optimizer optimizer_;
    RunningMoments obs_stats_;
    RunningMoments value_stats_;
    ExperienceBuffer buffer_;

    LagrangeState lagrange_;        // constraint mode
    LagrangeState lagrange_std_;    // decoupled constraint, std component
    VmpoTemperature vmpo_temp_;

    Rng action_rng_;
    Rng shuffle_rng_;
    Rng misc_rng_;

    long env_steps_ = 0;
    long iteration_ = 0;
    std::vector<std::vector<double>> current_obs_;
    std::vector<double> episode_return_acc_;
    std::vector<double> completed_returns_;  // within the current iteration
    std::vector<double> initial_params_;
};

}  // namespace oplab
