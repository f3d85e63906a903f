#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "oplab/actiondist.hpp"
#include "oplab/envkit.hpp"
#include "oplab/estimators.hpp"
#include "oplab/neuralnet.hpp"
#include "oplab/optimizers.hpp"
#include "oplab/policylosses.hpp"
#include "oplab/regularizers.hpp"

namespace oplab {

enum class BatchHandling { FixedTrajectories, ShuffleTrajectories, ShuffleTransitions, ShuffleTransitionsRecompute };

BatchHandling batch_handling_from_string(const std::string& s);
std::string to_string(BatchHandling b);

/// An optional positive threshold; "none" in the config file disables it.
struct OptionalClip {
    bool enabled = false;
    double value = 0.0;
};

/// One field per algorithmic choice, plus the run block. Defaults follow
/// the PPO-style base configuration the studies perturb around.
struct ChoiceConfig {
    // data collection and optimization loop
    int numenvs = 256;
    int stepsize = 2048;
    int numepochsperstep = 10;
    int batchsize = 64;
    BatchHandling batchhandling = BatchHandling::ShuffleTransitions;

    // advantage estimation
    AdvantageEstimator advantageestimator = AdvantageEstimator::Gae;
    int nstep = 10;
    double gaelambda = 0.95;
    double vtraceaelambda = 0.95;
    double vtraceaecrho = 1.0;

    // value loss
    ValueLossKind valueloss = ValueLossKind::Mse;
    double huberdelta = 1.0;
    OptionalClip ppovalueclip{true, 0.2};

    // policy loss
    PolicyLossKind policyloss = PolicyLossKind::Ppo;
    double ppoepsilon = 0.2;
    double vtracelossrho = 1.0;
    double awrbeta = 0.01;
    double awrw = 1.3;
    double vmpoeps = 0.01;

    // timesteps
    double discount = 0.99;
    int frameskip = 1;
    bool handleabandon = false;

    // optimizer
    OptimizerKind optimizer = OptimizerKind::Adam;
    double adamlr = 3e-4;
    double adammom = 0.9;
    double adameps = 1e-7;
    double rmslr = 3e-4;
    double rmsmom = 0.0;
    double rmseps = 1e-7;
    bool rmscent = false;
    double rmsdecay = 0.9;
    double lrdecay = 0.0;

    // regularization
    RegMode regularizationtype = RegMode::None;
    RegKind regularizer = RegKind::Entropy;
    double regpenalty = 0.01;
    double regthreshold = 0.01;
    double regpenaltymean = 0.03;
    double regpenaltystd = 1.0;
    double regthresholdmean = 0.01;
    double regthresholdstd = 0.0005;

    // network
    bool mlpshared = true;
    int sharedwidth = 64;
    int shareddepth = 2;
    int policywidth = 64;
    int policydepth = 2;
    int valuewidth = 64;
    int valuedepth = 2;
    double baselinecost = 0.5;
    Activation activation = Activation::Tanh;
    Init init = Init::OrthogonalGain141;
    double policyinit = 0.01;
    double valueinit = 1.0;

    // action distribution
    bool stdind = true;
    StdTransform stdtransform = StdTransform::SafeExp;
    double initialstd = 1.0;
    double minstd = 1e-3;
    ActionPost actionpost = ActionPost::Clip;

    // normalization and clipping
    bool norminput = true;  // "average" vs "none"
    OptionalClip clipinput{true, 10.0};
    bool normreward = true;
    bool normadv = false;
    OptionalClip clipgrad{true, 0.5};

    // run block
    EnvId env = EnvId::PointMass2D;
    long totalsteps = 200000;
    long evalinterval = 10000;
    int evalepisodes = 20;

    /// Set one dotted key from its string form; throws with the key name
    /// on unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;

    static const std::vector<std::string>& keys();

    /// Validates cross-field invariants (divisibility, positivity, ...).
    void validate() const;

    /// Derived quantities.
    int fragment_length() const { return stepsize / numenvs; }
    double effective_discount() const;
    EstimatorCfg estimator_cfg() const;
    ValueLossCfg value_loss_cfg() const;
    PolicyLossCfg policy_loss_cfg() const;
    OptimCfg optim_cfg() const;
    DistConfig dist_cfg() const;
    RegularizerCfg regularizer_cfg() const;
};

/// Parse the `key = value` text format; '#' starts a comment.
ChoiceConfig parse_config(const std::string& text);
ChoiceConfig load_config_file(const std::string& path);

/// Canonical serialization: every key, fixed order. Hashing this makes
/// the hash independent of the input file's key order.
std::string serialize_config(const ChoiceConfig& cfg);
uint64_t config_hash(const ChoiceConfig& cfg);

std::string format_double(double v);

}  // namespace oplab
