#include <doctest.h>

#include <string>

#include "oplab/config.hpp"

using namespace oplab;

TEST_CASE("defaults match the base configuration") {
    ChoiceConfig c;
    CHECK(c.numenvs == 256);
    CHECK(c.stepsize == 2048);
    CHECK(c.numepochsperstep == 10);
    CHECK(c.batchsize == 64);
    CHECK(c.batchhandling == BatchHandling::ShuffleTransitions);
    CHECK(c.advantageestimator == AdvantageEstimator::Gae);
    CHECK(c.gaelambda == 0.95);
    CHECK(c.valueloss == ValueLossKind::Mse);
    CHECK(c.ppovalueclip.enabled);
    CHECK(c.ppovalueclip.value == 0.2);
    CHECK(c.policyloss == PolicyLossKind::Ppo);
    CHECK(c.ppoepsilon == 0.2);
    CHECK(c.discount == 0.99);
    CHECK(c.frameskip == 1);
    CHECK_FALSE(c.handleabandon);
    CHECK(c.optimizer == OptimizerKind::Adam);
    CHECK(c.adamlr == 3e-4);
    CHECK(c.adammom == 0.9);
    CHECK(c.adameps == 1e-7);
    CHECK(c.lrdecay == 0.0);
    CHECK(c.regularizationtype == RegMode::None);
    CHECK(c.mlpshared);
    CHECK(c.sharedwidth == 64);
    CHECK(c.shareddepth == 2);
    CHECK(c.baselinecost == 0.5);
    CHECK(c.activation == Activation::Tanh);
    CHECK(c.init == Init::OrthogonalGain141);
    CHECK(c.policyinit == 0.01);
    CHECK(c.stdind);
    CHECK(c.stdtransform == StdTransform::SafeExp);
    CHECK(c.initialstd == 1.0);
    CHECK(c.actionpost == ActionPost::Clip);
    CHECK(c.norminput);
    CHECK(c.clipinput.enabled);
    CHECK(c.clipinput.value == 10.0);
    CHECK(c.normreward);
    CHECK_FALSE(c.normadv);
    CHECK(c.clipgrad.enabled);
    CHECK(c.clipgrad.value == 0.5);
    c.validate();
}

TEST_CASE("set and get round trip every key") {
    ChoiceConfig c;
    for (const std::string& key : ChoiceConfig::keys()) {
        const std::string v = c.get(key);
        c.set(key, v);  // setting a key to its own value must be accepted
        CHECK(c.get(key) == v);
    }
}

TEST_CASE("set parses enums, numbers, flags, and optional clips") {
    ChoiceConfig c;
    c.set("policyloss.kind", "vmpo");
    CHECK(c.policyloss == PolicyLossKind::Vmpo);
    c.set("collect.numenvs", "8");
    CHECK(c.numenvs == 8);
    c.set("optimizer.adamlr", "0.001");
    CHECK(c.adamlr == 0.001);
    c.set("normalization.norminput", "none");
    CHECK_FALSE(c.norminput);
    c.set("normalization.norminput", "average");
    CHECK(c.norminput);
    c.set("normalization.clipgrad", "none");
    CHECK_FALSE(c.clipgrad.enabled);
    c.set("normalization.clipgrad", "0.25");
    CHECK(c.clipgrad.enabled);
    CHECK(c.clipgrad.value == 0.25);
    c.set("time.handleabandon", "true");
    CHECK(c.handleabandon);
    c.set("run.env", "swingup1d");
    CHECK(c.env == EnvId::SwingUp1D);
}

TEST_CASE("unknown keys and bad values name the offending key") {
    ChoiceConfig c;
    try {
        c.set("bogus.key", "1");
        FAIL("expected a throw");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("bogus.key") != std::string::npos);
    }
    try {
        c.set("collect.numenvs", "not_a_number");
        FAIL("expected a throw");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("collect.numenvs") != std::string::npos);
    }
    CHECK_THROWS(c.get("bogus.key"));
}

TEST_CASE("text format parses assignments and comments") {
    const std::string text =
        "# base overrides\n"
        "collect.numenvs = 4\n"
        "collect.stepsize = 64   # inline comment\n"
        "\n"
        "policyloss.kind = awr\n";
    const ChoiceConfig c = parse_config(text);
    CHECK(c.numenvs == 4);
    CHECK(c.stepsize == 64);
    CHECK(c.policyloss == PolicyLossKind::Awr);
    CHECK(c.batchsize == 64);  // untouched default
    CHECK_THROWS(parse_config("collect.numenvs 4\n"));
}

TEST_CASE("serialization covers every key and reparses to the same config") {
    ChoiceConfig c;
    c.set("policyloss.kind", "vtrace");
    c.set("optimizer.kind", "rmsprop");
    c.set("normalization.clipinput", "none");
    c.set("regularization.type", "constraint");
    c.set("regularization.kind", "kl_mu_pi");
    const std::string s = serialize_config(c);
    const ChoiceConfig back = parse_config(s);
    CHECK(serialize_config(back) == s);
    for (const std::string& key : ChoiceConfig::keys()) CHECK(back.get(key) == c.get(key));
}

TEST_CASE("config hash ignores key order but tracks values") {
    ChoiceConfig a = parse_config("collect.numenvs = 4\ncollect.stepsize = 64\n");
    ChoiceConfig b = parse_config("collect.stepsize = 64\ncollect.numenvs = 4\n");
    CHECK(config_hash(a) == config_hash(b));
    ChoiceConfig c = a;
    c.set("collect.stepsize", "128");
    CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("validate rejects inconsistent shapes") {
    ChoiceConfig c;
    c.set("collect.numenvs", "7");  // 2048 not divisible by 7
    CHECK_THROWS(c.validate());
    c.set("collect.numenvs", "256");
    c.set("collect.stepsize", "100");  // 100 not divisible by 256
    CHECK_THROWS(c.validate());
    c.set("collect.stepsize", "2048");
    c.set("collect.batchsize", "0");
    CHECK_THROWS(c.validate());
    c.set("collect.batchsize", "64");
    c.validate();
}

TEST_CASE("derived configs plumb the right fields") {
    ChoiceConfig c;
    c.set("time.discount", "0.97");
    c.set("time.frameskip", "2");
    const EstimatorCfg e = c.estimator_cfg();
    CHECK(e.kind == AdvantageEstimator::Gae);
    CHECK(e.lambda == 0.95);
    // frame skipping compounds the per-step discount
    CHECK(c.effective_discount() == doctest::Approx(0.97 * 0.97).epsilon(1e-12));
    CHECK(e.gamma == doctest::Approx(c.effective_discount()).epsilon(1e-12));

    c.set("optimizer.kind", "rmsprop");
    c.set("optimizer.rmslr", "0.002");
    c.set("optimizer.rmsmom", "0.5");
    const OptimCfg o = c.optim_cfg();
    CHECK(o.kind == OptimizerKind::RmsProp);
    CHECK(o.lr == 0.002);
    CHECK(o.momentum == 0.5);

    const PolicyLossCfg p = c.policy_loss_cfg();
    CHECK(p.kind == PolicyLossKind::Ppo);
    CHECK(p.ppo_epsilon == 0.2);
    CHECK(p.awr_beta == 0.01);
    CHECK(p.awr_w_max == 1.3);

    const ValueLossCfg v = c.value_loss_cfg();
    CHECK(v.ppo_clip_enabled);
    CHECK(v.ppo_clip == 0.2);

    const DistConfig d = c.dist_cfg();
    CHECK(d.initial_std == 1.0);
    CHECK(d.min_std == 1e-3);

    CHECK(c.fragment_length() == 2048 / 256);
}

TEST_CASE("batch handling enum round trip") {
    for (BatchHandling b : {BatchHandling::FixedTrajectories, BatchHandling::ShuffleTrajectories,
                            BatchHandling::ShuffleTransitions, BatchHandling::ShuffleTransitionsRecompute})
        CHECK(batch_handling_from_string(to_string(b)) == b);
}
