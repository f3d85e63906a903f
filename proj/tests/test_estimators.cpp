#include <doctest.h>

#include <cmath>

#include "oplab/estimators.hpp"
#include "oplab/math.hpp"

using namespace oplab;

namespace {

Fragment random_fragment(Rng& rng, int T, bool with_terminals) {
    Fragment f;
    for (int t = 0; t < T; ++t) {
        f.rewards.push_back(rng.normal());
        f.values.push_back(rng.normal());
        const bool term = with_terminals && rng.uniform() < 0.15;
        f.terminated.push_back(term ? 1 : 0);
        f.abandoned.push_back(0);
        f.behavior_log_probs.push_back(rng.normal() * 0.1);
        f.target_log_probs.push_back(f.behavior_log_probs.back());
    }
    f.bootstrap_value = rng.normal();
    return f;
}

std::vector<char> terminal_of(const Fragment& f, bool handle_abandoned) {
    std::vector<char> t(f.length());
    for (int i = 0; i < f.length(); ++i)
        t[i] = (f.terminated[i] || (!handle_abandoned && f.abandoned[i])) ? 1 : 0;
    return t;
}

}  // namespace

TEST_CASE("one-step targets are TD targets") {
    Rng rng(201);
    Fragment f = random_fragment(rng, 8, true);
    const auto term = terminal_of(f, false);
    const AdvantageOutput out = nstep(f, term, 0.9, 1);
    for (int t = 0; t < 8; ++t) {
        const double next_v = term[t] ? 0.0 : (t + 1 < 8 ? f.values[t + 1] : f.bootstrap_value);
        const double target = f.rewards[t] + 0.9 * next_v;
        CHECK(out.value_targets[t] == doctest::Approx(target).epsilon(1e-12));
        CHECK(out.advantages[t] == doctest::Approx(target - f.values[t]).epsilon(1e-12));
    }
}

TEST_CASE("n-step targets truncate at termination and bootstrap at the end") {
    Fragment f;
    f.rewards = {1.0, 2.0, 3.0, 4.0};
    f.values = {0.1, 0.2, 0.3, 0.4};
    f.terminated = {0, 1, 0, 0};
    f.abandoned = {0, 0, 0, 0};
    f.behavior_log_probs = {0, 0, 0, 0};
    f.target_log_probs = {0, 0, 0, 0};
    f.bootstrap_value = 10.0;
    const std::vector<char> term = {0, 1, 0, 0};
    const double g = 0.5;
    const AdvantageOutput out = nstep(f, term, g, 3);
    // t=0: r0 + g r1 (episode ends at t=1, no bootstrap)
    CHECK(out.value_targets[0] == doctest::Approx(1.0 + g * 2.0).epsilon(1e-12));
    // t=1: r1 alone
    CHECK(out.value_targets[1] == doctest::Approx(2.0).epsilon(1e-12));
    // t=2: r2 + g r3 + g^2 V_boot (fragment end before 3 steps elapse)
    CHECK(out.value_targets[2] == doctest::Approx(3.0 + g * 4.0 + g * g * 10.0).epsilon(1e-12));
    // t=3: r3 + g V_boot
    CHECK(out.value_targets[3] == doctest::Approx(4.0 + g * 10.0).epsilon(1e-12));
}

TEST_CASE("gae(lambda=0) reduces to one-step TD") {
    Rng rng(203);
    Fragment f = random_fragment(rng, 12, true);
    const auto term = terminal_of(f, false);
    const AdvantageOutput g0 = gae(f, term, 0.97, 0.0);
    const AdvantageOutput td = nstep(f, term, 0.97, 1);
    for (int t = 0; t < 12; ++t) {
        CHECK(g0.advantages[t] == doctest::Approx(td.advantages[t]).epsilon(1e-10));
        CHECK(g0.value_targets[t] == doctest::Approx(td.value_targets[t]).epsilon(1e-10));
    }
}

TEST_CASE("gae(lambda=1) equals the full discounted return minus the value") {
    Rng rng(207);
    Fragment f = random_fragment(rng, 10, false);  // no terminations: clean telescoping
    const std::vector<char> term(10, 0);
    const double g = 0.92;
    const AdvantageOutput out = gae(f, term, g, 1.0);
    for (int t = 0; t < 10; ++t) {
        double ret = 0.0, d = 1.0;
        for (int k = t; k < 10; ++k) {
            ret += d * f.rewards[k];
            d *= g;
        }
        ret += d * f.bootstrap_value;
        CHECK(out.advantages[t] == doctest::Approx(ret - f.values[t]).epsilon(1e-10));
    }
}

TEST_CASE("gae value targets are advantage plus value") {
    Rng rng(211);
    Fragment f = random_fragment(rng, 9, true);
    const auto term = terminal_of(f, false);
    const AdvantageOutput out = gae(f, term, 0.99, 0.95);
    for (int t = 0; t < 9; ++t)
        CHECK(out.value_targets[t] == doctest::Approx(out.advantages[t] + f.values[t]).epsilon(1e-12));
}

TEST_CASE("on-policy v-trace equals gae for many random fragments") {
    Rng rng(213);
    for (int trial = 0; trial < 100; ++trial) {
        Fragment f = random_fragment(rng, 16, true);
        // on-policy: target == behavior
        const auto term = terminal_of(f, false);
        const double lam = rng.uniform();
        const AdvantageOutput vt = vtrace_estimate(f, term, 0.99, lam, 1.0, 1.0);
        const AdvantageOutput ga = gae(f, term, 0.99, lam);
        for (int t = 0; t < 16; ++t) {
            CHECK(vt.advantages[t] == doctest::Approx(ga.advantages[t]).epsilon(1e-10));
            CHECK(vt.value_targets[t] == doctest::Approx(ga.value_targets[t]).epsilon(1e-10));
        }
    }
}

TEST_CASE("v-trace truncates importance weights at rho_bar") {
    // Single transition, off-policy with a huge ratio: the truncated weight
    // caps the advantage scale.
    Fragment f;
    f.rewards = {1.0};
    f.values = {0.0};
    f.terminated = {0};
    f.abandoned = {0};
    f.behavior_log_probs = {0.0};
    f.target_log_probs = {5.0};  // ratio e^5 >> rho_bar
    f.bootstrap_value = 2.0;
    const std::vector<char> term = {0};
    const double g = 0.9;
    const AdvantageOutput out = vtrace_estimate(f, term, g, 1.0, 1.0, 1.0);
    // delta = rho_trunc * (r + g*V_boot - V) with rho_trunc = 1
    const double delta = 1.0 * (1.0 + g * 2.0 - 0.0);
    CHECK(out.value_targets[0] == doctest::Approx(0.0 + delta).epsilon(1e-12));
    // advantage uses the same truncated rho: rho * (r + g*mixed_next - V)
    CHECK(out.advantages[0] == doctest::Approx(1.0 * (1.0 + g * 2.0 - 0.0)).epsilon(1e-12));

    // and with a generous rho_bar the weight is the actual ratio
    const AdvantageOutput big = vtrace_estimate(f, term, g, 1.0, 1000.0, 1000.0);
    CHECK(big.value_targets[0] == doctest::Approx(std::exp(5.0) * delta).epsilon(1e-10));
}

TEST_CASE("abandoned handling zeroes the advantage and targets the value") {
    Rng rng(217);
    Fragment f = random_fragment(rng, 6, false);
    f.abandoned[3] = 1;

    EstimatorCfg cfg;
    cfg.kind = AdvantageEstimator::Gae;
    cfg.gamma = 0.95;
    cfg.lambda = 0.9;

    cfg.handle_abandoned = false;
    const AdvantageOutput off = estimate(f, cfg);
    // without handling: abandonment acts as termination
    std::vector<char> term(6, 0);
    term[3] = 1;
    const AdvantageOutput ref_off = gae(f, term, 0.95, 0.9);
    for (int t = 0; t < 6; ++t) CHECK(off.advantages[t] == doctest::Approx(ref_off.advantages[t]).epsilon(1e-12));

    cfg.handle_abandoned = true;
    const AdvantageOutput on = estimate(f, cfg);
    CHECK(on.advantages[3] == 0.0);
    CHECK(on.value_targets[3] == doctest::Approx(f.values[3]).epsilon(1e-12));
    // the step before the abandoned one bootstraps through it: its advantage
    // must differ from the treat-as-termination case
    CHECK(on.advantages[2] != doctest::Approx(off.advantages[2]).epsilon(1e-12));
}

TEST_CASE("estimate dispatches on the configured kind") {
    Rng rng(219);
    Fragment f = random_fragment(rng, 8, true);
    const auto term = terminal_of(f, false);
    EstimatorCfg cfg;
    cfg.gamma = 0.99;
    cfg.lambda = 0.9;
    cfg.nstep = 5;

    cfg.kind = AdvantageEstimator::NStep;
    auto a = estimate(f, cfg);
    auto ra = nstep(f, term, 0.99, 5);
    CHECK(a.advantages == ra.advantages);

    cfg.kind = AdvantageEstimator::Gae;
    auto b = estimate(f, cfg);
    auto rb = gae(f, term, 0.99, 0.9);
    CHECK(b.advantages == rb.advantages);

    cfg.kind = AdvantageEstimator::VTrace;
    auto c = estimate(f, cfg);
    auto rc = vtrace_estimate(f, term, 0.99, 0.9, 1.0, 1.0);
    CHECK(c.advantages == rc.advantages);
}

TEST_CASE("value loss: mse and huber match closed forms") {
    ValueLossCfg cfg;
    cfg.kind = ValueLossKind::Mse;
    ValueLossResult r = value_loss(2.0, 2.0, 5.0, cfg);
    CHECK(r.loss == doctest::Approx(9.0));
    CHECK(r.d_pred == doctest::Approx(-6.0));

    cfg.kind = ValueLossKind::Huber;
    cfg.huber_delta = 1.0;
    // |err| = 3 > delta: linear branch delta*(|err| - delta/2)
    r = value_loss(2.0, 2.0, 5.0, cfg);
    CHECK(r.loss == doctest::Approx(1.0 * (3.0 - 0.5)));
    CHECK(r.d_pred == doctest::Approx(-1.0));
    // |err| = 0.4 < delta: quadratic branch err^2/2
    r = value_loss(2.0, 2.0, 2.4, cfg);
    CHECK(r.loss == doctest::Approx(0.5 * 0.4 * 0.4));
    CHECK(r.d_pred == doctest::Approx(-0.4));
}

TEST_CASE("ppo value clipping takes the pessimistic branch") {
    ValueLossCfg cfg;
    cfg.kind = ValueLossKind::Mse;
    cfg.ppo_clip_enabled = true;
    cfg.ppo_clip = 0.5;

    // pred moved far above old toward the target: clipped pred = old + 0.5
    // is farther from the target, so the clipped loss wins and the gradient
    // through pred is zero (the clip is active).
    ValueLossResult r = value_loss(3.0, 1.0, 3.0, cfg);
    const double clipped_pred = 1.5;
    CHECK(r.loss == doctest::Approx((clipped_pred - 3.0) * (clipped_pred - 3.0)));
    CHECK(r.d_pred == 0.0);

    // pred moved away from the target: unclipped loss is the max, gradient flows
    r = value_loss(3.0, 1.0, 0.0, cfg);
    CHECK(r.loss == doctest::Approx(9.0));
    CHECK(r.d_pred == doctest::Approx(6.0));

    // tie (pred within the clip band): unclipped branch, gradient flows
    r = value_loss(1.2, 1.0, 0.0, cfg);
    CHECK(r.loss == doctest::Approx(1.44));
    CHECK(r.d_pred == doctest::Approx(2.4));
}

TEST_CASE("estimator enum round trip") {
    for (AdvantageEstimator e : {AdvantageEstimator::NStep, AdvantageEstimator::Gae, AdvantageEstimator::VTrace})
        CHECK(advantage_estimator_from_string(to_string(e)) == e);
}
