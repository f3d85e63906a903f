#include <doctest.h>

#include <cmath>

#include "oplab/actiondist.hpp"

using namespace oplab;

namespace {

GaussianHead random_head(Rng& rng, int dim, ActionPost post = ActionPost::Clip) {
    GaussianHead h;
    h.action_post = post;
    for (int i = 0; i < dim; ++i) {
        h.mu.push_back(rng.normal());
        h.sigma.push_back(0.3 + rng.uniform());
        h.dsigma_dxrho.push_back(1.0);
    }
    return h;
}

double gauss_log_density(const GaussianHead& h, const std::vector<double>& x) {
    double lp = 0.0;
    for (int i = 0; i < h.dim(); ++i) {
        const double z = (x[i] - h.mu[i]) / h.sigma[i];
        lp += -0.5 * z * z - std::log(h.sigma[i]) - 0.5 * std::log(2.0 * M_PI);
    }
    return lp;
}

}  // namespace

TEST_CASE("safe_exp clips the value but keeps a straight-through slope") {
    const TransformResult mid = std_transform(StdTransform::SafeExp, 1.0);
    CHECK(mid.value == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
    CHECK(mid.deriv == doctest::Approx(std::exp(1.0)).epsilon(1e-12));

    const TransformResult hi = std_transform(StdTransform::SafeExp, 40.0);
    CHECK(hi.value == doctest::Approx(std::exp(15.0)).epsilon(1e-12));
    CHECK(hi.deriv == doctest::Approx(std::exp(15.0)).epsilon(1e-12));  // straight-through, not zero

    const TransformResult lo = std_transform(StdTransform::SafeExp, -40.0);
    CHECK(lo.value == doctest::Approx(std::exp(-15.0)).epsilon(1e-12));
    CHECK(lo.deriv == doctest::Approx(std::exp(-15.0)).epsilon(1e-12));
}

TEST_CASE("softplus transform matches log(1+exp) and its derivative") {
    const TransformResult r = std_transform(StdTransform::Softplus, 0.7);
    CHECK(r.value == doctest::Approx(std::log1p(std::exp(0.7))).epsilon(1e-12));
    CHECK(r.deriv == doctest::Approx(1.0 / (1.0 + std::exp(-0.7))).epsilon(1e-12));
}

TEST_CASE("std offset solves T(c) + min_std = initial_std") {
    for (StdTransform t : {StdTransform::SafeExp, StdTransform::Softplus}) {
        DistConfig cfg;
        cfg.std_transform = t;
        cfg.initial_std = 0.5;
        cfg.min_std = 1e-3;
        const double c = cfg.std_offset();
        CHECK(std_transform(t, c).value + cfg.min_std == doctest::Approx(0.5).epsilon(1e-10));
    }
}

TEST_CASE("build_head applies offset, transform, and floor") {
    DistConfig cfg;
    cfg.initial_std = 1.0;
    cfg.min_std = 1e-3;
    const std::vector<double> x_mu = {0.2, -0.4};
    const std::vector<double> x_rho = {0.0, -100.0};
    const GaussianHead h = build_head(x_mu, x_rho, cfg);
    CHECK(h.mu[0] == 0.2);
    CHECK(h.mu[1] == -0.4);
    CHECK(h.sigma[0] == doctest::Approx(1.0).epsilon(1e-10));  // x_rho = 0 -> initial std
    // far-negative raw std bottoms out at exp(-15) + floor
    CHECK(h.sigma[1] == doctest::Approx(std::exp(-15.0) + 1e-3).epsilon(1e-10));
}

TEST_CASE("log_prob matches the Gaussian density and finite differences") {
    Rng rng(101);
    for (int trial = 0; trial < 30; ++trial) {
        GaussianHead h = random_head(rng, 3);
        std::vector<double> x = {rng.normal(), rng.normal(), rng.normal()};
        const LogProbResult lp = log_prob(h, x);
        CHECK(lp.value == doctest::Approx(gauss_log_density(h, x)).epsilon(1e-10));

        const double eps = 1e-6;
        for (int i = 0; i < 3; ++i) {
            GaussianHead hp = h, hm = h;
            hp.mu[i] += eps;
            hm.mu[i] -= eps;
            const double fd_mu = (gauss_log_density(hp, x) - gauss_log_density(hm, x)) / (2 * eps);
            CHECK(lp.d_mu[i] == doctest::Approx(fd_mu).epsilon(1e-5));
            hp = h;
            hm = h;
            hp.sigma[i] += eps;
            hm.sigma[i] -= eps;
            const double fd_sig = (gauss_log_density(hp, x) - gauss_log_density(hm, x)) / (2 * eps);
            CHECK(lp.d_sigma[i] == doctest::Approx(fd_sig).epsilon(1e-5));
        }
    }
}

TEST_CASE("analytic entropy value and gradients") {
    Rng rng(103);
    GaussianHead h = random_head(rng, 2);
    const EntropyResult e = entropy(h);
    double expect = 0.0;
    for (double s : h.sigma) expect += 0.5 * std::log(2.0 * M_PI * std::exp(1.0) * s * s);
    CHECK(e.value == doctest::Approx(expect).epsilon(1e-12));
    for (int i = 0; i < 2; ++i) {
        CHECK(e.d_mu[i] == 0.0);
        CHECK(e.d_sigma[i] == doctest::Approx(1.0 / h.sigma[i]).epsilon(1e-12));
    }
}

TEST_CASE("tanh sample entropy equals -log p plus the squash correction") {
    Rng rng(107);
    GaussianHead h = random_head(rng, 2, ActionPost::Tanh);
    const std::vector<double> z = {0.4, -1.1};
    const EntropyResult e = entropy_tanh_sample(h, z);

    std::vector<double> x(2);
    double expect = 0.0;
    for (int i = 0; i < 2; ++i) x[i] = h.mu[i] + h.sigma[i] * z[i];
    expect = -gauss_log_density(h, x);
    for (int i = 0; i < 2; ++i) expect += log_tanh_deriv(x[i]);
    CHECK(e.value == doctest::Approx(expect).epsilon(1e-10));

    // reparameterized gradients: x moves with mu and sigma
    auto value_at = [&](const GaussianHead& hh) {
        double v = 0.0;
        std::vector<double> xx(2);
        for (int i = 0; i < 2; ++i) xx[i] = hh.mu[i] + hh.sigma[i] * z[i];
        v = -gauss_log_density(hh, xx);
        for (int i = 0; i < 2; ++i) v += log_tanh_deriv(xx[i]);
        return v;
    };
    const double eps = 1e-6;
    for (int i = 0; i < 2; ++i) {
        GaussianHead hp = h, hm = h;
        hp.mu[i] += eps;
        hm.mu[i] -= eps;
        CHECK(e.d_mu[i] == doctest::Approx((value_at(hp) - value_at(hm)) / (2 * eps)).epsilon(1e-5));
        hp = h;
        hm = h;
        hp.sigma[i] += eps;
        hm.sigma[i] -= eps;
        CHECK(e.d_sigma[i] == doctest::Approx((value_at(hp) - value_at(hm)) / (2 * eps)).epsilon(1e-5));
    }
}

TEST_CASE("log_tanh_deriv is stable for large arguments") {
    CHECK(log_tanh_deriv(0.0) == doctest::Approx(0.0));
    CHECK(log_tanh_deriv(1.0) == doctest::Approx(std::log(1.0 - std::tanh(1.0) * std::tanh(1.0))).epsilon(1e-10));
    CHECK(std::isfinite(log_tanh_deriv(50.0)));
    CHECK(log_tanh_deriv(50.0) < -90.0);  // ~ -2x + log 4
    CHECK(log_tanh_deriv(50.0) == doctest::Approx(-2.0 * 50.0 + std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("kl matches the closed form and finite differences") {
    Rng rng(109);
    GaussianHead p = random_head(rng, 2), q = random_head(rng, 2);
    const KlResult r = kl(p, q);
    double expect = 0.0;
    for (int i = 0; i < 2; ++i) {
        const double v = (p.sigma[i] * p.sigma[i] + (p.mu[i] - q.mu[i]) * (p.mu[i] - q.mu[i])) /
                         (2.0 * q.sigma[i] * q.sigma[i]);
        expect += std::log(q.sigma[i] / p.sigma[i]) + v - 0.5;
    }
    CHECK(r.value == doctest::Approx(expect).epsilon(1e-12));

    auto kl_val = [&](const GaussianHead& a, const GaussianHead& b) { return kl(a, b).value; };
    const double eps = 1e-6;
    for (int i = 0; i < 2; ++i) {
        GaussianHead pp = p, pm = p;
        pp.mu[i] += eps;
        pm.mu[i] -= eps;
        CHECK(r.d_mu_p[i] == doctest::Approx((kl_val(pp, q) - kl_val(pm, q)) / (2 * eps)).epsilon(1e-5));
        pp = p;
        pm = p;
        pp.sigma[i] += eps;
        pm.sigma[i] -= eps;
        CHECK(r.d_sigma_p[i] == doctest::Approx((kl_val(pp, q) - kl_val(pm, q)) / (2 * eps)).epsilon(1e-5));
        GaussianHead qp = q, qm = q;
        qp.mu[i] += eps;
        qm.mu[i] -= eps;
        CHECK(r.d_mu_q[i] == doctest::Approx((kl_val(p, qp) - kl_val(p, qm)) / (2 * eps)).epsilon(1e-5));
        qp = q;
        qm = q;
        qp.sigma[i] += eps;
        qm.sigma[i] -= eps;
        CHECK(r.d_sigma_q[i] == doctest::Approx((kl_val(p, qp) - kl_val(p, qm)) / (2 * eps)).epsilon(1e-5));
    }
}

TEST_CASE("decoupled kl terms sum to the full kl") {
    Rng rng(113);
    for (int trial = 0; trial < 20; ++trial) {
        GaussianHead mu = random_head(rng, 3), pi = random_head(rng, 3);
        const DecoupledKlResult d = decoupled_kl(mu, pi);
        const KlResult full = kl(mu, pi);
        CHECK(d.mean_term + d.std_term == doctest::Approx(full.value).epsilon(1e-10));
        CHECK(d.mean_term >= -1e-12);
        CHECK(d.std_term >= -1e-12);
    }
}

TEST_CASE("decoupled kl gradients match finite differences") {
    Rng rng(127);
    GaussianHead mu = random_head(rng, 2), pi = random_head(rng, 2);
    const DecoupledKlResult d = decoupled_kl(mu, pi);
    const double eps = 1e-6;
    for (int i = 0; i < 2; ++i) {
        GaussianHead pp = pi, pm = pi;
        pp.mu[i] += eps;
        pm.mu[i] -= eps;
        const DecoupledKlResult up = decoupled_kl(mu, pp), dn = decoupled_kl(mu, pm);
        CHECK(d.d_mu_pi_mean[i] == doctest::Approx((up.mean_term - dn.mean_term) / (2 * eps)).epsilon(1e-5));
        CHECK(d.d_mu_pi_std[i] ==
              doctest::Approx((up.std_term - dn.std_term) / (2 * eps)).epsilon(1e-5).scale(1.0));
        pp = pi;
        pm = pi;
        pp.sigma[i] += eps;
        pm.sigma[i] -= eps;
        const DecoupledKlResult up2 = decoupled_kl(mu, pp), dn2 = decoupled_kl(mu, pm);
        CHECK(d.d_sigma_pi_mean[i] == doctest::Approx((up2.mean_term - dn2.mean_term) / (2 * eps)).epsilon(1e-5));
        CHECK(d.d_sigma_pi_std[i] == doctest::Approx((up2.std_term - dn2.std_term) / (2 * eps)).epsilon(1e-5));
    }
}

TEST_CASE("sampling: clip clamps, tanh squashes, log prob is the raw density") {
    Rng rng(131);
    GaussianHead clip_head = random_head(rng, 2, ActionPost::Clip);
    clip_head.mu = {5.0, -5.0};  // force clipping
    const ActionSample s1 = sample(clip_head, rng);
    CHECK(s1.env_action[0] == 1.0);
    CHECK(s1.env_action[1] == -1.0);
    CHECK(s1.behavior_log_prob == doctest::Approx(gauss_log_density(clip_head, s1.raw)).epsilon(1e-10));

    GaussianHead tanh_head = random_head(rng, 2, ActionPost::Tanh);
    const ActionSample s2 = sample(tanh_head, rng);
    for (int i = 0; i < 2; ++i) CHECK(s2.env_action[i] == doctest::Approx(std::tanh(s2.raw[i])).epsilon(1e-12));
}

TEST_CASE("sample statistics follow the head parameters") {
    Rng rng(137);
    GaussianHead h;
    h.mu = {0.25};
    h.sigma = {0.5};
    h.dsigma_dxrho = {1.0};
    double sum = 0.0, sum2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const ActionSample s = sample(h, rng);
        sum += s.raw[0];
        sum2 += s.raw[0] * s.raw[0];
    }
    const double mean = sum / n;
    CHECK(std::abs(mean - 0.25) < 0.01);
    CHECK(std::abs(std::sqrt(sum2 / n - mean * mean) - 0.5) < 0.01);
}
