#include <doctest.h>

#include <cmath>

#include "oplab/dataflow.hpp"
#include "oplab/math.hpp"

using namespace oplab;

TEST_CASE("running moments match a two-pass computation") {
    Rng rng(401);
    RunningMoments m(3);
    std::vector<std::vector<double>> data;
    for (int i = 0; i < 500; ++i) {
        std::vector<double> x = {rng.normal() * 2.0 + 1.0, rng.uniform(), rng.normal() - 3.0};
        m.update(x);
        data.push_back(x);
    }
    for (int d = 0; d < 3; ++d) {
        double mean = 0.0;
        for (const auto& x : data) mean += x[d];
        mean /= data.size();
        double var = 0.0;
        for (const auto& x : data) var += (x[d] - mean) * (x[d] - mean);
        var /= data.size();  // population variance
        CHECK(m.safe_mean(d) == doctest::Approx(mean).epsilon(1e-10));
        CHECK(m.std_dev(d) == doctest::Approx(std::sqrt(var)).epsilon(1e-10));
    }
}

TEST_CASE("moments with no data normalize as the identity") {
    RunningMoments m(2);
    CHECK(m.safe_mean(0) == 0.0);
    CHECK(m.safe_std(0) == 1.0);
    std::vector<double> out(2);
    normalize_obs(m, std::vector<double>{1.5, -2.5}, out, false, 10.0);
    CHECK(out[0] == 1.5);
    CHECK(out[1] == -2.5);
}

TEST_CASE("single sample: std is zero but safe_std is floored") {
    RunningMoments m(1);
    m.update(std::vector<double>{4.0});
    CHECK(m.std_dev(0) == 0.0);
    CHECK(m.safe_std(0) == doctest::Approx(1e-6));
    CHECK(m.safe_mean(0) == doctest::Approx(4.0));
}

TEST_CASE("observation normalization standardizes and optionally clips") {
    RunningMoments m(1);
    for (double v : {0.0, 2.0, 4.0}) m.update(std::vector<double>{v});
    // mean 2, population std sqrt(8/3)
    const double sd = std::sqrt(8.0 / 3.0);
    std::vector<double> out(1);
    normalize_obs(m, std::vector<double>{5.0}, out, false, 10.0);
    CHECK(out[0] == doctest::Approx((5.0 - 2.0) / sd).epsilon(1e-12));

    normalize_obs(m, std::vector<double>{100.0}, out, true, 1.5);
    CHECK(out[0] == doctest::Approx(1.5));
    normalize_obs(m, std::vector<double>{-100.0}, out, true, 1.5);
    CHECK(out[0] == doctest::Approx(-1.5));
}

TEST_CASE("value target normalization round trips") {
    RunningMoments m(1);
    Rng rng(409);
    for (int i = 0; i < 200; ++i) m.update(std::vector<double>{rng.normal() * 5.0 + 20.0});
    for (int i = 0; i < 50; ++i) {
        const double v = rng.normal() * 7.0;
        const double n = normalize_value_target(m, v);
        CHECK(denormalize_value(m, n) == doctest::Approx(v).epsilon(1e-12));
    }
    // the normalized quantity is (v - mean) / std
    const double v = 31.0;
    CHECK(normalize_value_target(m, v) ==
          doctest::Approx((v - m.safe_mean(0)) / m.safe_std(0)).epsilon(1e-12));
}

TEST_CASE("advantage normalization yields zero mean and unit std") {
    Rng rng(419);
    std::vector<double> adv(64);
    for (double& a : adv) a = rng.normal() * 3.0 + 2.0;
    const std::vector<double> n = normalize_advantages(adv);
    double mean = 0.0;
    for (double a : n) mean += a;
    mean /= n.size();
    double var = 0.0;
    for (double a : n) var += (a - mean) * (a - mean);
    var /= n.size();
    CHECK(std::abs(mean) < 1e-10);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-10));

    // degenerate cases: single element and constant batch come back as zeros
    CHECK(normalize_advantages(std::vector<double>{7.0})[0] == 0.0);
    const std::vector<double> c = normalize_advantages(std::vector<double>{3.0, 3.0, 3.0});
    for (double a : c) CHECK(std::abs(a) < 1e-6);
}

TEST_CASE("gradient clipping rescales only above the threshold") {
    std::vector<double> g = {3.0, 4.0};  // norm 5
    clip_gradient(g, 10.0);
    CHECK(g[0] == 3.0);
    CHECK(g[1] == 4.0);
    clip_gradient(g, 2.5);
    CHECK(l2_norm(g) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(g[0] / g[1] == doctest::Approx(0.75).epsilon(1e-12));  // direction preserved
}
