#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "oplab/studio.hpp"

using namespace oplab;

namespace {

ChoiceSpace toy_space() {
    ChoiceSpace space;
    space.top.push_back(ChoiceDef{"policyloss.kind", "", {"pg", "ppo", "awr"}});
    space.top.push_back(ChoiceDef{"optimizer.adamlr", "", {"0.0001", "0.001"}});
    ConditionalBlock ppo_block;
    ppo_block.parent = "policyloss.kind";
    ppo_block.value = "ppo";
    ppo_block.choices.push_back(ChoiceDef{"policyloss.ppoepsilon", "", {"0.1", "0.2", "0.3", "0.5"}});
    space.conditional.push_back(ppo_block);
    space.validate();
    return space;
}

std::vector<StudyRecord> planted_records(int n, int planted_every) {
    // scores uniform-ish; configs whose index is a multiple of planted_every
    // carry value "good" and a +10 bonus
    std::vector<StudyRecord> recs;
    Rng rng(777);
    for (int i = 0; i < n; ++i) {
        StudyRecord r;
        r.config_index = i;
        const bool good = i % planted_every == 0;
        r.assignment["feature"] = good ? "good" : "plain";
        r.median_score = rng.uniform() + (good ? 10.0 : 0.0);
        r.scores = {r.median_score};
        recs.push_back(r);
    }
    return recs;
}

}  // namespace

TEST_CASE("sampling respects conditionality") {
    const ChoiceSpace space = toy_space();
    Rng rng(801);
    int eps_count = 0, ppo_count = 0;
    std::map<std::string, int> loss_counts;
    const int n = 30000;
    for (int i = 0; i < n; ++i) {
        const Assignment a = sample_config(space, rng);
        REQUIRE(a.count("policyloss.kind") == 1);
        REQUIRE(a.count("optimizer.adamlr") == 1);
        ++loss_counts[a.at("policyloss.kind")];
        const bool is_ppo = a.at("policyloss.kind") == "ppo";
        ppo_count += is_ppo;
        if (a.count("policyloss.ppoepsilon")) {
            ++eps_count;
            CHECK(is_ppo);  // the sub-choice only appears under its parent
        } else {
            CHECK_FALSE(is_ppo);
        }
    }
    // uniform over the three losses
    for (const auto& [k, c] : loss_counts) CHECK(std::abs(c / double(n) - 1.0 / 3.0) < 0.02);
    CHECK(eps_count == ppo_count);
}

TEST_CASE("sub-choice values are uniform conditional on the parent") {
    const ChoiceSpace space = toy_space();
    Rng rng(803);
    std::map<std::string, int> eps_counts;
    int ppo_n = 0;
    for (int i = 0; i < 40000; ++i) {
        const Assignment a = sample_config(space, rng);
        if (a.count("policyloss.ppoepsilon")) {
            ++eps_counts[a.at("policyloss.ppoepsilon")];
            ++ppo_n;
        }
    }
    for (const auto& [k, c] : eps_counts) CHECK(std::abs(c / double(ppo_n) - 0.25) < 0.02);
}

TEST_CASE("apply_assignment writes the sampled values onto the base config") {
    const ChoiceSpace space = toy_space();
    ChoiceConfig base;
    Assignment a;
    a["policyloss.kind"] = "ppo";
    a["policyloss.ppoepsilon"] = "0.5";
    a["optimizer.adamlr"] = "0.001";
    const ChoiceConfig cfg = apply_assignment(base, space, a);
    CHECK(cfg.policyloss == PolicyLossKind::Ppo);
    CHECK(cfg.ppoepsilon == 0.5);
    CHECK(cfg.adamlr == 0.001);
    CHECK(cfg.numenvs == base.numenvs);  // untouched
}

TEST_CASE("space json round trip") {
    const ChoiceSpace space = toy_space();
    const ChoiceSpace back = ChoiceSpace::from_json(space.to_json());
    back.validate();
    REQUIRE(back.top.size() == 2);
    CHECK(back.top[0].name == "policyloss.kind");
    CHECK(back.top[0].values == std::vector<std::string>{"pg", "ppo", "awr"});
    REQUIRE(back.conditional.size() == 1);
    CHECK(back.conditional[0].parent == "policyloss.kind");
    CHECK(back.conditional[0].value == "ppo");
    CHECK(back.conditional[0].choices[0].values.size() == 4);
}

TEST_CASE("space validation rejects duplicates and dangling parents") {
    ChoiceSpace dup;
    dup.top.push_back(ChoiceDef{"a", "", {"1"}});
    dup.top.push_back(ChoiceDef{"a", "", {"2"}});
    CHECK_THROWS(dup.validate());

    ChoiceSpace dangling;
    dangling.top.push_back(ChoiceDef{"a", "", {"1"}});
    ConditionalBlock blk;
    blk.parent = "missing";
    blk.value = "1";
    blk.choices.push_back(ChoiceDef{"b", "", {"1"}});
    dangling.conditional.push_back(blk);
    CHECK_THROWS(dangling.validate());
}

TEST_CASE("every preset loads, validates, and names distinct choices") {
    for (const std::string& name : ChoiceSpace::preset_names()) {
        const ChoiceSpace space = ChoiceSpace::preset(name);
        space.validate();
        CHECK_FALSE(space.top.empty());
    }
    CHECK_THROWS(ChoiceSpace::preset("nonexistent"));

    // spot-check the losses design
    const ChoiceSpace losses = ChoiceSpace::preset("losses");
    REQUIRE(losses.find("policyloss.kind") != nullptr);
    CHECK(losses.find("policyloss.kind")->values.size() == 6);
    const auto parent = losses.parent_of("policyloss.ppoepsilon");
    REQUIRE(parent.has_value());
    CHECK(parent->first == "policyloss.kind");
    CHECK(parent->second == "ppo");

    // the regularizers design maps two analysis names onto one config key
    const ChoiceSpace regs = ChoiceSpace::preset("regularizers");
    const ChoiceDef* c1 = regs.find("regularizerconstraint");
    const ChoiceDef* c2 = regs.find("regularizerpenalty");
    REQUIRE(c1 != nullptr);
    REQUIRE(c2 != nullptr);
    CHECK(c1->config_key() == "regularization.kind");
    CHECK(c2->config_key() == "regularization.kind");
}

TEST_CASE("binomial cdf matches direct summation") {
    // n = 10, p = 0.4: CDF(4) via direct binomial sum
    double direct = 0.0;
    for (int k = 0; k <= 4; ++k) {
        double comb = 1.0;
        for (int j = 0; j < k; ++j) comb = comb * (10 - j) / (j + 1);
        direct += comb * std::pow(0.4, k) * std::pow(0.6, 10 - k);
    }
    CHECK(binomial_cdf(10, 0.4, 4) == doctest::Approx(direct).epsilon(1e-12));
    CHECK(binomial_cdf(10, 0.4, 10) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(binomial_cdf(10, 0.4, 0) == doctest::Approx(std::pow(0.6, 10)).epsilon(1e-12));
}

TEST_CASE("binomial ci indices are ordered, in range, and widen with alpha") {
    for (int n : {1, 2, 5, 20, 100, 1000, 10000}) {
        const auto [lo, hi] = binomial_ci_indices(n, 0.95, 0.05);
        CHECK(lo >= 1);
        CHECK(hi <= n);
        CHECK(lo <= hi);
    }
    const auto [l1, h1] = binomial_ci_indices(100, 0.95, 0.05);
    const auto [l2, h2] = binomial_ci_indices(100, 0.95, 0.5);
    CHECK(l2 >= l1);
    CHECK(h2 <= h1);
    // degenerate single sample
    const auto [l0, h0] = binomial_ci_indices(1, 0.95, 0.05);
    CHECK(l0 == 1);
    CHECK(h0 == 1);
}

TEST_CASE("nearest rank percentile follows the ceil convention") {
    std::vector<double> xs;
    for (int i = 1; i <= 100; ++i) xs.push_back(static_cast<double>(i));
    CHECK(nearest_rank_percentile(xs, 0.95) == doctest::Approx(95.0));
    CHECK(nearest_rank_percentile(xs, 0.50) == doctest::Approx(50.0));
    CHECK(nearest_rank_percentile(xs, 1.0) == doctest::Approx(100.0));
    CHECK(nearest_rank_percentile({7.0}, 0.95) == doctest::Approx(7.0));
    // ceil(0.95 * 3) = 3rd of {1,2,3}
    CHECK(nearest_rank_percentile({3.0, 1.0, 2.0}, 0.95) == doctest::Approx(3.0));
}

TEST_CASE("conditional percentile point sits inside its confidence interval") {
    const auto recs = planted_records(400, 4);
    const auto good = conditional_percentile(recs, "feature", "good", 0.95);
    const auto plain = conditional_percentile(recs, "feature", "plain", 0.95);
    REQUIRE(good.has_value());
    REQUIRE(plain.has_value());
    CHECK(good->n == 100);
    CHECK(plain->n == 300);
    CHECK(good->low <= good->point);
    CHECK(good->point <= good->high);
    CHECK(good->point > plain->point + 5.0);  // the planted effect dominates
    CHECK_FALSE(conditional_percentile(recs, "feature", "unseen", 0.95).has_value());
}

TEST_CASE("top fraction distribution concentrates on the planted value") {
    const auto recs = planted_records(400, 4);
    const auto dist = top_fraction_distribution(recs, "feature", 0.05);
    // top 5% of 400 = 20 configs, all of them planted "good"
    CHECK(dist.at("good") == doctest::Approx(1.0));
    if (dist.count("plain")) CHECK(dist.at("plain") == doctest::Approx(0.0));
    double total = 0.0;
    for (const auto& [k, v] : dist) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rescaled ecdf spans 0..1 in cumulative fraction") {
    const auto recs = planted_records(50, 5);
    const auto curve = ecdf_rescaled(recs, -1.0, 11.0);
    REQUIRE(curve.size() == 50);
    CHECK(curve.front().second == doctest::Approx(1.0 / 50.0));
    CHECK(curve.back().second == doctest::Approx(1.0));
    for (size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].first >= curve[i - 1].first);
    // rescaling maps the baseline to 0 and the best score to 1
    CHECK(curve.back().first <= 1.0 + 1e-9);
}

TEST_CASE("quantile table reports increasing quantiles up to the max") {
    const auto recs = planted_records(200, 4);
    const QuantileTable t = quantile_table(recs);
    CHECK(t.q90 <= t.q95);
    CHECK(t.q95 <= t.q99);
    CHECK(t.q99 <= t.max);
    double best = -1e300;
    for (const auto& r : recs) best = std::max(best, r.median_score);
    CHECK(t.max == doctest::Approx(best));
}

TEST_CASE("a tiny study runs, resumes idempotently, and groups records") {
    ChoiceSpace space;
    space.top.push_back(ChoiceDef{"optimizer.adamlr", "", {"0.0003", "0.001"}});

    StudyOptions opts;
    opts.n_configs = 2;
    opts.seeds = 2;
    opts.workers = 1;
    opts.study_seed = 5;
    opts.base.set("collect.numenvs", "2");
    opts.base.set("collect.stepsize", "32");
    opts.base.set("collect.batchsize", "16");
    opts.base.set("collect.numepochsperstep", "1");
    opts.base.set("network.sharedwidth", "8");
    opts.base.set("network.shareddepth", "1");
    opts.base.set("run.totalsteps", "64");
    opts.base.set("run.evalinterval", "32");
    opts.base.set("run.evalepisodes", "1");

    const std::filesystem::path path = std::filesystem::temp_directory_path() / "oplab_study_test.jsonl";
    std::filesystem::remove(path);
    const auto recs = run_study(space, opts, path.string());
    REQUIRE(recs.size() == 2);
    for (const auto& r : recs) {
        CHECK(r.scores.size() == 2);
        CHECK(std::isfinite(r.median_score));
        CHECK(r.assignment.count("optimizer.adamlr") == 1);
    }

    // resuming must not retrain: file content stays identical
    std::ifstream in1(path);
    const std::string before((std::istreambuf_iterator<char>(in1)), std::istreambuf_iterator<char>());
    const auto recs2 = run_study(space, opts, path.string());
    std::ifstream in2(path);
    const std::string after((std::istreambuf_iterator<char>(in2)), std::istreambuf_iterator<char>());
    CHECK(before == after);
    REQUIRE(recs2.size() == 2);
    for (size_t i = 0; i < recs.size(); ++i) CHECK(recs2[i].median_score == recs[i].median_score);

    const auto loaded = load_records(path.string());
    REQUIRE(loaded.size() == 2);
    for (size_t i = 0; i < recs.size(); ++i) CHECK(loaded[i].median_score == recs[i].median_score);
    std::filesystem::remove(path);
}

TEST_CASE("svg writers emit well-formed files") {
    const std::filesystem::path bar = std::filesystem::temp_directory_path() / "oplab_bar_test.svg";
    const std::filesystem::path ecdf = std::filesystem::temp_directory_path() / "oplab_ecdf_test.svg";
    write_bar_chart_svg(bar.string(), "demo", {{"a", 1.0, 0.5, 1.5}, {"b", 2.0, 1.5, 2.5}}, true);
    write_ecdf_svg(ecdf.string(), "demo", {{0.0, 0.25}, {0.5, 0.5}, {1.0, 1.0}});
    for (const auto& p : {bar, ecdf}) {
        std::ifstream in(p);
        const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        CHECK(text.find("<svg") != std::string::npos);
        CHECK(text.find("</svg>") != std::string::npos);
        std::filesystem::remove(p);
    }
}
