#include "oplab/studio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "oplab/trainer.hpp"

namespace oplab {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// ChoiceSpace

void ChoiceSpace::validate() const {
    std::set<std::string> names;
    auto check_list = [&names](const std::vector<ChoiceDef>& defs) {
        for (const ChoiceDef& d : defs) {
            if (d.name.empty()) throw std::invalid_argument("choice with empty name");
            if (d.values.empty()) throw std::invalid_argument("choice " + d.name + " has an empty value list");
            if (!names.insert(d.name).second) throw std::invalid_argument("duplicate choice name: " + d.name);
        }
    };
    check_list(top);
    for (const ConditionalBlock& b : conditional) check_list(b.choices);
    for (const ConditionalBlock& b : conditional) {
        const ChoiceDef* parent = find(b.parent);
        if (parent == nullptr) throw std::invalid_argument("conditional block references unknown parent: " + b.parent);
        if (std::find(parent->values.begin(), parent->values.end(), b.value) == parent->values.end())
            throw std::invalid_argument("conditional value " + b.value + " is not a value of " + b.parent);
    }
    // every sub-choice reachable under exactly one parent value
    std::set<std::string> sub_names;
    for (const ConditionalBlock& b : conditional)
        for (const ChoiceDef& d : b.choices)
            if (!sub_names.insert(d.name).second)
                throw std::invalid_argument("sub-choice appears under more than one parent value: " + d.name);
}

const ChoiceDef* ChoiceSpace::find(const std::string& name) const {
    for (const ChoiceDef& d : top)
        if (d.name == name) return &d;
    for (const ConditionalBlock& b : conditional)
        for (const ChoiceDef& d : b.choices)
            if (d.name == name) return &d;
    return nullptr;
}

std::optional<std::pair<std::string, std::string>> ChoiceSpace::parent_of(const std::string& name) const {
    for (const ConditionalBlock& b : conditional)
        for (const ChoiceDef& d : b.choices)
            if (d.name == name) return std::make_pair(b.parent, b.value);
    return std::nullopt;
}

namespace {

json choice_to_json(const ChoiceDef& d) {
    json j;
    j["name"] = d.name;
    if (!d.key.empty() && d.key != d.name) j["key"] = d.key;
    j["values"] = d.values;
    return j;
}

ChoiceDef choice_from_json(const json& j) {
    ChoiceDef d;
    d.name = j.at("name").get<std::string>();
    if (j.contains("key")) d.key = j.at("key").get<std::string>();
    d.values = j.at("values").get<std::vector<std::string>>();
    return d;
}

}  // namespace

std::string ChoiceSpace::to_json() const {
    json j;
    j["choices"] = json::array();
    for (const ChoiceDef& d : top) j["choices"].push_back(choice_to_json(d));
    j["conditional"] = json::array();
    for (const ConditionalBlock& b : conditional) {
        json jb;
        jb["parent"] = b.parent;
        jb["value"] = b.value;
        jb["choices"] = json::array();
        for (const ChoiceDef& d : b.choices) jb["choices"].push_back(choice_to_json(d));
        j["conditional"].push_back(jb);
    }
    return j.dump(2);
}

ChoiceSpace ChoiceSpace::from_json(const std::string& text) {
    ChoiceSpace space;
    json j = json::parse(text);
    for (const json& jc : j.at("choices")) space.top.push_back(choice_from_json(jc));
    if (j.contains("conditional")) {
        for (const json& jb : j.at("conditional")) {
            ConditionalBlock b;
            b.parent = jb.at("parent").get<std::string>();
            b.value = jb.at("value").get<std::string>();
            for (const json& jc : jb.at("choices")) b.choices.push_back(choice_from_json(jc));
            space.conditional.push_back(std::move(b));
        }
    }
    space.validate();
    return space;
}

ChoiceSpace ChoiceSpace::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open space file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

// ---------------------------------------------------------------------------
// Presets

namespace {

ChoiceDef def(std::string name, std::vector<std::string> values) { return {std::move(name), "", std::move(values)}; }
ChoiceDef def_key(std::string name, std::string key, std::vector<std::string> values) {
    return {std::move(name), std::move(key), std::move(values)};
}

const std::vector<std::string> kLr4 = {"3e-05", "0.0001", "0.0003", "0.001"};
const std::vector<std::string> kLr5 = {"3e-05", "0.0001", "0.0003", "0.001", "0.003"};
const std::vector<std::string> kEps6 = {"1e-09", "1e-08", "1e-07", "1e-06", "1e-05", "0.0001"};
const std::vector<std::string> kWidths = {"16", "32", "64", "128", "256", "512"};
const std::vector<std::string> kDepths = {"1", "2", "4", "8"};

ChoiceSpace preset_losses() {
    ChoiceSpace s;
    s.top = {def("collect.numepochsperstep", {"1", "3", "10"}),
             def("policyloss.kind", {"awr", "pg", "ppo", "rpa", "vmpo", "vtrace"}),
             def("optimizer.adamlr", kLr5)};
    s.conditional = {
        {"policyloss.kind", "awr",
         {def("policyloss.awrbeta", {"0.0001", "0.0003", "0.001", "0.003", "0.01", "0.03", "0.1", "0.3"}),
          def("policyloss.awrw", {"1.1", "1.2", "1.3", "1.5"})}},
        {"policyloss.kind", "ppo", {def("policyloss.ppoepsilon", {"0.1", "0.2", "0.3", "0.5"})}},
        {"policyloss.kind", "vmpo",
         {def("policyloss.vmpoeps", {"0.0001", "0.0003", "0.001", "0.003", "0.01", "0.03", "0.1", "0.3", "1.0"})}},
        {"policyloss.kind", "vtrace", {def("policyloss.vtracelossrho", {"1.0", "1.2", "1.5", "2.0"})}},
    };
    return s;
}

ChoiceSpace preset_arch() {
    ChoiceSpace s;
    s.top = {def("actiondist.actionpost", {"clip", "tanh"}),
             def("network.valueinit", {"0.001", "0.01", "0.1", "1.0"}),
             def("actiondist.stdind", {"false", "true"}),
             def("network.policyinit", {"0.001", "0.01", "0.1", "1.0"}),
             def("actiondist.stdtransform", {"safe_exp", "softplus"}),
             def("actiondist.initialstd", {"0.1", "0.5", "1.0", "2.0"}),
             def("network.init", {"glorot_normal", "glorot_uniform", "he_normal", "he_uniform", "lecun_normal",
                                  "lecun_uniform", "orthogonal", "orthogonal_gain_1.41"}),
             def("network.mlpshared", {"separate", "shared"}),
             def("actiondist.minstd", {"0.0", "0.01", "0.1"}),
             def("optimizer.adamlr", kLr4),
             def("network.activation", {"elu", "leaky_relu", "relu", "sigmoid", "swish", "tanh"})};
    s.conditional = {
        {"network.mlpshared", "separate",
         {def("network.policywidth", kWidths), def("network.policydepth", kDepths),
          def("network.valuewidth", kWidths), def("network.valuedepth", kDepths)}},
        {"network.mlpshared", "shared",
         {def("network.sharedwidth", kWidths), def("network.shareddepth", kDepths),
          def("network.baselinecost", {"0.001", "0.1", "1.0", "10.0", "100.0"})}},
    };
    return s;
}

ChoiceSpace preset_norm() {
    ChoiceSpace s;
    s.top = {def("policyloss.ppoepsilon", {"0.1", "0.2", "0.3", "0.5"}),
             def("normalization.norminput", {"average", "none"}),
             def("normalization.clipgrad", {"0.5", "1.0", "2.0", "5.0", "none"}),
             def("normalization.normadv", {"false", "true"}),
             def("optimizer.adamlr", kLr4),
             def("normalization.normreward", {"average", "none"})};
    s.conditional = {
        {"normalization.norminput", "average",
         {def("normalization.clipinput", {"1.0", "2.0", "5.0", "10.0", "none"})}},
    };
    return s;
}

ChoiceSpace preset_advantage() {
    ChoiceSpace s;
    s.top = {def("collect.numenvs", {"64", "128", "256"}),
             def("valueloss.kind", {"huber", "mse"}),
             def("valueloss.ppovalueclip", {"0.001", "0.01", "0.1", "1.0", "none"}),
             def("advantageestimator.kind", {"gae", "nstep", "vtrace"}),
             def("optimizer.adamlr", kLr5)};
    s.conditional = {
        {"valueloss.kind", "huber", {def("valueloss.huberdelta", {"0.001", "0.01", "0.1", "1.0"})}},
        {"advantageestimator.kind", "gae", {def("advantageestimator.gaelambda", {"0.8", "0.9", "0.95", "0.99"})}},
        {"advantageestimator.kind", "nstep", {def("advantageestimator.nstep", {"1", "3", "10", "1000000"})}},
        {"advantageestimator.kind", "vtrace",
         {def("advantageestimator.vtraceaelambda", {"0.8", "0.9", "0.95", "0.99", "1.0"}),
          def("advantageestimator.vtraceaecrho", {"1.0", "1.2", "1.5", "2.0"})}},
    };
    return s;
}

ChoiceSpace preset_setup() {
    ChoiceSpace s;
    s.top = {def("collect.stepsize", {"512", "1024", "2048", "4096"}),
             def("collect.batchhandling",
                 {"fixed_trajectories", "shuffle_trajectories", "shuffle_transitions",
                  "shuffle_transitions_recompute"}),
             def("collect.numepochsperstep", {"1", "3", "10"}),
             def("collect.numenvs", {"64", "128", "256"}),
             def("optimizer.adamlr", kLr5),
             def("collect.batchsize", {"64", "128", "256"})};
    return s;
}

ChoiceSpace preset_time() {
    ChoiceSpace s;
    s.top = {def("time.discount", {"0.95", "0.97", "0.99", "0.999"}), def("time.frameskip", {"1", "2", "5"}),
             def("time.handleabandon", {"false", "true"}), def("optimizer.adamlr", kLr4)};
    return s;
}

ChoiceSpace preset_optimizers() {
    ChoiceSpace s;
    s.top = {def("optimizer.lrdecay", {"0.0", "1.0"}), def("optimizer.kind", {"adam", "rmsprop"})};
    s.conditional = {
        {"optimizer.kind", "adam",
         {def("optimizer.adammom", {"0.0", "0.9"}), def("optimizer.adameps", kEps6),
          def("optimizer.adamlr", kLr4)}},
        {"optimizer.kind", "rmsprop",
         {def("optimizer.rmscent", {"false", "true"}), def("optimizer.rmsmom", {"0.0", "0.9"}),
          def("optimizer.rmseps", kEps6), def("optimizer.rmslr", kLr4)}},
    };
    return s;
}

ChoiceSpace preset_regularizers() {
    const std::vector<std::string> kinds = {"kl_mu_pi", "kl_pi_mu", "kl_ref_pi", "decoupled_kl_mu_pi", "entropy"};
    ChoiceSpace s;
    s.top = {def("regularization.type", {"constraint", "none", "penalty"}), def("optimizer.adamlr", kLr5)};
    s.conditional = {
        {"regularization.type", "constraint", {def_key("regularizerconstraint", "regularization.kind", kinds)}},
        {"regularizerconstraint", "kl_mu_pi",
         {def_key("regularizerconstraintklmupi", "regularization.threshold",
                  {"0.005", "0.01", "0.02", "0.04", "0.08"})}},
        {"regularizerconstraint", "kl_pi_mu",
         {def_key("regularizerconstraintklpimu", "regularization.threshold",
                  {"0.005", "0.01", "0.02", "0.04", "0.08"})}},
        {"regularizerconstraint", "kl_ref_pi",
         {def_key("regularizerconstraintklrefpi", "regularization.threshold",
                  {"10.0", "20.0", "40.0", "80.0", "160.0"})}},
        {"regularizerconstraint", "decoupled_kl_mu_pi",
         {def_key("regularizerconstraintklmupimean", "regularization.thresholdmean",
                  {"0.005", "0.01", "0.02", "0.04", "0.08"}),
          def_key("regularizerconstraintklmupistd", "regularization.thresholdstd",
                  {"5e-05", "0.000125", "0.00025", "0.0005", "0.001", "0.002", "0.004"})}},
        {"regularizerconstraint", "entropy",
         {def_key("regularizerconstraintentropy", "regularization.threshold", {"0.0", "-5.0", "-10.0", "-15.0"})}},
        {"regularization.type", "penalty", {def_key("regularizerpenalty", "regularization.kind", kinds)}},
        {"regularizerpenalty", "kl_mu_pi",
         {def_key("regularizerpenaltyklmupi", "regularization.penalty",
                  {"0.003", "0.01", "0.03", "0.1", "0.3", "1.0"})}},
        {"regularizerpenalty", "kl_pi_mu",
         {def_key("regularizerpenaltyklpimu", "regularization.penalty",
                  {"0.003", "0.01", "0.03", "0.1", "0.3", "1.0"})}},
        {"regularizerpenalty", "kl_ref_pi",
         {def_key("regularizerpenaltyklrefpi", "regularization.penalty",
                  {"3e-06", "1e-05", "3e-05", "0.0001", "0.0003", "0.001"})}},
        {"regularizerpenalty", "decoupled_kl_mu_pi",
         {def_key("regularizerpenaltyklmupimean", "regularization.penaltymean",
                  {"0.003", "0.01", "0.03", "0.1", "0.3", "1.0"}),
          def_key("regularizerpenaltyklmupistd", "regularization.penaltystd",
                  {"0.1", "0.3", "1.0", "3.0", "10.0", "30.0", "100.0", "300.0"})}},
        {"regularizerpenalty", "entropy",
         {def_key("regularizerpenaltyentropy", "regularization.penalty",
                  {"1e-05", "3e-05", "0.0001", "0.0003", "0.001", "0.003"})}},
    };
    return s;
}

}  // namespace

ChoiceSpace ChoiceSpace::preset(const std::string& name) {
    ChoiceSpace s;
    if (name == "losses") s = preset_losses();
    else if (name == "arch") s = preset_arch();
    else if (name == "norm") s = preset_norm();
    else if (name == "advantage") s = preset_advantage();
    else if (name == "setup") s = preset_setup();
    else if (name == "time") s = preset_time();
    else if (name == "optimizers") s = preset_optimizers();
    else if (name == "regularizers") s = preset_regularizers();
    else throw std::invalid_argument("unknown study preset: " + name);
    s.validate();
    return s;
}

std::vector<std::string> ChoiceSpace::preset_names() {
    return {"losses", "arch", "norm", "advantage", "setup", "time", "optimizers", "regularizers"};
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

int uniform_index(size_t n, Rng& rng) {
    const int i = static_cast<int>(rng.uniform() * static_cast<double>(n));
    return std::min(i, static_cast<int>(n) - 1);
}

}  // namespace

Assignment sample_config(const ChoiceSpace& space, Rng& rng) {
    Assignment a;
    for (const ChoiceDef& d : space.top) a[d.name] = d.values[uniform_index(d.values.size(), rng)];
    for (const ConditionalBlock& b : space.conditional) {
        auto it = a.find(b.parent);
        if (it == a.end() || it->second != b.value) continue;
        for (const ChoiceDef& d : b.choices) a[d.name] = d.values[uniform_index(d.values.size(), rng)];
    }
    return a;
}

ChoiceConfig apply_assignment(const ChoiceConfig& base, const ChoiceSpace& space, const Assignment& a) {
    ChoiceConfig cfg = base;
    auto apply = [&cfg, &a](const ChoiceDef& d) {
        auto it = a.find(d.name);
        if (it != a.end()) cfg.set(d.config_key(), it->second);
    };
    for (const ChoiceDef& d : space.top) apply(d);
    for (const ConditionalBlock& b : space.conditional)
        for (const ChoiceDef& d : b.choices) apply(d);
    return cfg;
}

// ---------------------------------------------------------------------------
// Study runner

namespace {

struct SeedResult {
    int config_index = 0;
    int seed_index = 0;
    bool has_score = false;
    double score = 0.0;
    Assignment assignment;
};

uint64_t run_seed_for(uint64_t study_seed, int config_index, int seed_index) {
    const uint64_t tag = (static_cast<uint64_t>(config_index) << 20) | static_cast<uint64_t>(seed_index);
    return Rng(study_seed).fork(tag).next_u64();
}

std::vector<SeedResult> load_seed_results(const std::string& path) {
    std::vector<SeedResult> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        SeedResult r;
        r.config_index = j.at("config_index").get<int>();
        r.seed_index = j.at("seed_index").get<int>();
        if (j.contains("score") && !j.at("score").is_null()) {
            r.has_score = true;
            r.score = j.at("score").get<double>();
        }
        for (auto it = j.at("assignment").begin(); it != j.at("assignment").end(); ++it)
            r.assignment[it.key()] = it.value().get<std::string>();
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<StudyRecord> group_records(const std::vector<SeedResult>& results) {
    std::map<int, StudyRecord> by_config;
    for (const SeedResult& r : results) {
        StudyRecord& rec = by_config[r.config_index];
        rec.config_index = r.config_index;
        rec.assignment = r.assignment;
        if (r.has_score) rec.scores.push_back(r.score);
    }
    std::vector<StudyRecord> out;
    for (auto& [idx, rec] : by_config) {
        if (rec.scores.empty()) continue;  // every seed of this config failed outright
        rec.median_score = aggregate_seeds(rec.scores);
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace

std::vector<StudyRecord> load_records(const std::string& records_path) {
    return group_records(load_seed_results(records_path));
}

std::vector<StudyRecord> run_study(const ChoiceSpace& space, const StudyOptions& opts,
                                   const std::string& records_path) {
    space.validate();
    if (opts.n_configs < 1 || opts.seeds < 1 || opts.workers < 1)
        throw std::invalid_argument("run_study: n_configs, seeds, and workers must be >= 1");

    // the sampled designs are a pure function of the study seed
    Rng sample_rng = Rng(opts.study_seed).fork(7);
    std::vector<Assignment> assignments(opts.n_configs);
    for (int i = 0; i < opts.n_configs; ++i) assignments[i] = sample_config(space, sample_rng);

    std::set<std::pair<int, int>> done;
    for (const SeedResult& r : load_seed_results(records_path)) done.insert({r.config_index, r.seed_index});

    std::vector<std::pair<int, int>> jobs;
    for (int c = 0; c < opts.n_configs; ++c)
        for (int s = 0; s < opts.seeds; ++s)
            if (!done.count({c, s})) jobs.emplace_back(c, s);

    std::mutex queue_mutex;
    std::mutex file_mutex;
    size_t next_job = 0;
    std::ofstream out(records_path, std::ios::app);
    if (!out) throw std::runtime_error("cannot open records file: " + records_path);

    auto worker = [&]() {
        for (;;) {
            std::pair<int, int> job;
            {
                std::lock_guard<std::mutex> lock(queue_mutex);
                if (next_job >= jobs.size()) return;
                job = jobs[next_job++];
            }
            const auto& [c, s] = job;
            json j;
            j["config_index"] = c;
            j["seed_index"] = s;
            j["assignment"] = json::object();
            for (const auto& [k, v] : assignments[c]) j["assignment"][k] = v;
            try {
                const ChoiceConfig cfg = apply_assignment(opts.base, space, assignments[c]);
                cfg.validate();
                Trainer trainer(cfg, run_seed_for(opts.study_seed, c, s));
                const RunResult result = trainer.run();
                j["score"] = result.score;
                j["failed"] = result.failed;
                j["config_hash"] = config_hash(cfg);
            } catch (const std::exception& e) {
                j["score"] = nullptr;
                j["failed"] = true;
                j["error"] = e.what();
            }
            {
                std::lock_guard<std::mutex> lock(file_mutex);
                out << j.dump() << '\n';
                out.flush();
            }
        }
    };

    std::vector<std::thread> pool;
    const int nw = std::min<int>(opts.workers, std::max<size_t>(jobs.size(), 1));
    for (int i = 0; i < nw; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    out.close();

    return load_records(records_path);
}

// ---------------------------------------------------------------------------
// Statistics

double binomial_cdf(int n, double p, int k) {
    if (k < 0) return 0.0;
    if (k >= n) return 1.0;
    // sum of exp(log pmf) keeps tiny tail terms from underflowing a naive
    // multiplicative recurrence
    double cdf = 0.0;
    const double lp = std::log(p);
    const double lq = std::log1p(-p);
    for (int j = 0; j <= k; ++j) {
        const double log_pmf =
            std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) + j * lp + (n - j) * lq;
        cdf += std::exp(log_pmf);
    }
    return std::min(cdf, 1.0);
}

std::pair<int, int> binomial_ci_indices(int n, double p, double alpha) {
    if (n < 1) throw std::invalid_argument("binomial_ci_indices: n must be >= 1");
    auto icdf = [n, p](double q) {
        for (int k = 0; k <= n; ++k)
            if (binomial_cdf(n, p, k) >= q) return k;
        return n;
    };
    int i_l = icdf(alpha / 2.0);
    int i_h = icdf(1.0 - alpha / 2.0);
    i_l = std::clamp(i_l, 1, n);
    i_h = std::clamp(i_h, 1, n);
    if (i_l > i_h) std::swap(i_l, i_h);
    return {i_l, i_h};
}

double nearest_rank_percentile(std::vector<double> xs, double q) {
    if (xs.empty()) throw std::invalid_argument("nearest_rank_percentile: empty sample");
    if (q < 0.0 || q > 1.0) throw std::invalid_argument("nearest_rank_percentile: q outside [0, 1]");
    std::sort(xs.begin(), xs.end());
    const int n = static_cast<int>(xs.size());
    const int rank = std::clamp(static_cast<int>(std::ceil(q * n)), 1, n);
    return xs[rank - 1];
}

std::optional<CiEstimate> conditional_percentile(const std::vector<StudyRecord>& records, const std::string& name,
                                                 const std::string& value, double q) {
    std::vector<double> scores;
    for (const StudyRecord& r : records) {
        auto it = r.assignment.find(name);
        if (it != r.assignment.end() && it->second == value) scores.push_back(r.median_score);
    }
    if (scores.empty()) return std::nullopt;
    std::sort(scores.begin(), scores.end());
    const int n = static_cast<int>(scores.size());
    const int rank = std::clamp(static_cast<int>(std::ceil(q * n)), 1, n);
    auto [i_l, i_h] = binomial_ci_indices(n, q);
    // the point estimate stays inside its own confidence bracket
    i_l = std::min(i_l, rank);
    i_h = std::max(i_h, rank);
    return CiEstimate{scores[rank - 1], scores[i_l - 1], scores[i_h - 1], n};
}

std::map<std::string, double> top_fraction_distribution(const std::vector<StudyRecord>& records,
                                                        const std::string& name, double frac) {
    std::map<std::string, double> hist;
    std::vector<const StudyRecord*> matching;
    for (const StudyRecord& r : records)
        if (r.assignment.count(name)) matching.push_back(&r);
    if (matching.empty()) return hist;
    const int k = std::max<int>(1, static_cast<int>(std::ceil(frac * matching.size())));
    std::stable_sort(matching.begin(), matching.end(),
                     [](const StudyRecord* a, const StudyRecord* b) { return a->median_score > b->median_score; });
    for (int i = 0; i < k; ++i) hist[matching[i]->assignment.at(name)] += 1.0;
    for (auto& [value, count] : hist) count /= k;
    return hist;
}

std::vector<std::pair<double, double>> ecdf_rescaled(const std::vector<StudyRecord>& records, double random_baseline,
                                                     double best_score) {
    if (!(best_score > random_baseline))
        throw std::invalid_argument("ecdf_rescaled: best score must exceed the random baseline");
    std::vector<double> scores;
    for (const StudyRecord& r : records)
        scores.push_back((r.median_score - random_baseline) / (best_score - random_baseline));
    std::sort(scores.begin(), scores.end());
    std::vector<std::pair<double, double>> curve;
    const int n = static_cast<int>(scores.size());
    for (int i = 0; i < n; ++i) curve.emplace_back(scores[i], static_cast<double>(i + 1) / n);
    return curve;
}

QuantileTable quantile_table(const std::vector<StudyRecord>& records) {
    if (records.empty()) throw std::invalid_argument("quantile_table: no records");
    std::vector<double> scores;
    for (const StudyRecord& r : records) scores.push_back(r.median_score);
    QuantileTable t;
    t.q90 = nearest_rank_percentile(scores, 0.90);
    t.q95 = nearest_rank_percentile(scores, 0.95);
    t.q99 = nearest_rank_percentile(scores, 0.99);
    t.max = *std::max_element(scores.begin(), scores.end());
    return t;
}

// ---------------------------------------------------------------------------
// SVG plots

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

void write_bar_chart_svg(const std::string& path, const std::string& title, const std::vector<BarItem>& items,
                         bool with_ci) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    const int width = 640, height = 400;
    const int ml = 70, mr = 20, mt = 40, mb = 90;
    const double plot_w = width - ml - mr, plot_h = height - mt - mb;

    double lo = 0.0, hi = 1.0;
    if (!items.empty()) {
        lo = items[0].low;
        hi = items[0].high;
        for (const BarItem& it : items) {
            lo = std::min({lo, it.point, it.low});
            hi = std::max({hi, it.point, it.high});
        }
        if (hi <= lo) hi = lo + 1.0;
        const double pad = 0.08 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
    auto y_of = [&](double v) { return mt + plot_h * (1.0 - (v - lo) / (hi - lo)); };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
        << "</text>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + plot_h
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt + plot_h << "\" x2=\"" << ml + plot_w << "\" y2=\"" << mt + plot_h
        << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double v = lo + (hi - lo) * k / 4.0;
        out << "<text x=\"" << ml - 6 << "\" y=\"" << y_of(v) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << v
            << "</text>\n";
    }
    const int n = static_cast<int>(items.size());
    for (int i = 0; i < n; ++i) {
        const double slot = plot_w / std::max(n, 1);
        const double x = ml + slot * i + slot * 0.15;
        const double bw = slot * 0.7;
        const double y0 = y_of(std::max(items[i].point, lo));
        out << "<rect x=\"" << x << "\" y=\"" << std::min(y0, mt + plot_h) << "\" width=\"" << bw << "\" height=\""
            << std::max(0.0, mt + plot_h - y0) << "\" fill=\"#4878cf\"/>\n";
        if (with_ci) {
            const double cx = x + bw / 2;
            out << "<line x1=\"" << cx << "\" y1=\"" << y_of(items[i].low) << "\" x2=\"" << cx << "\" y2=\""
                << y_of(items[i].high) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
        }
        out << "<text x=\"" << x + bw / 2 << "\" y=\"" << mt + plot_h + 16
            << "\" text-anchor=\"end\" font-size=\"11\" transform=\"rotate(-35 " << x + bw / 2 << " "
            << mt + plot_h + 16 << ")\">" << xml_escape(items[i].label) << "</text>\n";
    }
    out << "</svg>\n";
}

void write_ecdf_svg(const std::string& path, const std::string& title,
                    const std::vector<std::pair<double, double>>& curve) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    const int width = 640, height = 400;
    const int ml = 60, mr = 20, mt = 40, mb = 50;
    const double plot_w = width - ml - mr, plot_h = height - mt - mb;
    double lo = 0.0, hi = 1.0;
    for (const auto& [x, y] : curve) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (hi <= lo) hi = lo + 1.0;
    auto px = [&](double x) { return ml + plot_w * (x - lo) / (hi - lo); };
    auto py = [&](double y) { return mt + plot_h * (1.0 - y); };
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
        << "</text>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + plot_h
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt + plot_h << "\" x2=\"" << ml + plot_w << "\" y2=\"" << mt + plot_h
        << "\" stroke=\"black\"/>\n";
    if (!curve.empty()) {
        out << "<polyline fill=\"none\" stroke=\"#4878cf\" stroke-width=\"2\" points=\"";
        double prev_y = 0.0;
        for (const auto& [x, y] : curve) {
            out << px(x) << ',' << py(prev_y) << ' ' << px(x) << ',' << py(y) << ' ';
            prev_y = y;
        }
        out << "\"/>\n";
    }
    for (int k = 0; k <= 4; ++k) {
        const double v = lo + (hi - lo) * k / 4.0;
        out << "<text x=\"" << px(v) << "\" y=\"" << mt + plot_h + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
            << v << "</text>\n";
        const double f = k / 4.0;
        out << "<text x=\"" << ml - 6 << "\" y=\"" << py(f) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << f
            << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace oplab
