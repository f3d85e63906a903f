#include "oplab/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace oplab {

BatchHandling batch_handling_from_string(const std::string& s) {
    if (s == "fixed_trajectories") return BatchHandling::FixedTrajectories;
    if (s == "shuffle_trajectories") return BatchHandling::ShuffleTrajectories;
    if (s == "shuffle_transitions") return BatchHandling::ShuffleTransitions;
    if (s == "shuffle_transitions_recompute") return BatchHandling::ShuffleTransitionsRecompute;
    throw std::invalid_argument("unknown batch handling: " + s);
}

std::string to_string(BatchHandling b) {
    switch (b) {
        case BatchHandling::FixedTrajectories: return "fixed_trajectories";
        case BatchHandling::ShuffleTrajectories: return "shuffle_trajectories";
        case BatchHandling::ShuffleTransitions: return "shuffle_transitions";
        case BatchHandling::ShuffleTransitionsRecompute: return "shuffle_transitions_recompute";
    }
    return "?";
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

double parse_double(const std::string& s) {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("bad number: " + s);
    return v;
}

long parse_long(const std::string& s) {
    size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("bad integer: " + s);
    return v;
}

bool parse_bool(const std::string& s) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw std::invalid_argument("bad boolean: " + s);
}

std::string avg_string(bool enabled) { return enabled ? "average" : "none"; }
bool parse_avg(const std::string& s) {
    if (s == "average") return true;
    if (s == "none") return false;
    throw std::invalid_argument("expected 'average' or 'none', got: " + s);
}

OptionalClip parse_clip(const std::string& s) {
    if (s == "none") return {false, 0.0};
    return {true, parse_double(s)};
}

std::string clip_string(const OptionalClip& c) { return c.enabled ? format_double(c.value) : "none"; }

struct Field {
    std::string name;
    std::function<std::string(const ChoiceConfig&)> get;
    std::function<void(ChoiceConfig&, const std::string&)> set;
};

const std::vector<Field>& fields() {
    static const std::vector<Field> kFields = [] {
        std::vector<Field> f;
        auto add = [&f](std::string name, auto getter, auto setter) {
            f.push_back({std::move(name), getter, setter});
        };
        auto add_int = [&](std::string name, int ChoiceConfig::* m) {
            add(std::move(name), [m](const ChoiceConfig& c) { return std::to_string(c.*m); },
                [m](ChoiceConfig& c, const std::string& v) { c.*m = static_cast<int>(parse_long(v)); });
        };
        auto add_long = [&](std::string name, long ChoiceConfig::* m) {
            add(std::move(name), [m](const ChoiceConfig& c) { return std::to_string(c.*m); },
                [m](ChoiceConfig& c, const std::string& v) { c.*m = parse_long(v); });
        };
        auto add_double = [&](std::string name, double ChoiceConfig::* m) {
            add(std::move(name), [m](const ChoiceConfig& c) { return format_double(c.*m); },
                [m](ChoiceConfig& c, const std::string& v) { c.*m = parse_double(v); });
        };
        auto add_bool = [&](std::string name, bool ChoiceConfig::* m) {
            add(std::move(name), [m](const ChoiceConfig& c) { return c.*m ? "true" : "false"; },
                [m](ChoiceConfig& c, const std::string& v) { c.*m = parse_bool(v); });
        };
        auto add_clip = [&](std::string name, OptionalClip ChoiceConfig::* m) {
            add(std::move(name), [m](const ChoiceConfig& c) { return clip_string(c.*m); },
                [m](ChoiceConfig& c, const std::string& v) { c.*m = parse_clip(v); });
        };

        add_int("collect.numenvs", &ChoiceConfig::numenvs);
        add_int("collect.stepsize", &ChoiceConfig::stepsize);
        add_int("collect.numepochsperstep", &ChoiceConfig::numepochsperstep);
        add_int("collect.batchsize", &ChoiceConfig::batchsize);
        add("collect.batchhandling", [](const ChoiceConfig& c) { return to_string(c.batchhandling); },
            [](ChoiceConfig& c, const std::string& v) { c.batchhandling = batch_handling_from_string(v); });

        add("advantageestimator.kind", [](const ChoiceConfig& c) { return to_string(c.advantageestimator); },
            [](ChoiceConfig& c, const std::string& v) { c.advantageestimator = advantage_estimator_from_string(v); });
        add_int("advantageestimator.nstep", &ChoiceConfig::nstep);
        add_double("advantageestimator.gaelambda", &ChoiceConfig::gaelambda);
        add_double("advantageestimator.vtraceaelambda", &ChoiceConfig::vtraceaelambda);
        add_double("advantageestimator.vtraceaecrho", &ChoiceConfig::vtraceaecrho);

        add("valueloss.kind",
            [](const ChoiceConfig& c) { return std::string(c.valueloss == ValueLossKind::Mse ? "mse" : "huber"); },
            [](ChoiceConfig& c, const std::string& v) {
                if (v == "mse") c.valueloss = ValueLossKind::Mse;
                else if (v == "huber") c.valueloss = ValueLossKind::Huber;
                else throw std::invalid_argument("unknown value loss: " + v);
            });
        add_double("valueloss.huberdelta", &ChoiceConfig::huberdelta);
        add_clip("valueloss.ppovalueclip", &ChoiceConfig::ppovalueclip);

        add("policyloss.kind", [](const ChoiceConfig& c) { return to_string(c.policyloss); },
            [](ChoiceConfig& c, const std::string& v) { c.policyloss = policy_loss_from_string(v); });
        add_double("policyloss.ppoepsilon", &ChoiceConfig::ppoepsilon);
        add_double("policyloss.vtracelossrho", &ChoiceConfig::vtracelossrho);
        add_double("policyloss.awrbeta", &ChoiceConfig::awrbeta);
        add_double("policyloss.awrw", &ChoiceConfig::awrw);
        add_double("policyloss.vmpoeps", &ChoiceConfig::vmpoeps);

        add_double("time.discount", &ChoiceConfig::discount);
        add_int("time.frameskip", &ChoiceConfig::frameskip);
        add_bool("time.handleabandon", &ChoiceConfig::handleabandon);

        add("optimizer.kind", [](const ChoiceConfig& c) { return to_string(c.optimizer); },
            [](ChoiceConfig& c, const std::string& v) { c.optimizer = optimizer_from_string(v); });
        add_double("optimizer.adamlr", &ChoiceConfig::adamlr);
        add_double("optimizer.adammom", &ChoiceConfig::adammom);
        add_double("optimizer.adameps", &ChoiceConfig::adameps);
        add_double("optimizer.rmslr", &ChoiceConfig::rmslr);
        add_double("optimizer.rmsmom", &ChoiceConfig::rmsmom);
        add_double("optimizer.rmseps", &ChoiceConfig::rmseps);
        add_bool("optimizer.rmscent", &ChoiceConfig::rmscent);
        add_double("optimizer.rmsdecay", &ChoiceConfig::rmsdecay);
        add_double("optimizer.lrdecay", &ChoiceConfig::lrdecay);

        add("regularization.type", [](const ChoiceConfig& c) { return to_string(c.regularizationtype); },
            [](ChoiceConfig& c, const std::string& v) { c.regularizationtype = reg_mode_from_string(v); });
        add("regularization.kind", [](const ChoiceConfig& c) { return to_string(c.regularizer); },
            [](ChoiceConfig& c, const std::string& v) { c.regularizer = reg_kind_from_string(v); });
        add_double("regularization.penalty", &ChoiceConfig::regpenalty);
        add_double("regularization.threshold", &ChoiceConfig::regthreshold);
        add_double("regularization.penaltymean", &ChoiceConfig::regpenaltymean);
        add_double("regularization.penaltystd", &ChoiceConfig::regpenaltystd);
        add_double("regularization.thresholdmean", &ChoiceConfig::regthresholdmean);
        add_double("regularization.thresholdstd", &ChoiceConfig::regthresholdstd);

        add("network.mlpshared",
            [](const ChoiceConfig& c) { return std::string(c.mlpshared ? "shared" : "separate"); },
            [](ChoiceConfig& c, const std::string& v) {
                if (v == "shared") c.mlpshared = true;
                else if (v == "separate") c.mlpshared = false;
                else throw std::invalid_argument("network.mlpshared must be 'shared' or 'separate'");
            });
        add_int("network.sharedwidth", &ChoiceConfig::sharedwidth);
        add_int("network.shareddepth", &ChoiceConfig::shareddepth);
        add_int("network.policywidth", &ChoiceConfig::policywidth);
        add_int("network.policydepth", &ChoiceConfig::policydepth);
        add_int("network.valuewidth", &ChoiceConfig::valuewidth);
        add_int("network.valuedepth", &ChoiceConfig::valuedepth);
        add_double("network.baselinecost", &ChoiceConfig::baselinecost);
        add("network.activation", [](const ChoiceConfig& c) { return to_string(c.activation); },
            [](ChoiceConfig& c, const std::string& v) { c.activation = activation_from_string(v); });
        add("network.init", [](const ChoiceConfig& c) { return to_string(c.init); },
            [](ChoiceConfig& c, const std::string& v) { c.init = init_from_string(v); });
        add_double("network.policyinit", &ChoiceConfig::policyinit);
        add_double("network.valueinit", &ChoiceConfig::valueinit);

        add_bool("actiondist.stdind", &ChoiceConfig::stdind);
        add("actiondist.stdtransform", [](const ChoiceConfig& c) { return to_string(c.stdtransform); },
            [](ChoiceConfig& c, const std::string& v) { c.stdtransform = std_transform_from_string(v); });
        add_double("actiondist.initialstd", &ChoiceConfig::initialstd);
        add_double("actiondist.minstd", &ChoiceConfig::minstd);
        add("actiondist.actionpost", [](const ChoiceConfig& c) { return to_string(c.actionpost); },
            [](ChoiceConfig& c, const std::string& v) { c.actionpost = action_post_from_string(v); });

        add("normalization.norminput", [](const ChoiceConfig& c) { return avg_string(c.norminput); },
            [](ChoiceConfig& c, const std::string& v) { c.norminput = parse_avg(v); });
        add_clip("normalization.clipinput", &ChoiceConfig::clipinput);
        add("normalization.normreward", [](const ChoiceConfig& c) { return avg_string(c.normreward); },
            [](ChoiceConfig& c, const std::string& v) { c.normreward = parse_avg(v); });
        add_bool("normalization.normadv", &ChoiceConfig::normadv);
        add_clip("normalization.clipgrad", &ChoiceConfig::clipgrad);

        add("run.env", [](const ChoiceConfig& c) { return to_string(c.env); },
            [](ChoiceConfig& c, const std::string& v) { c.env = env_id_from_string(v); });
        add_long("run.totalsteps", &ChoiceConfig::totalsteps);
        add_long("run.evalinterval", &ChoiceConfig::evalinterval);
        add_int("run.evalepisodes", &ChoiceConfig::evalepisodes);
        return f;
    }();
    return kFields;
}

const Field* find_field(const std::string& key) {
    for (const Field& f : fields())
        if (f.name == key) return &f;
    return nullptr;
}

}  // namespace

void ChoiceConfig::set(const std::string& key, const std::string& value) {
    const Field* f = find_field(key);
    if (!f) throw std::invalid_argument("unknown configuration key: " + key);
    try {
        f->set(*this, value);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("key '" + key + "': " + e.what());
    } catch (const std::exception& e) {
        throw std::invalid_argument("key '" + key + "': bad value '" + value + "'");
    }
}

std::string ChoiceConfig::get(const std::string& key) const {
    const Field* f = find_field(key);
    if (!f) throw std::invalid_argument("unknown configuration key: " + key);
    return f->get(*this);
}

const std::vector<std::string>& ChoiceConfig::keys() {
    static const std::vector<std::string> kKeys = [] {
        std::vector<std::string> k;
        for (const Field& f : fields()) k.push_back(f.name);
        return k;
    }();
    return kKeys;
}

void ChoiceConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw std::invalid_argument("invalid configuration: " + msg);
    };
    require(numenvs >= 1, "collect.numenvs must be >= 1");
    require(stepsize >= 1, "collect.stepsize must be >= 1");
    require(stepsize % numenvs == 0, "collect.stepsize must be divisible by collect.numenvs");
    require(batchsize >= 1 && stepsize % batchsize == 0, "collect.batchsize must divide collect.stepsize");
    require(numepochsperstep >= 1, "collect.numepochsperstep must be >= 1");
    require(nstep >= 1, "advantageestimator.nstep must be >= 1");
    require(gaelambda >= 0.0 && gaelambda <= 1.0, "advantageestimator.gaelambda must be in [0, 1]");
    require(vtraceaelambda >= 0.0 && vtraceaelambda <= 1.0, "advantageestimator.vtraceaelambda must be in [0, 1]");
    require(vtraceaecrho >= 1.0, "advantageestimator.vtraceaecrho must be >= 1");
    require(huberdelta > 0.0, "valueloss.huberdelta must be > 0");
    require(!ppovalueclip.enabled || ppovalueclip.value > 0.0, "valueloss.ppovalueclip must be > 0 or none");
    require(ppoepsilon > 0.0, "policyloss.ppoepsilon must be > 0");
    require(vtracelossrho >= 1.0, "policyloss.vtracelossrho must be >= 1");
    require(awrbeta > 0.0, "policyloss.awrbeta must be > 0");
    require(awrw > 1.0, "policyloss.awrw must be > 1");
    require(vmpoeps > 0.0, "policyloss.vmpoeps must be > 0");
    require(discount > 0.0 && discount <= 1.0, "time.discount must be in (0, 1]");
    require(frameskip >= 1, "time.frameskip must be >= 1");
    require(lrdecay >= 0.0 && lrdecay <= 1.0, "optimizer.lrdecay must be in [0, 1]");
    require(sharedwidth >= 1 && policywidth >= 1 && valuewidth >= 1, "network widths must be >= 1");
    require(shareddepth >= 1 && policydepth >= 1 && valuedepth >= 1, "network depths must be >= 1");
    require(baselinecost > 0.0, "network.baselinecost must be > 0");
    require(policyinit > 0.0 && valueinit > 0.0, "last-layer init scales must be > 0");
    require(minstd >= 0.0, "actiondist.minstd must be >= 0");
    require(initialstd > minstd, "actiondist.initialstd must exceed actiondist.minstd");
    require(!clipinput.enabled || clipinput.value > 0.0, "normalization.clipinput must be > 0 or none");
    require(!clipgrad.enabled || clipgrad.value > 0.0, "normalization.clipgrad must be > 0 or none");
    require(totalsteps >= 1, "run.totalsteps must be >= 1");
    require(evalinterval >= 1, "run.evalinterval must be >= 1");
    require(evalepisodes >= 1, "run.evalepisodes must be >= 1");
}

double ChoiceConfig::effective_discount() const { return std::pow(discount, frameskip); }

EstimatorCfg ChoiceConfig::estimator_cfg() const {
    EstimatorCfg e;
    e.kind = advantageestimator;
    e.gamma = effective_discount();
    e.nstep = nstep;
    e.lambda = advantageestimator == AdvantageEstimator::VTrace ? vtraceaelambda : gaelambda;
    e.vtrace_c_rho = vtraceaecrho;
    e.handle_abandoned = handleabandon;
    return e;
}

ValueLossCfg ChoiceConfig::value_loss_cfg() const {
    return {valueloss, huberdelta, ppovalueclip.enabled, ppovalueclip.value};
}

PolicyLossCfg ChoiceConfig::policy_loss_cfg() const {
    return {policyloss, ppoepsilon, vtracelossrho, awrbeta, awrw, vmpoeps};
}

OptimCfg ChoiceConfig::optim_cfg() const {
    OptimCfg o;
    o.kind = optimizer;
    if (optimizer == OptimizerKind::Adam) {
        o.lr = adamlr;
        o.momentum = adammom;
        o.eps = adameps;
    } else {
        o.lr = rmslr;
        o.momentum = rmsmom;
        o.eps = rmseps;
    }
    o.rms_centered = rmscent;
    o.rms_decay = rmsdecay;
    o.lr_decay_fraction = lrdecay;
    return o;
}

DistConfig ChoiceConfig::dist_cfg() const {
    return {stdtransform, actionpost, initialstd, minstd, stdind};
}

RegularizerCfg ChoiceConfig::regularizer_cfg() const {
    RegularizerCfg r;
    r.mode = regularizationtype;
    r.kind = regularizer;
    r.penalty = regpenalty;
    r.threshold = regthreshold;
    r.penalty_mean = regpenaltymean;
    r.penalty_std = regpenaltystd;
    r.threshold_mean = regthresholdmean;
    r.threshold_std = regthresholdstd;
    return r;
}

ChoiceConfig parse_config(const std::string& text) {
    ChoiceConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        // trim
        const size_t b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const size_t e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("line " + std::to_string(lineno) + ": expected 'key = value'");
        auto trim = [](std::string s) {
            const size_t b2 = s.find_first_not_of(" \t");
            if (b2 == std::string::npos) return std::string();
            const size_t e2 = s.find_last_not_of(" \t");
            return s.substr(b2, e2 - b2 + 1);
        };
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

ChoiceConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ChoiceConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) {
        out += f.name;
        out += " = ";
        out += f.get(cfg);
        out += "\n";
    }
    return out;
}

uint64_t config_hash(const ChoiceConfig& cfg) {
    const std::string s = serialize_config(cfg);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace oplab
