#include "oplab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace oplab {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

std::vector<int> permutation(int n, Rng& rng) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.next_u64() % static_cast<uint64_t>(i + 1));
        std::swap(idx[i], idx[j]);
    }
    return idx;
}

}  // namespace

// ---------------------------------------------------------------------------
// PolicyValueNet

PolicyValueNet::PolicyValueNet(const ChoiceConfig& cfg, int obs_dim, int act_dim, Rng& rng)
    : obs_dim_(obs_dim), act_dim_(act_dim), shared_(cfg.mlpshared), dist_(cfg.dist_cfg()) {
    const int pol_out = policy_out_dim();
    if (shared_) {
        MlpSpec spec;
        spec.in_dim = obs_dim;
        spec.widths.assign(cfg.shareddepth, cfg.sharedwidth);
        spec.activation = cfg.activation;
        spec.init = cfg.init;
        spec.heads = {HeadSpec{pol_out, cfg.policyinit}, HeadSpec{1, cfg.valueinit}};
        net_a_ = Mlp(spec, rng);
    } else {
        MlpSpec pspec;
        pspec.in_dim = obs_dim;
        pspec.widths.assign(cfg.policydepth, cfg.policywidth);
        pspec.activation = cfg.activation;
        pspec.init = cfg.init;
        pspec.heads = {HeadSpec{pol_out, cfg.policyinit}};
        net_a_ = Mlp(pspec, rng);
        MlpSpec vspec;
        vspec.in_dim = obs_dim;
        vspec.widths.assign(cfg.valuedepth, cfg.valuewidth);
        vspec.activation = cfg.activation;
        vspec.init = cfg.init;
        vspec.heads = {HeadSpec{1, cfg.valueinit}};
        net_b_ = Mlp(vspec, rng);
    }
    if (dist_.std_independent) {
        x_rho_.assign(act_dim, 0.0);
        d_x_rho_.assign(act_dim, 0.0);
    }
}

int PolicyValueNet::policy_out_dim() const { return dist_.std_independent ? act_dim_ : 2 * act_dim_; }

std::vector<const Mlp*> PolicyValueNet::nets() const {
    if (shared_) return {&net_a_};
    return {&net_a_, &net_b_};
}

std::vector<Mlp*> PolicyValueNet::nets() {
    if (shared_) return {&net_a_};
    return {&net_a_, &net_b_};
}

PolicyValueNet::Eval PolicyValueNet::forward(const Matrix& norm_obs) const {
    Eval ev;
    const int batch = norm_obs.rows;
    ev.values.resize(batch);
    if (shared_) {
        std::vector<Matrix> outs = net_a_.forward(norm_obs, ev.cache_a);
        ev.policy_out = std::move(outs[0]);
        for (int r = 0; r < batch; ++r) ev.values[r] = outs[1](r, 0);
    } else {
        std::vector<Matrix> pouts = net_a_.forward(norm_obs, ev.cache_a);
        ev.policy_out = std::move(pouts[0]);
        std::vector<Matrix> vouts = net_b_.forward(norm_obs, ev.cache_b);
        for (int r = 0; r < batch; ++r) ev.values[r] = vouts[0](r, 0);
    }
    return ev;
}

GaussianHead PolicyValueNet::head(const Eval& ev, int row) const {
    std::span<const double> out = ev.policy_out.row(row);
    std::span<const double> x_mu = out.subspan(0, act_dim_);
    std::span<const double> x_rho =
        dist_.std_independent ? std::span<const double>(x_rho_) : out.subspan(act_dim_, act_dim_);
    return build_head(x_mu, x_rho, dist_);
}

void PolicyValueNet::accumulate_dist_grad(const GaussianHead& h, int row, std::span<const double> d_mu,
                                          std::span<const double> d_sigma, Matrix& d_policy_out) {
    for (int i = 0; i < act_dim_; ++i) {
        d_policy_out(row, i) += d_mu[i];
        const double d_xrho = d_sigma[i] * h.dsigma_dxrho[i];
        if (dist_.std_independent) {
            d_x_rho_[i] += d_xrho;
        } else {
            d_policy_out(row, act_dim_ + i) += d_xrho;
        }
    }
}

void PolicyValueNet::backward(const Eval& ev, const Matrix& d_policy_out, std::span<const double> d_values) {
    const int batch = d_policy_out.rows;
    Matrix dv(batch, 1);
    for (int r = 0; r < batch; ++r) dv(r, 0) = d_values[r];
    if (shared_) {
        net_a_.backward(ev.cache_a, {d_policy_out, dv});
    } else {
        net_a_.backward(ev.cache_a, {d_policy_out});
        net_b_.backward(ev.cache_b, {dv});
    }
}

void PolicyValueNet::zero_grad() {
    for (Mlp* n : nets()) n->zero_grad();
    std::fill(d_x_rho_.begin(), d_x_rho_.end(), 0.0);
}

void PolicyValueNet::mark_params_changed() {
    for (Mlp* n : nets()) n->mark_params_changed();
}

size_t PolicyValueNet::num_params() const {
    size_t n = x_rho_.size();
    for (const Mlp* net : nets()) {
        for (const Matrix& w : net->weights()) n += w.size();
        for (const auto& b : net->biases()) n += b.size();
    }
    return n;
}

void PolicyValueNet::gather_params(std::span<double> out) const {
    size_t pos = 0;
    for (const Mlp* net : nets()) {
        for (size_t l = 0; l < net->weights().size(); ++l) {
            for (double v : net->weights()[l].data) out[pos++] = v;
            for (double v : net->biases()[l]) out[pos++] = v;
        }
    }
    for (double v : x_rho_) out[pos++] = v;
    if (pos != out.size()) throw std::logic_error("gather_params: size mismatch");
}

void PolicyValueNet::scatter_params(std::span<const double> in) {
    size_t pos = 0;
    for (Mlp* net : nets()) {
        for (size_t l = 0; l < net->weights().size(); ++l) {
            for (double& v : net->weights()[l].data) v = in[pos++];
            for (double& v : net->biases()[l]) v = in[pos++];
        }
    }
    for (double& v : x_rho_) v = in[pos++];
    if (pos != in.size()) throw std::logic_error("scatter_params: size mismatch");
    mark_params_changed();
}

void PolicyValueNet::gather_grads(std::span<double> out) const {
    size_t pos = 0;
    for (const Mlp* net : nets()) {
        for (size_t l = 0; l < net->weight_grads().size(); ++l) {
            for (double v : net->weight_grads()[l].data) out[pos++] = v;
            for (double v : net->bias_grads()[l]) out[pos++] = v;
        }
    }
    for (double v : d_x_rho_) out[pos++] = v;
    if (pos != out.size()) throw std::logic_error("gather_grads: size mismatch");
}

void PolicyValueNet::save_to(TensorStore& store, const std::string& prefix) const {
    const auto ns = nets();
    for (size_t k = 0; k < ns.size(); ++k) {
        const std::string net_prefix = prefix + (shared_ ? ".net" : (k == 0 ? ".policy" : ".value"));
        for (size_t l = 0; l < ns[k]->weights().size(); ++l) {
            const Matrix& w = ns[k]->weights()[l];
            store.put(net_prefix + ".w" + std::to_string(l), {w.rows, w.cols}, w.data);
            store.put_vector(net_prefix + ".b" + std::to_string(l), ns[k]->biases()[l]);
        }
    }
    if (!x_rho_.empty()) store.put_vector(prefix + ".x_rho", x_rho_);
}

void PolicyValueNet::load_from(const TensorStore& store, const std::string& prefix) {
    const auto ns = nets();
    for (size_t k = 0; k < ns.size(); ++k) {
        const std::string net_prefix = prefix + (shared_ ? ".net" : (k == 0 ? ".policy" : ".value"));
        for (size_t l = 0; l < ns[k]->weights().size(); ++l) {
            ns[k]->weights()[l].data = store.get(net_prefix + ".w" + std::to_string(l)).data;
            ns[k]->biases()[l] = store.get_vector(net_prefix + ".b" + std::to_string(l));
        }
    }
    if (!x_rho_.empty()) x_rho_ = store.get_vector(prefix + ".x_rho");
    mark_params_changed();
}

// ---------------------------------------------------------------------------
// Minibatching

std::vector<std::vector<int>> make_minibatches(int num_envs, int frag_len, BatchHandling mode, int batchsize,
                                               Rng& rng) {
    const int n = num_envs * frag_len;
    if (batchsize <= 0 || n % batchsize != 0)
        throw std::invalid_argument("batchsize must divide the number of collected transitions");
    std::vector<int> order;
    order.reserve(n);
    if (mode == BatchHandling::FixedTrajectories || mode == BatchHandling::ShuffleTrajectories) {
        if (batchsize % frag_len != 0)
            throw std::invalid_argument("trajectory batch modes need batchsize to be a multiple of the fragment length");
        std::vector<int> envs(num_envs);
        std::iota(envs.begin(), envs.end(), 0);
        if (mode == BatchHandling::ShuffleTrajectories) {
            const std::vector<int> perm = permutation(num_envs, rng);
            for (int i = 0; i < num_envs; ++i) envs[i] = perm[i];
        }
        for (int e : envs)
            for (int t = 0; t < frag_len; ++t) order.push_back(e * frag_len + t);
    } else {
        order = permutation(n, rng);
    }
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < n; start += batchsize)
        batches.emplace_back(order.begin() + start, order.begin() + start + batchsize);
    return batches;
}

// ---------------------------------------------------------------------------
// Scoring

double performance_score(const std::vector<EvalPoint>& curve) {
    if (curve.empty()) throw std::invalid_argument("performance_score: empty evaluation curve");
    double sum = 0.0;
    for (const EvalPoint& p : curve) sum += p.mean_return;
    return sum / static_cast<double>(curve.size());
}

double aggregate_seeds(std::vector<double> scores) {
    if (scores.empty()) throw std::invalid_argument("aggregate_seeds: no scores");
    std::sort(scores.begin(), scores.end());
    const size_t n = scores.size();
    return n % 2 == 1 ? scores[n / 2] : 0.5 * (scores[n / 2 - 1] + scores[n / 2]);
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const ChoiceConfig& cfg, uint64_t seed)
    : cfg_(cfg),
      seed_(seed),
      env_spec_(make_env(cfg.env)->spec()),
      vec_env_(cfg.env, cfg.numenvs, cfg.frameskip, Rng(seed).fork(1)),
      obs_stats_(make_env(cfg.env)->spec().obs_dim),
      value_stats_(1),
      action_rng_(Rng(seed).fork(2)),
      shuffle_rng_(Rng(seed).fork(3)),
      misc_rng_(Rng(seed).fork(4)) {
    cfg_.validate();
    Rng init_rng = Rng(seed).fork(0);
    net_ = PolicyValueNet(cfg_, env_spec_.obs_dim, env_spec_.act_dim, init_rng);
    optimizer_ = Optimizer(cfg_.optim_cfg(), num_params());
    current_obs_ = vec_env_.reset_all();
    episode_return_acc_.assign(cfg_.numenvs, 0.0);
    initial_params_ = get_params();
}

int Trainer::num_extra_params() const {
    int n = 0;
    if (cfg_.regularizationtype == RegMode::Constraint) {
        n += 1;
        if (cfg_.regularizer == RegKind::DecoupledKlMuPi) n += 1;
    }
    if (cfg_.policyloss == PolicyLossKind::Vmpo) n += 1;
    return n;
}

size_t Trainer::num_params() const { return net_.num_params() + static_cast<size_t>(num_extra_params()); }

std::vector<double> Trainer::get_params() const {
    std::vector<double> p(num_params());
    net_.gather_params(std::span<double>(p).first(net_.num_params()));
    size_t pos = net_.num_params();
    if (cfg_.regularizationtype == RegMode::Constraint) {
        p[pos++] = lagrange_.p;
        if (cfg_.regularizer == RegKind::DecoupledKlMuPi) p[pos++] = lagrange_std_.p;
    }
    if (cfg_.policyloss == PolicyLossKind::Vmpo) p[pos++] = vmpo_temp_.p;
    return p;
}

void Trainer::set_params(std::span<const double> p) {
    if (p.size() != num_params()) throw std::invalid_argument("set_params: size mismatch");
    net_.scatter_params(p.first(net_.num_params()));
    size_t pos = net_.num_params();
    if (cfg_.regularizationtype == RegMode::Constraint) {
        lagrange_.p = p[pos++];
        if (cfg_.regularizer == RegKind::DecoupledKlMuPi) lagrange_std_.p = p[pos++];
    }
    if (cfg_.policyloss == PolicyLossKind::Vmpo) vmpo_temp_.p = p[pos++];
}

void Trainer::collect_iteration() {
    const int T = cfg_.fragment_length();
    const int E = cfg_.numenvs;
    const int N = E * T;
    const int od = env_spec_.obs_dim;
    const int ad = env_spec_.act_dim;

    buffer_ = ExperienceBuffer{};
    buffer_.num_envs = E;
    buffer_.frag_len = T;
    buffer_.fragments.assign(E, Fragment{});
    for (Fragment& f : buffer_.fragments) {
        f.rewards.assign(T, 0.0);
        f.values.assign(T, 0.0);
        f.terminated.assign(T, 0);
        f.abandoned.assign(T, 0);
        f.behavior_log_probs.assign(T, 0.0);
        f.target_log_probs.assign(T, 0.0);
    }
    buffer_.raw_obs = Matrix(N, od);
    buffer_.raw_final_obs = Matrix(E, od);
    buffer_.norm_obs = Matrix(N, od);
    buffer_.raw_actions = Matrix(N, ad);
    buffer_.tanh_noise = Matrix(N, ad);
    buffer_.behavior.resize(N);
    buffer_.advantages.assign(N, 0.0);
    buffer_.norm_targets.assign(N, 0.0);
    buffer_.old_value_pred.assign(N, 0.0);
    completed_returns_.clear();

    for (int t = 0; t < T; ++t) {
        Matrix nobs(E, od);
        for (int e = 0; e < E; ++e) {
            const int i = buffer_.index(e, t);
            std::copy(current_obs_[e].begin(), current_obs_[e].end(), buffer_.raw_obs.row(i).begin());
            normalize_obs(obs_stats_, current_obs_[e], nobs.row(e), cfg_.clipinput.enabled, cfg_.clipinput.value);
        }
        PolicyValueNet::Eval ev = net_.forward(nobs);
        Matrix env_actions(E, ad);
        for (int e = 0; e < E; ++e) {
            const int i = buffer_.index(e, t);
            GaussianHead h = net_.head(ev, e);
            ActionSample s = sample(h, action_rng_);
            for (int k = 0; k < ad; ++k) {
                buffer_.raw_actions(i, k) = s.raw[k];
                buffer_.tanh_noise(i, k) = (s.raw[k] - h.mu[k]) / h.sigma[k];
                env_actions(e, k) = s.env_action[k];
            }
            buffer_.fragments[e].values[t] = denormalize_value(value_stats_, ev.values[e]);
            buffer_.fragments[e].behavior_log_probs[t] = s.behavior_log_prob;
            buffer_.behavior[i] = std::move(h);
        }
        std::vector<StepResult> results = vec_env_.step(env_actions);
        for (int e = 0; e < E; ++e) {
            const StepResult& r = results[e];
            buffer_.fragments[e].rewards[t] = r.reward;
            buffer_.fragments[e].terminated[t] = r.terminated ? 1 : 0;
            buffer_.fragments[e].abandoned[t] = r.abandoned ? 1 : 0;
            episode_return_acc_[e] += r.reward;
            if (r.terminated || r.abandoned) {
                completed_returns_.push_back(episode_return_acc_[e]);
                episode_return_acc_[e] = 0.0;
            }
            current_obs_[e] = r.obs;
        }
    }

    // bootstrap values for the states after the fragments
    Matrix nobs_final(E, od);
    for (int e = 0; e < E; ++e) {
        std::copy(current_obs_[e].begin(), current_obs_[e].end(), buffer_.raw_final_obs.row(e).begin());
        normalize_obs(obs_stats_, current_obs_[e], nobs_final.row(e), cfg_.clipinput.enabled, cfg_.clipinput.value);
    }
    PolicyValueNet::Eval ev_final = net_.forward(nobs_final);
    for (int e = 0; e < E; ++e)
        buffer_.fragments[e].bootstrap_value = denormalize_value(value_stats_, ev_final.values[e]);
    for (int e = 0; e < E; ++e)
        buffer_.fragments[e].target_log_probs = buffer_.fragments[e].behavior_log_probs;

    // observation stats advance once per iteration, after acting
    if (cfg_.norminput)
        for (int i = 0; i < N; ++i) obs_stats_.update(buffer_.raw_obs.row(i));
    // training-time inputs use the advanced stats
    for (int i = 0; i < N; ++i)
        normalize_obs(obs_stats_, buffer_.raw_obs.row(i), buffer_.norm_obs.row(i), cfg_.clipinput.enabled,
                      cfg_.clipinput.value);

    env_steps_ += static_cast<long>(N) * cfg_.frameskip;
}

void Trainer::prepare_targets(bool refresh_values) {
    const int T = buffer_.frag_len;
    const int E = buffer_.num_envs;
    const EstimatorCfg ecfg = cfg_.estimator_cfg();

    if (refresh_values) {
        PolicyValueNet::Eval ev = net_.forward(buffer_.norm_obs);
        for (int e = 0; e < E; ++e) {
            Fragment& f = buffer_.fragments[e];
            for (int t = 0; t < T; ++t) {
                const int i = buffer_.index(e, t);
                f.values[t] = denormalize_value(value_stats_, ev.values[i]);
                const GaussianHead h = net_.head(ev, i);
                f.target_log_probs[t] = log_prob(h, buffer_.raw_actions.row(i)).value;
            }
        }
        Matrix nobs_final(E, env_spec_.obs_dim);
        for (int e = 0; e < E; ++e)
            normalize_obs(obs_stats_, buffer_.raw_final_obs.row(e), nobs_final.row(e), cfg_.clipinput.enabled,
                          cfg_.clipinput.value);
        PolicyValueNet::Eval ev_final = net_.forward(nobs_final);
        for (int e = 0; e < E; ++e)
            buffer_.fragments[e].bootstrap_value = denormalize_value(value_stats_, ev_final.values[e]);
    }

    std::vector<std::vector<double>> raw_targets(E);
    for (int e = 0; e < E; ++e) {
        AdvantageOutput out = estimate(buffer_.fragments[e], ecfg);
        raw_targets[e] = std::move(out.value_targets);
        for (int t = 0; t < T; ++t) buffer_.advantages[buffer_.index(e, t)] = out.advantages[t];
    }

    // value-target stats advance once per iteration, on the first estimate
    if (!refresh_values && cfg_.normreward)
        for (int e = 0; e < E; ++e)
            for (int t = 0; t < T; ++t) value_stats_.update(std::span<const double>(&raw_targets[e][t], 1));

    for (int e = 0; e < E; ++e)
        for (int t = 0; t < T; ++t) {
            const int i = buffer_.index(e, t);
            buffer_.norm_targets[i] = normalize_value_target(value_stats_, raw_targets[e][t]);
            if (!refresh_values)
                buffer_.old_value_pred[i] = normalize_value_target(value_stats_, buffer_.fragments[e].values[t]);
        }
}

Trainer::BatchLoss Trainer::batch_loss(std::span<const int> idx, std::vector<double>* grad) {
    const int B = static_cast<int>(idx.size());
    const int ad = env_spec_.act_dim;
    const PolicyLossCfg pcfg = cfg_.policy_loss_cfg();
    const ValueLossCfg vcfg = cfg_.value_loss_cfg();
    const RegularizerCfg rcfg = cfg_.regularizer_cfg();

    Matrix nobs(B, env_spec_.obs_dim);
    for (int r = 0; r < B; ++r)
        std::copy(buffer_.norm_obs.row(idx[r]).begin(), buffer_.norm_obs.row(idx[r]).end(), nobs.row(r).begin());
    PolicyValueNet::Eval ev = net_.forward(nobs);

    std::vector<double> adv(B);
    for (int r = 0; r < B; ++r) adv[r] = buffer_.advantages[idx[r]];
    if (cfg_.normadv) adv = normalize_advantages(adv);

    std::vector<GaussianHead> heads(B);
    std::vector<LogProbResult> lps(B);
    std::vector<PolicyLossInput> inputs(B);
    for (int r = 0; r < B; ++r) {
        heads[r] = net_.head(ev, r);
        lps[r] = log_prob(heads[r], buffer_.raw_actions.row(idx[r]));
        const int e = idx[r] / buffer_.frag_len;
        const int t = idx[r] % buffer_.frag_len;
        inputs[r] = PolicyLossInput{lps[r].value, buffer_.fragments[e].behavior_log_probs[t], adv[r]};
    }

    BatchLoss bl;
    net_.zero_grad();
    Matrix d_pol(B, net_.policy_out_dim());
    std::vector<double> d_val(B, 0.0);
    std::vector<double> d_tlp(B, 0.0);
    double d_lagrange = 0.0, d_lagrange_std = 0.0, d_vmpo_p = 0.0;

    // policy loss
    if (pcfg.kind == PolicyLossKind::Vmpo) {
        VmpoBatchResult res = vmpo_loss(inputs, vmpo_temp_, pcfg.vmpo_eps);
        bl.policy = res.loss;
        bl.total += res.loss + res.temperature_loss;
        d_vmpo_p = res.d_temperature_p;
        for (int r = 0; r < B; ++r) d_tlp[r] = res.d_target_log_probs[r];
    } else {
        double sum = 0.0;
        for (int r = 0; r < B; ++r) {
            PolicyLossResult res;
            switch (pcfg.kind) {
                case PolicyLossKind::Pg: res = pg_loss(inputs[r]); break;
                case PolicyLossKind::VTrace: res = vtrace_loss(inputs[r], pcfg.vtrace_rho); break;
                case PolicyLossKind::Ppo: res = ppo_loss(inputs[r], pcfg.ppo_epsilon); break;
                case PolicyLossKind::Awr: res = awr_loss(inputs[r], pcfg.awr_beta, pcfg.awr_w_max); break;
                case PolicyLossKind::Rpa: res = rpa_loss(inputs[r]); break;
                default: throw std::logic_error("unreachable policy loss kind");
            }
            sum += res.loss;
            d_tlp[r] = res.d_target_log_prob / B;
        }
        bl.policy = sum / B;
        bl.total += bl.policy;
    }

    // value loss
    const double value_coeff = cfg_.mlpshared ? cfg_.baselinecost : 1.0;
    {
        double sum = 0.0;
        for (int r = 0; r < B; ++r) {
            const ValueLossResult res =
                value_loss(ev.values[r], buffer_.old_value_pred[idx[r]], buffer_.norm_targets[idx[r]], vcfg);
            sum += res.loss;
            d_val[r] = value_coeff * res.d_pred / B;
        }
        bl.value = sum / B;
        bl.total += value_coeff * bl.value;
    }

    // distribution-level gradients: start with the policy-loss chain
    std::vector<std::vector<double>> d_mu(B, std::vector<double>(ad, 0.0));
    std::vector<std::vector<double>> d_sigma(B, std::vector<double>(ad, 0.0));
    for (int r = 0; r < B; ++r)
        for (int k = 0; k < ad; ++k) {
            d_mu[r][k] += d_tlp[r] * lps[r].d_mu[k];
            d_sigma[r][k] += d_tlp[r] * lps[r].d_sigma[k];
        }

    // regularizer
    if (rcfg.mode != RegMode::None) {
        if (rcfg.kind == RegKind::DecoupledKlMuPi) {
            double r_mean = 0.0, r_std = 0.0;
            std::vector<DecoupledRegTerm> terms(B);
            for (int r = 0; r < B; ++r) {
                terms[r] = decoupled_reg_term(heads[r], buffer_.behavior[idx[r]]);
                r_mean += terms[r].mean_term.value / B;
                r_std += terms[r].std_term.value / B;
            }
            double c_mean = 0.0, c_std = 0.0;
            if (rcfg.mode == RegMode::Penalty) {
                c_mean = rcfg.penalty_mean;
                c_std = rcfg.penalty_std;
            } else {
                c_mean = lagrange_.alpha();
                c_std = lagrange_std_.alpha();
                const ConstraintLoss cm = constraint_loss(r_mean, lagrange_, rcfg.threshold_mean, false);
                const ConstraintLoss cs = constraint_loss(r_std, lagrange_std_, rcfg.threshold_std, false);
                bl.total += cm.loss_term + cs.loss_term;
                d_lagrange = cm.d_p;
                d_lagrange_std = cs.d_p;
            }
            bl.total += c_mean * r_mean + c_std * r_std;
            bl.reg = r_mean + r_std;
            for (int r = 0; r < B; ++r)
                for (int k = 0; k < ad; ++k) {
                    d_mu[r][k] += (c_mean * terms[r].mean_term.d_mu[k] + c_std * terms[r].std_term.d_mu[k]) / B;
                    d_sigma[r][k] +=
                        (c_mean * terms[r].mean_term.d_sigma[k] + c_std * terms[r].std_term.d_sigma[k]) / B;
                }
        } else {
            const bool squashed_entropy = rcfg.kind == RegKind::Entropy && cfg_.actionpost == ActionPost::Tanh;
            double r_value = 0.0;
            std::vector<RegTerm> terms(B);
            for (int r = 0; r < B; ++r) {
                terms[r] = reg_term(rcfg.kind, heads[r], buffer_.behavior[idx[r]],
                                    squashed_entropy ? buffer_.tanh_noise.row(idx[r]) : std::span<const double>{});
                r_value += terms[r].value / B;
            }
            // entropy is maximized: its term enters the loss with a minus sign
            const double sign = rcfg.kind == RegKind::Entropy ? -1.0 : 1.0;
            double coeff = 0.0;
            if (rcfg.mode == RegMode::Penalty) {
                coeff = rcfg.penalty;
            } else {
                coeff = lagrange_.alpha();
                const bool lower = constraint_is_lower_bound(rcfg.kind);
                const ConstraintLoss cl = constraint_loss(r_value, lagrange_, rcfg.threshold, lower);
                bl.total += cl.loss_term;
                d_lagrange = cl.d_p;
            }
            bl.total += coeff * sign * r_value;
            bl.reg = r_value;
            for (int r = 0; r < B; ++r)
                for (int k = 0; k < ad; ++k) {
                    d_mu[r][k] += coeff * sign * terms[r].d_mu[k] / B;
                    d_sigma[r][k] += coeff * sign * terms[r].d_sigma[k] / B;
                }
        }
    }

    // diagnostics
    for (int r = 0; r < B; ++r) {
        bl.entropy += entropy(heads[r]).value / B;
        bl.kl += kl(buffer_.behavior[idx[r]], heads[r]).value / B;
    }

    for (int r = 0; r < B; ++r) net_.accumulate_dist_grad(heads[r], r, d_mu[r], d_sigma[r], d_pol);
    net_.backward(ev, d_pol, d_val);

    if (grad != nullptr) {
        grad->assign(num_params(), 0.0);
        net_.gather_grads(std::span<double>(*grad).first(net_.num_params()));
        size_t pos = net_.num_params();
        if (cfg_.regularizationtype == RegMode::Constraint) {
            (*grad)[pos++] = d_lagrange;
            if (cfg_.regularizer == RegKind::DecoupledKlMuPi) (*grad)[pos++] = d_lagrange_std;
        }
        if (cfg_.policyloss == PolicyLossKind::Vmpo) (*grad)[pos++] = d_vmpo_p;
    }
    return bl;
}

double Trainer::mean_behavior_kl() {
    PolicyValueNet::Eval ev = net_.forward(buffer_.norm_obs);
    double sum = 0.0;
    const int n = buffer_.size();
    for (int i = 0; i < n; ++i) sum += kl(buffer_.behavior[i], net_.head(ev, i)).value;
    return sum / n;
}

bool Trainer::train_iteration(IterationMetrics& m) {
    const long collected = static_cast<long>(buffer_.size()) * cfg_.frameskip;
    const double progress =
        clamp(static_cast<double>(env_steps_ - collected) / static_cast<double>(cfg_.totalsteps), 0.0, 1.0);
    const OptimCfg ocfg = cfg_.optim_cfg();
    const double lr_t = lr_at(ocfg, progress);
    m.lr = lr_t;

    std::vector<double> grad;
    std::vector<double> params;
    long updates = 0;
    for (int epoch = 0; epoch < cfg_.numepochsperstep; ++epoch) {
        if (cfg_.batchhandling == BatchHandling::ShuffleTransitionsRecompute) prepare_targets(true);
        const auto batches =
            make_minibatches(buffer_.num_envs, buffer_.frag_len, cfg_.batchhandling, cfg_.batchsize, shuffle_rng_);
        for (const std::vector<int>& batch : batches) {
            const BatchLoss bl = batch_loss(batch, &grad);
            if (!std::isfinite(bl.total) || !all_finite(grad)) return false;
            m.grad_norm += l2_norm(grad);
            if (cfg_.clipgrad.enabled) clip_gradient(grad, cfg_.clipgrad.value);
            params = get_params();
            optimizer_.step(params, grad, lr_t);
            set_params(params);
            lagrange_.clip();
            lagrange_std_.clip();
            vmpo_temp_.clip();
            m.policy_loss += bl.policy;
            m.value_loss += bl.value;
            m.reg_value += bl.reg;
            m.entropy += bl.entropy;
            m.kl += bl.kl;
            ++updates;
        }
        m.epoch_kl.push_back(mean_behavior_kl());
    }
    if (updates > 0) {
        m.policy_loss /= updates;
        m.value_loss /= updates;
        m.reg_value /= updates;
        m.entropy /= updates;
        m.kl /= updates;
        m.grad_norm /= updates;
    }
    m.multiplier = cfg_.regularizationtype == RegMode::Constraint ? lagrange_.alpha() : 0.0;
    m.multiplier2 = (cfg_.regularizationtype == RegMode::Constraint && cfg_.regularizer == RegKind::DecoupledKlMuPi)
                        ? lagrange_std_.alpha()
                        : 0.0;
    m.vmpo_eta = cfg_.policyloss == PolicyLossKind::Vmpo ? vmpo_temp_.eta() : 0.0;
    if (completed_returns_.empty()) {
        m.mean_return = kNan;
    } else {
        m.mean_return =
            std::accumulate(completed_returns_.begin(), completed_returns_.end(), 0.0) / completed_returns_.size();
    }
    return true;
}

double Trainer::evaluate(int episodes, Rng rng) {
    std::unique_ptr<Env> env = make_env(cfg_.env);
    if (cfg_.frameskip > 1) env = std::make_unique<FrameSkip>(std::move(env), cfg_.frameskip);
    const int od = env_spec_.obs_dim;
    const int ad = env_spec_.act_dim;
    double total = 0.0;
    Matrix nobs(1, od);
    Matrix action(1, ad);
    for (int ep = 0; ep < episodes; ++ep) {
        std::vector<double> obs = env->reset(rng);
        double ret = 0.0;
        while (!env->done()) {
            normalize_obs(obs_stats_, obs, nobs.row(0), cfg_.clipinput.enabled, cfg_.clipinput.value);
            PolicyValueNet::Eval ev = net_.forward(nobs);
            const GaussianHead h = net_.head(ev, 0);
            for (int k = 0; k < ad; ++k)
                action(0, k) = h.action_post == ActionPost::Tanh ? std::tanh(h.mu[k]) : clamp(h.mu[k], -1.0, 1.0);
            const StepResult r = env->step(action.row(0));
            ret += r.reward;
            obs = r.obs;
        }
        total += ret;
    }
    return total / episodes;
}

double Trainer::compute_failed_run_baseline() {
    set_params(initial_params_);
    return evaluate(100, misc_rng_.fork(99999));
}

RunResult Trainer::run() {
    RunResult res;
    long next_eval = cfg_.evalinterval;
    int eval_idx = 0;
    double latest_eval = kNan;
    while (env_steps_ < cfg_.totalsteps) {
        collect_iteration();
        prepare_targets(false);
        IterationMetrics m;
        m.iteration = ++iteration_;
        const bool ok = train_iteration(m);
        m.env_steps = env_steps_;
        while (ok && env_steps_ >= next_eval && next_eval <= cfg_.totalsteps) {
            latest_eval = evaluate(cfg_.evalepisodes, misc_rng_.fork(1000 + eval_idx));
            res.evals.push_back(EvalPoint{next_eval, latest_eval});
            ++eval_idx;
            next_eval += cfg_.evalinterval;
        }
        m.eval_return = latest_eval;
        res.metrics.push_back(m);
        if (!ok) {
            res.failed = true;
            break;
        }
    }
    const long planned = std::max<long>(1, cfg_.totalsteps / cfg_.evalinterval);
    if (res.failed) {
        const double baseline = compute_failed_run_baseline();
        while (static_cast<long>(res.evals.size()) < planned) {
            res.evals.push_back(EvalPoint{next_eval, baseline});
            next_eval += cfg_.evalinterval;
        }
    } else if (res.evals.empty()) {
        res.evals.push_back(EvalPoint{env_steps_, evaluate(cfg_.evalepisodes, misc_rng_.fork(1000))});
    }
    res.score = performance_score(res.evals);
    return res;
}

void Trainer::save_checkpoint(const std::string& path) const {
    TensorStore store;
    net_.save_to(store, "net");
    store.put_vector("obs_stats.mean", obs_stats_.mean);
    store.put_vector("obs_stats.m2", obs_stats_.m2);
    store.put_scalar("obs_stats.count", obs_stats_.count);
    store.put_vector("value_stats.mean", value_stats_.mean);
    store.put_vector("value_stats.m2", value_stats_.m2);
    store.put_scalar("value_stats.count", value_stats_.count);
    store.put_vector("optimizer.m", optimizer_.m());
    store.put_vector("optimizer.v", optimizer_.v());
    store.put_vector("optimizer.mg", optimizer_.mg());
    store.put_vector("optimizer.momentum", optimizer_.momentum_buf());
    store.put_scalar("optimizer.t", static_cast<double>(optimizer_.step_count()));
    store.put_scalar("lagrange.p", lagrange_.p);
    store.put_scalar("lagrange_std.p", lagrange_std_.p);
    store.put_scalar("vmpo.p", vmpo_temp_.p);
    store.put_scalar("env_steps", static_cast<double>(env_steps_));
    store.save(path);
}

void Trainer::load_checkpoint(const std::string& path) {
    const TensorStore store = TensorStore::load(path);
    net_.load_from(store, "net");
    obs_stats_.mean = store.get_vector("obs_stats.mean");
    obs_stats_.m2 = store.get_vector("obs_stats.m2");
    obs_stats_.count = store.get_scalar("obs_stats.count");
    value_stats_.mean = store.get_vector("value_stats.mean");
    value_stats_.m2 = store.get_vector("value_stats.m2");
    value_stats_.count = store.get_scalar("value_stats.count");
    optimizer_.m() = store.get_vector("optimizer.m");
    optimizer_.v() = store.get_vector("optimizer.v");
    optimizer_.mg() = store.get_vector("optimizer.mg");
    optimizer_.momentum_buf() = store.get_vector("optimizer.momentum");
    optimizer_.step_counter() = static_cast<long>(store.get_scalar("optimizer.t"));
    lagrange_.p = store.get_scalar("lagrange.p");
    lagrange_std_.p = store.get_scalar("lagrange_std.p");
    vmpo_temp_.p = store.get_scalar("vmpo.p");
    env_steps_ = static_cast<long>(store.get_scalar("env_steps"));
}

void Trainer::write_metrics_csv(const std::string& path, const std::vector<IterationMetrics>& metrics) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "iteration,env_steps,mean_return,eval_return,policy_loss,value_loss,reg_value,entropy,kl,"
           "grad_norm,lr,multiplier,multiplier2,vmpo_eta\n";
    for (const IterationMetrics& m : metrics) {
        out << m.iteration << ',' << m.env_steps << ',' << format_double(m.mean_return) << ','
            << format_double(m.eval_return) << ',' << format_double(m.policy_loss) << ','
            << format_double(m.value_loss) << ',' << format_double(m.reg_value) << ',' << format_double(m.entropy)
            << ',' << format_double(m.kl) << ',' << format_double(m.grad_norm) << ',' << format_double(m.lr) << ','
            << format_double(m.multiplier) << ',' << format_double(m.multiplier2) << ',' << format_double(m.vmpo_eta)
            << '\n';
    }
}

void Trainer::write_summary_json(const std::string& path, const RunResult& result) const {
    nlohmann::json j;
    j["score"] = result.score;
    j["seed"] = seed_;
    j["config_hash"] = config_hash(cfg_);
    j["failed"] = result.failed;
    j["env_steps"] = env_steps_;
    nlohmann::json evals = nlohmann::json::array();
    for (const EvalPoint& p : result.evals) evals.push_back({{"env_steps", p.env_steps}, {"mean_return", p.mean_return}});
    j["evals"] = evals;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
}

}  // namespace oplab
