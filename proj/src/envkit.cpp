#include "oplab/envkit.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace oplab {

EnvId env_id_from_string(const std::string& s) {
    if (s == "pointmass2d") return EnvId::PointMass2D;
    if (s == "swingup1d") return EnvId::SwingUp1D;
    if (s == "linquad") return EnvId::LinQuad;
    throw std::invalid_argument("unknown environment id: " + s);
}

std::string to_string(EnvId id) {
    switch (id) {
        case EnvId::PointMass2D: return "pointmass2d";
        case EnvId::SwingUp1D: return "swingup1d";
        case EnvId::LinQuad: return "linquad";
    }
    return "?";
}

std::vector<double> Env::reset(Rng& rng) {
    steps_ = 0;
    done_ = false;
    return do_reset(rng);
}

StepResult Env::step(std::span<const double> action) {
    if (done_) throw std::logic_error("step() called on a finished episode");
    if (static_cast<int>(action.size()) != spec_.act_dim)
        throw std::invalid_argument("action dimension mismatch");
    StepResult r = do_step(action);
    ++steps_;
    if (!r.terminated && steps_ >= spec_.step_limit) r.abandoned = true;
    done_ = r.terminated || r.abandoned;
    return r;
}

namespace {

class PointMass2D final : public Env {
public:
    PointMass2D() : Env({4, 2, 100, EnvId::PointMass2D}) {}

protected:
    std::vector<double> do_reset(Rng& rng) override {
        pos_[0] = rng.uniform(-1.0, 1.0);
        pos_[1] = rng.uniform(-1.0, 1.0);
        vel_[0] = vel_[1] = 0.0;
        return obs();
    }

    StepResult do_step(std::span<const double> a) override {
        double a_sq = 0.0;
        for (int i = 0; i < 2; ++i) {
            vel_[i] = 0.9 * vel_[i] + 0.1 * a[i];
            pos_[i] += 0.05 * vel_[i];
            a_sq += a[i] * a[i];
        }
        const double reward = -(pos_[0] * pos_[0] + pos_[1] * pos_[1]) - 0.01 * a_sq;
        return {obs(), reward, false, false};
    }

private:
    std::vector<double> obs() const { return {pos_[0], pos_[1], vel_[0], vel_[1]}; }
    double pos_[2] = {0, 0};
    double vel_[2] = {0, 0};
};

// Pendulum swing-up; dynamics and cost follow the classic formulation with
// torque rescaled from [-1, 1].
class SwingUp1D final : public Env {
public:
    SwingUp1D() : Env({3, 1, 200, EnvId::SwingUp1D}) {}

protected:
    std::vector<double> do_reset(Rng& rng) override {
        theta_ = rng.uniform(-M_PI, M_PI);
        theta_dot_ = rng.uniform(-1.0, 1.0);
        return obs();
    }

    StepResult do_step(std::span<const double> a) override {
        constexpr double kDt = 0.05, kG = 10.0, kMaxTorque = 2.0, kMaxSpeed = 8.0;
        const double u = kMaxTorque * clamp(a[0], -1.0, 1.0);
        const double cost = angle_norm(theta_) * angle_norm(theta_) + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u;
        theta_dot_ += (1.5 * kG * std::sin(theta_) + 3.0 * u) * kDt;
        theta_dot_ = clamp(theta_dot_, -kMaxSpeed, kMaxSpeed);
        theta_ += theta_dot_ * kDt;
        return {obs(), -cost, false, false};
    }

private:
    static double angle_norm(double th) {
        th = std::fmod(th + M_PI, 2.0 * M_PI);
        if (th < 0) th += 2.0 * M_PI;
        return th - M_PI;
    }
    std::vector<double> obs() const { return {std::cos(theta_), std::sin(theta_), theta_dot_}; }
    double theta_ = M_PI;
    double theta_dot_ = 0.0;
};

// Stable 4-dim linear system with quadratic cost; exactly solvable by a
// finite-horizon Riccati recursion, which makes it a useful baseline.
class LinQuad final : public Env {
public:
    LinQuad() : Env({4, 2, 100, EnvId::LinQuad}) {}

    // x' = A x + B u
    static constexpr double kA[4][4] = {{0.97, 0.02, 0.0, 0.0},
                                        {-0.02, 0.97, 0.0, 0.0},
                                        {0.0, 0.0, 0.95, 0.05},
                                        {0.0, 0.0, -0.05, 0.95}};
    static constexpr double kB[4][2] = {{0.1, 0.0}, {0.0, 0.1}, {0.05, 0.0}, {0.0, 0.05}};

protected:
    std::vector<double> do_reset(Rng& rng) override {
        for (double& xi : x_) xi = rng.uniform(-1.0, 1.0);
        return {x_.begin(), x_.end()};
    }

    StepResult do_step(std::span<const double> a) override {
        std::array<double, 4> nx{};
        for (int i = 0; i < 4; ++i) {
            double s = 0.0;
            for (int j = 0; j < 4; ++j) s += kA[i][j] * x_[j];
            for (int j = 0; j < 2; ++j) s += kB[i][j] * a[j];
            nx[i] = s;
        }
        x_ = nx;
        double x_sq = 0.0, a_sq = 0.0;
        for (double xi : x_) x_sq += xi * xi;
        for (double ai : a) a_sq += ai * ai;
        return {{x_.begin(), x_.end()}, -(x_sq + 0.01 * a_sq), false, false};
    }

private:
    std::array<double, 4> x_{};
};

}  // namespace

std::unique_ptr<Env> make_env(EnvId id) {
    switch (id) {
        case EnvId::PointMass2D: return std::make_unique<PointMass2D>();
        case EnvId::SwingUp1D: return std::make_unique<SwingUp1D>();
        case EnvId::LinQuad: return std::make_unique<LinQuad>();
    }
    throw std::invalid_argument("bad EnvId");
}

FrameSkip::FrameSkip(std::unique_ptr<Env> inner, int n)
    : Env([&] {
          EnvSpec s = inner->spec();
          return s;
      }()),
      inner_(std::move(inner)),
      n_(n) {
    if (n_ < 1) throw std::invalid_argument("frame skip must be >= 1");
}

std::vector<double> FrameSkip::do_reset(Rng& rng) { return inner_->reset(rng); }

StepResult FrameSkip::do_step(std::span<const double> action) {
    StepResult out;
    for (int i = 0; i < n_; ++i) {
        StepResult r = inner_->step(action);
        out.obs = std::move(r.obs);
        out.reward += r.reward;
        out.terminated = r.terminated;
        out.abandoned = r.abandoned;
        if (r.terminated || r.abandoned) break;
    }
    return out;
}

VecEnv::VecEnv(EnvId id, int num_envs, int frame_skip, Rng reset_rng) : rng_(reset_rng) {
    if (num_envs < 1) throw std::invalid_argument("num_envs must be >= 1");
    envs_.reserve(num_envs);
    for (int i = 0; i < num_envs; ++i) {
        auto e = make_env(id);
        if (frame_skip > 1) e = std::make_unique<FrameSkip>(std::move(e), frame_skip);
        envs_.push_back(std::move(e));
    }
}

std::vector<std::vector<double>> VecEnv::reset_all() {
    std::vector<std::vector<double>> obs;
    obs.reserve(envs_.size());
    for (auto& e : envs_) obs.push_back(e->reset(rng_));
    return obs;
}

std::vector<StepResult> VecEnv::step(const Matrix& actions) {
    if (actions.rows != size() || actions.cols != spec().act_dim)
        throw std::invalid_argument("action matrix shape mismatch");
    std::vector<StepResult> out;
    out.reserve(envs_.size());
    for (int i = 0; i < size(); ++i) {
        StepResult r = envs_[i]->step(actions.row(i));
        if (r.terminated || r.abandoned) r.obs = envs_[i]->reset(rng_);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace oplab
