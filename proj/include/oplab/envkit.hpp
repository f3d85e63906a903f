#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "oplab/math.hpp"

namespace oplab {

enum class EnvId { PointMass2D, SwingUp1D, LinQuad };

EnvId env_id_from_string(const std::string& s);
std::string to_string(EnvId id);

struct EnvSpec {
    int obs_dim = 0;
    int act_dim = 0;
    int step_limit = 0;
    EnvId id = EnvId::PointMass2D;
};

struct StepResult {
    std::vector<double> obs;
    double reward = 0.0;
    bool terminated = false;  // true environmental termination
    bool abandoned = false;   // step limit hit without termination
};

/// Deterministic continuous-control environment. Dynamics are pure
/// functions of (state, action); randomness enters only through reset.
class Env {
public:
    virtual ~Env() = default;

    const EnvSpec& spec() const { return spec_; }

    std::vector<double> reset(Rng& rng);
    StepResult step(std::span<const double> action);

    bool done() const { return done_; }

protected:
    explicit Env(EnvSpec spec) : spec_(spec) {}

    virtual std::vector<double> do_reset(Rng& rng) = 0;
    // Returns (observation, reward, terminated).
    virtual StepResult do_step(std::span<const double> action) = 0;

private:
    EnvSpec spec_;
    int steps_ = 0;
    bool done_ = true;
};

std::unique_ptr<Env> make_env(EnvId id);

/// Repeats each action n times, summing rewards and stopping early on
/// episode end. Callers must discount wrapper transitions with gamma^n.
class FrameSkip : public Env {
public:
    FrameSkip(std::unique_ptr<Env> inner, int n);

protected:
    std::vector<double> do_reset(Rng& rng) override;
    StepResult do_step(std::span<const double> action) override;

private:
    std::unique_ptr<Env> inner_;
    int n_;
};

/// Synchronous vector of persistent environments with in-call auto-reset:
/// when a step ends an episode, the returned observation is already the
/// post-reset one while the end-of-episode flags describe the transition
/// that ended it.
class VecEnv {
public:
    VecEnv(EnvId id, int num_envs, int frame_skip, Rng reset_rng);

    const EnvSpec& spec() const { return envs_[0]->spec(); }
    int size() const { return static_cast<int>(envs_.size()); }

    /// Resets every environment and returns the initial observations.
    std::vector<std::vector<double>> reset_all();

    /// One synchronous step; actions must have one row per environment.
    std::vector<StepResult> step(const Matrix& actions);

private:
    std::vector<std::unique_ptr<Env>> envs_;
    Rng rng_;
};

}  // namespace oplab
