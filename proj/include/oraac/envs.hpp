#pragma once

// One-dimensional car with a stochastic speeding penalty, plus the generic
// environment interface used by data generation and evaluation.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "oraac/spaces.hpp"
#include "oraac/transition.hpp"

namespace oraac {

struct CarConfig {
    double dt = 0.1;
    double goal = 2.5;
    double speed_limit = 1.0;
    double step_reward = -10.0;
    double goal_bonus = 370.0;
    double penalty = 25.0;
    double penalty_prob = 0.2;
    int horizon = 400;
    double action_bound = 1.0;

    void validate() const;
};

nlohmann::json to_json(const CarConfig& config);
CarConfig car_config_from_json(const nlohmann::json& doc);

struct CarState {
    double x = 0.0;  // position, m
    double v = 0.0;  // velocity, m/s
    int t = 0;       // steps taken
};

/// x' = x + v dt + a dt^2 / 2, v' = v + a dt, t' = t + 1; a is clipped to the box.
CarState car_step(const CarState& state, double accel, const CarConfig& config = {});
/// Reward of arriving in `next`; the speeding penalty applies when `penalty_draw` is set.
double car_reward(const CarState& next, bool penalty_draw, const CarConfig& config = {});
/// Draws the Bernoulli penalty only when the car is speeding.
double car_reward(const CarState& next, Rng& rng, const CarConfig& config = {});
bool reached_goal(const CarState& state, const CarConfig& config = {});
bool is_terminal(const CarState& state, const CarConfig& config = {});

struct StepResult {
    Vector state;
    double reward = 0.0;
    bool terminated = false;  // absorbing: no bootstrap past this step
    bool truncated = false;   // horizon cutoff
    double risk_value = 0.0;  // monitored risk variable after the step
    bool risky = false;       // risk variable beyond its threshold
};

class Environment {
public:
    virtual ~Environment() = default;

    virtual std::string name() const = 0;
    virtual Index state_dim() const = 0;
    virtual Index action_dim() const = 0;
    virtual ActionBox action_box() const = 0;
    virtual int horizon() const = 0;
    virtual double risk_threshold() const = 0;

    virtual Vector reset() = 0;
    virtual StepResult step(const Vector& action, Rng& rng) = 0;

    virtual nlohmann::json to_json() const = 0;
    virtual std::unique_ptr<Environment> clone() const = 0;
};

class CarEnv final : public Environment {
public:
    explicit CarEnv(CarConfig config = {});

    std::string name() const override { return "car"; }
    Index state_dim() const override { return 2; }
    Index action_dim() const override { return 1; }
    ActionBox action_box() const override { return ActionBox::symmetric(1, config_.action_bound); }
    int horizon() const override { return config_.horizon; }
    double risk_threshold() const override { return config_.speed_limit; }

    Vector reset() override;
    StepResult step(const Vector& action, Rng& rng) override;

    nlohmann::json to_json() const override;
    std::unique_ptr<Environment> clone() const override { return std::make_unique<CarEnv>(*this); }

    const CarConfig& config() const { return config_; }
    const CarState& state() const { return state_; }

    static Vector observe(const CarState& state);

private:
    CarConfig config_;
    CarState state_;
};

/// Builds an environment from {"name": "car", ...parameters}.
std::unique_ptr<Environment> make_environment(const nlohmann::json& doc);

struct EpisodeRecord {
    std::vector<Transition> transitions;
    std::vector<double> risk_values;  // risk variable after each step
    double total_return = 0.0;        // undiscounted
    int risky_steps = 0;
    int duration = 0;
    bool reached_goal = false;
};

using ActionSource = std::function<Vector(const Vector& state, Rng& rng)>;

/// Resets `env` and steps it until termination or the horizon.
EpisodeRecord run_episode(Environment& env, const ActionSource& policy, Rng& rng);

}  // namespace oraac
