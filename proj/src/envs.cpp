#include "oraac/envs.hpp"

#include <algorithm>

namespace oraac {

void CarConfig::validate() const
{
    if (!(dt > 0.0 && goal > 0.0 && speed_limit > 0.0 && goal_bonus > 0.0 && penalty > 0.0 && action_bound > 0.0))
        throw ConfigError("car: magnitudes must be positive");
    if (!(step_reward < 0.0))
        throw ConfigError("car: the per-step reward must be a cost (negative)");
    if (!(penalty_prob >= 0.0 && penalty_prob <= 1.0))
        throw ConfigError("car: penalty probability must lie in [0, 1]");
    if (horizon < 1)
        throw ConfigError("car: horizon must be at least 1");
}

nlohmann::json to_json(const CarConfig& c)
{
    return {{"name", "car"},
            {"dt", c.dt},
            {"goal", c.goal},
            {"speed_limit", c.speed_limit},
            {"step_reward", c.step_reward},
            {"goal_bonus", c.goal_bonus},
            {"penalty", c.penalty},
            {"penalty_prob", c.penalty_prob},
            {"horizon", c.horizon},
            {"action_bound", c.action_bound}};
}

CarConfig car_config_from_json(const nlohmann::json& doc)
{
    CarConfig c;
    c.dt = doc.value("dt", c.dt);
    c.goal = doc.value("goal", c.goal);
    c.speed_limit = doc.value("speed_limit", c.speed_limit);
    c.step_reward = doc.value("step_reward", c.step_reward);
    c.goal_bonus = doc.value("goal_bonus", c.goal_bonus);
    c.penalty = doc.value("penalty", c.penalty);
    c.penalty_prob = doc.value("penalty_prob", c.penalty_prob);
    c.horizon = doc.value("horizon", c.horizon);
    c.action_bound = doc.value("action_bound", c.action_bound);
    c.validate();
    return c;
}

CarState car_step(const CarState& s, double accel, const CarConfig& c)
{
    const double a = std::clamp(accel, -c.action_bound, c.action_bound);
    CarState next;
    next.x = s.x + s.v * c.dt + 0.5 * a * c.dt * c.dt;
    next.v = s.v + a * c.dt;
    next.t = s.t + 1;
    return next;
}

bool reached_goal(const CarState& s, const CarConfig& c) { return s.x >= c.goal; }

double car_reward(const CarState& next, bool penalty_draw, const CarConfig& c)
{
    double r = c.step_reward;
    if (reached_goal(next, c))
        r += c.goal_bonus;
    if (next.v > c.speed_limit && penalty_draw)
        r -= c.penalty;
    return r;
}

double car_reward(const CarState& next, Rng& rng, const CarConfig& c)
{
    bool draw = false;
    if (next.v > c.speed_limit)
        draw = std::bernoulli_distribution(c.penalty_prob)(rng);
    return car_reward(next, draw, c);
}

bool is_terminal(const CarState& s, const CarConfig& c) { return reached_goal(s, c) || s.t >= c.horizon; }

CarEnv::CarEnv(CarConfig config) : config_(config) { config_.validate(); }

Vector CarEnv::observe(const CarState& s)
{
    Vector obs(2);
    obs << s.x, s.v;
    return obs;
}

Vector CarEnv::reset()
{
    state_ = CarState{};
    return observe(state_);
}

StepResult CarEnv::step(const Vector& action, Rng& rng)
{
    if (action.size() != 1)
        throw ConfigError("car: actions are one-dimensional");
    if (is_terminal(state_, config_))
        throw UsageError("car: step called on a finished episode");
    state_ = car_step(state_, action(0), config_);
    StepResult out;
    out.state = observe(state_);
    out.reward = car_reward(state_, rng, config_);
    out.terminated = reached_goal(state_, config_);
    out.truncated = !out.terminated && state_.t >= config_.horizon;
    out.risk_value = state_.v;
    out.risky = state_.v > config_.speed_limit;
    return out;
}

nlohmann::json CarEnv::to_json() const { return oraac::to_json(config_); }

std::unique_ptr<Environment> make_environment(const nlohmann::json& doc)
{
    const std::string name = doc.value("name", std::string("car"));
    if (name == "car")
        return std::make_unique<CarEnv>(car_config_from_json(doc));
    throw ConfigError("unknown environment '" + name + "'");
}

EpisodeRecord run_episode(Environment& env, const ActionSource& policy, Rng& rng)
{
    EpisodeRecord record;
    Vector state = env.reset();
    for (int t = 0; t < env.horizon(); ++t) {
        const Vector action = env.action_box().clip(policy(state, rng));
        StepResult step = env.step(action, rng);
        record.total_return += step.reward;
        record.risky_steps += step.risky ? 1 : 0;
        record.risk_values.push_back(step.risk_value);
        record.transitions.push_back({state, action, step.reward, step.state, step.terminated});
        state = std::move(step.state);
        if (step.terminated || step.truncated) {
            record.reached_goal = step.terminated;
            break;
        }
    }
    record.duration = static_cast<int>(record.transitions.size());
    return record;
}

}  // namespace oraac
