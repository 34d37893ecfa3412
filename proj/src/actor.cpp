#include "oraac/actor.hpp"

namespace oraac {

void PolicyConfig::validate() const
{
    if (state_dim < 1 || action_dim < 1)
        throw ConfigError("policy: state and action dimensions must be positive");
    for (Index h : hidden)
        if (h < 1)
            throw ConfigError("policy: hidden widths must be positive");
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw ConfigError("policy: lambda must lie in [0, 1]");
    if (mode == PolicyMode::raac && lambda != 1.0)
        throw ConfigError("policy: raac mode requires lambda = 1");
}

nlohmann::json to_json(const PolicyConfig& c)
{
    return {{"state_dim", c.state_dim},
            {"action_dim", c.action_dim},
            {"hidden", c.hidden},
            {"lambda", c.lambda},
            {"mode", c.mode == PolicyMode::raac ? "raac" : "oraac"}};
}

PolicyConfig policy_config_from_json(const nlohmann::json& doc, PolicyConfig c)
{
    c.state_dim = doc.value("state_dim", c.state_dim);
    c.action_dim = doc.value("action_dim", c.action_dim);
    if (doc.contains("hidden"))
        c.hidden = doc.at("hidden").get<std::vector<Index>>();
    c.lambda = doc.value("lambda", c.lambda);
    if (doc.contains("mode")) {
        const auto mode = doc.at("mode").get<std::string>();
        if (mode != "oraac" && mode != "raac")
            throw ConfigError("policy: unknown mode '" + mode + "'");
        c.mode = mode == "raac" ? PolicyMode::raac : PolicyMode::oraac;
    }
    c.validate();
    return c;
}

PerturbationPolicy::PerturbationPolicy(const PolicyConfig& config, ActionBox box, Rng& rng)
    : config_(config), box_(std::move(box))
{
    config_.validate();
    if (box_.dim() != config_.action_dim)
        throw ConfigError("policy: action box dimension mismatch");
    std::vector<Index> w{config_.state_dim + (config_.mode == PolicyMode::oraac ? config_.action_dim : 0)};
    w.insert(w.end(), config_.hidden.begin(), config_.hidden.end());
    w.push_back(config_.action_dim);
    params_.add("xi", Mlp<double>::random(std::span<const Index>(w), Activation::relu, Activation::tanh, rng));
}

PerturbationPolicy::PerturbationPolicy(const PolicyConfig& config, ActionBox box, ParamSet<double> params)
    : config_(config), box_(std::move(box)), params_(std::move(params))
{
    config_.validate();
    const Index in = config_.state_dim + (config_.mode == PolicyMode::oraac ? config_.action_dim : 0);
    if (params_.size() != 1 || params_.net(0).input_width() != in ||
        params_.net(0).output_width() != config_.action_dim)
        throw ConfigError("policy: network shapes do not match the configuration");
}

Matrix PerturbationPolicy::net_input(const Matrix& states, const Matrix& behavior) const
{
    if (states.rows() != config_.state_dim)
        throw ConfigError("policy: state dimension mismatch");
    if (config_.mode == PolicyMode::raac)
        return states;
    if (behavior.rows() != config_.action_dim || behavior.cols() != states.cols())
        throw ConfigError("policy: one behavior action per state is required");
    Matrix in(states.rows() + behavior.rows(), states.cols());
    in << states, behavior;
    return in;
}

Matrix PerturbationPolicy::perturbation(const Matrix& states, const Matrix& behavior, MlpTape<double>* tape) const
{
    const Matrix squashed = params_.net(0).forward(net_input(states, behavior), tape);
    return squashed.array().colwise() * box_.half_range().array();
}

Matrix PerturbationPolicy::act(const Matrix& states, const Matrix& behavior, Trace& trace) const
{
    const Matrix xi = perturbation(states, behavior, &trace.tape);
    if (config_.mode == PolicyMode::raac) {
        trace.inside = Matrix::Ones(xi.rows(), xi.cols());
        return xi.colwise() + box_.center();
    }
    const Matrix raw = behavior + config_.lambda * xi;
    const Matrix low = box_.low.replicate(1, raw.cols());
    const Matrix high = box_.high.replicate(1, raw.cols());
    trace.inside = ((raw.array() >= low.array()) && (raw.array() <= high.array())).cast<double>();
    return raw.cwiseMax(low).cwiseMin(high);
}

Matrix PerturbationPolicy::act(const Matrix& states, const Matrix& behavior) const
{
    Trace trace;
    return act(states, behavior, trace);
}

Vector PerturbationPolicy::act(const Vector& state, const Vector& behavior) const
{
    return act(Matrix(state), Matrix(behavior)).col(0);
}

void PerturbationPolicy::backward(const Trace& trace, const Matrix& action_grad, GradSet<double>& grads) const
{
    const double scale = config_.mode == PolicyMode::raac ? 1.0 : config_.lambda;
    const Matrix g_squashed =
        (action_grad.cwiseProduct(trace.inside) * scale).array().colwise() * box_.half_range().array();
    params_.net(0).backward(trace.tape, g_squashed, &grads.net(0));
}

double actor_loss(const PerturbationPolicy& policy, const QuantileCritic& critic, const Matrix& states,
                  const Matrix& behavior, const Vector& taus, GradSet<double>* grads)
{
    const Index batch = states.cols();
    if (batch == 0)
        throw UsageError("actor loss: empty batch");
    if (taus.size() == 0)
        throw UsageError("actor loss: no quantile levels");
    PerturbationPolicy::Trace trace;
    const Matrix actions = policy.act(states, behavior, trace);
    CriticTape tape;
    const Matrix values = critic.values(states, actions, taus, grads ? &tape : nullptr);
    const double scale = 1.0 / (static_cast<double>(batch) * static_cast<double>(taus.size()));
    if (grads) {
        const Matrix upstream = Matrix::Constant(taus.size(), batch, -scale);
        // Parameter gradients of the critic are not requested: it is frozen here.
        const Matrix action_grad = critic.backward(tape, upstream, nullptr);
        policy.backward(trace, action_grad, *grads);
    }
    return -values.sum() * scale;
}

double actor_loss(const PerturbationPolicy& policy, const BehaviorVae* vae, const QuantileCritic& critic,
                  const Matrix& states, const DistortionSpec& spec, Index count, Rng& rng, GradSet<double>* grads)
{
    Matrix behavior;
    if (policy.config().mode == PolicyMode::oraac) {
        if (!vae)
            throw UsageError("actor loss: oraac mode needs a behavior model");
        behavior = vae->sample(states, rng);
    }
    const Vector taus = sample_quantile_levels(spec, count, rng);
    return actor_loss(policy, critic, states, behavior, taus, grads);
}

Vector eval_action(const PerturbationPolicy& policy, const BehaviorVae* vae, const Vector& state, Rng& rng,
                   bool zero_latent)
{
    if (policy.config().mode == PolicyMode::raac)
        return policy.act(Matrix(state), Matrix()).col(0);
    if (!vae)
        throw UsageError("eval_action: oraac mode needs a behavior model");
    const Matrix s = state;
    const Matrix b = zero_latent ? vae->decode(s, Matrix::Zero(vae->config().latent(), 1)) : vae->sample(s, rng);
    return policy.act(s, b).col(0);
}

}  // namespace oraac
