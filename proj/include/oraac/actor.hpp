#pragma once

// Risk-averse policy built on a behavior model:
//
//   oraac:  a = clip(b + lambda * xi(s, b)),  b drawn from the behavior VAE
//   raac:   a = xi(s)
//
// xi ends in tanh scaled by the action half-range. The actor loss is the
// negative distorted critic value at the policy's action, estimated with K
// quantile levels drawn from the distortion's sampling distribution.

#include <optional>

#include <json.hpp>

#include "oraac/critic.hpp"
#include "oraac/risk.hpp"
#include "oraac/vae.hpp"

namespace oraac {

enum class PolicyMode { oraac, raac };

struct PolicyConfig {
    Index state_dim = 2;
    Index action_dim = 1;
    std::vector<Index> hidden{64, 64};
    double lambda = 0.25;
    PolicyMode mode = PolicyMode::oraac;

    void validate() const;
};

nlohmann::json to_json(const PolicyConfig& config);
PolicyConfig policy_config_from_json(const nlohmann::json& doc, PolicyConfig defaults = {});

class PerturbationPolicy {
public:
    PerturbationPolicy() = default;
    PerturbationPolicy(const PolicyConfig& config, ActionBox box, Rng& rng);
    PerturbationPolicy(const PolicyConfig& config, ActionBox box, ParamSet<double> params);

    const PolicyConfig& config() const { return config_; }
    const ActionBox& box() const { return box_; }
    ParamSet<double>& params() { return params_; }
    const ParamSet<double>& params() const { return params_; }

    /// xi(s, b) in oraac mode (behavior ignored in raac mode); within +-half_range.
    Matrix perturbation(const Matrix& states, const Matrix& behavior, MlpTape<double>* tape = nullptr) const;

    /// Final actions, always inside the action box.
    Matrix act(const Matrix& states, const Matrix& behavior) const;
    Vector act(const Vector& state, const Vector& behavior) const;

    /// Forward pass recording what is needed to push action gradients into
    /// the perturbation network.
    struct Trace {
        MlpTape<double> tape;
        Matrix inside;  // 1 where the unclipped action lies in the box
    };
    Matrix act(const Matrix& states, const Matrix& behavior, Trace& trace) const;
    void backward(const Trace& trace, const Matrix& action_grad, GradSet<double>& grads) const;

private:
    Matrix net_input(const Matrix& states, const Matrix& behavior) const;

    PolicyConfig config_;
    ActionBox box_;
    ParamSet<double> params_;
};

/// -(1/B) sum_s (1/K) sum_k Z(s, act(s, b_s); tau_k) with behavior actions and
/// levels held fixed. Gradients reach only the policy parameters.
double actor_loss(const PerturbationPolicy& policy, const QuantileCritic& critic, const Matrix& states,
                  const Matrix& behavior, const Vector& taus, GradSet<double>* grads);

/// Draws one behavior action per state from the VAE (oraac mode) and K levels
/// from the distortion, then evaluates the loss above.
double actor_loss(const PerturbationPolicy& policy, const BehaviorVae* vae, const QuantileCritic& critic,
                  const Matrix& states, const DistortionSpec& spec, Index count, Rng& rng, GradSet<double>* grads);

/// Deployment action: b from the VAE prior (or z = 0 when `zero_latent`), then act.
Vector eval_action(const PerturbationPolicy& policy, const BehaviorVae* vae, const Vector& state, Rng& rng,
                   bool zero_latent = false);

}  // namespace oraac
