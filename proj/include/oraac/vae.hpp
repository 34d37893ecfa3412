#pragma once

// Conditional VAE over behavior actions.
//
//   encoder E(s, a) -> (mu, log sigma)       z = mu + sigma * eps
//   decoder D(s, z) -> b = center + half_range * tanh(.)
//
// Training minimizes sum_dims (a - D(s, z))^2 + 0.5 KL(N(mu, sigma^2) || N(0, I)),
// averaged over the batch. New behavior actions are generated from the prior,
// z ~ N(0, I) clipped to [-c, c].

#include <vector>

#include <json.hpp>

#include "oraac/diffcore.hpp"
#include "oraac/spaces.hpp"

namespace oraac {

struct VaeConfig {
    Index state_dim = 2;
    Index action_dim = 1;
    Index latent_dim = 0;  // 0 selects 2 * action_dim
    std::vector<Index> hidden{64, 64};
    double latent_clip = 0.5;
    double log_sigma_min = -4.0;
    double log_sigma_max = 15.0;

    Index latent() const { return latent_dim > 0 ? latent_dim : 2 * action_dim; }
    void validate() const;
};

nlohmann::json to_json(const VaeConfig& config);
VaeConfig vae_config_from_json(const nlohmann::json& doc, VaeConfig defaults = {});

struct Posterior {
    Matrix mu;     // L x B
    Matrix sigma;  // L x B, strictly positive
};

/// Closed-form KL(N(mu, diag sigma^2) || N(0, I)) per column.
Vector gaussian_kl(const Matrix& mu, const Matrix& sigma);

/// z = mu + sigma * eps with eps ~ N(0, I).
Matrix reparam_sample(const Matrix& mu, const Matrix& sigma, Rng& rng);

struct VaeLossParts {
    double total = 0.0;
    double reconstruction = 0.0;  // batch mean of the squared error
    double kl = 0.0;              // batch mean of the KL term (before the 1/2 weight)
};

class BehaviorVae {
public:
    enum Net : std::size_t { kEncoder = 0, kDecoder };

    BehaviorVae() = default;
    BehaviorVae(const VaeConfig& config, ActionBox box, Rng& rng);
    BehaviorVae(const VaeConfig& config, ActionBox box, ParamSet<double> params);

    const VaeConfig& config() const { return config_; }
    const ActionBox& box() const { return box_; }
    ParamSet<double>& params() { return params_; }
    const ParamSet<double>& params() const { return params_; }

    Posterior encode(const Matrix& states, const Matrix& actions) const;
    /// Latents are clipped to [-c, c] before decoding.
    Matrix decode(const Matrix& states, const Matrix& latents) const;
    /// z ~ N(0, I) clipped, then decoded; one action per state column.
    Matrix sample(const Matrix& states, Rng& rng) const;

    /// Loss with the reparameterization noise supplied (L x B), so that the
    /// value is a deterministic function of the parameters.
    VaeLossParts loss(const Matrix& states, const Matrix& actions, const Matrix& noise, GradSet<double>* grads) const;
    VaeLossParts loss(const Matrix& states, const Matrix& actions, Rng& rng, GradSet<double>* grads) const;

private:
    Matrix decode_unclipped(const Matrix& states, const Matrix& latents, MlpTape<double>* tape) const;
    void check_shapes() const;

    VaeConfig config_;
    ActionBox box_;
    ParamSet<double> params_;
};

}  // namespace oraac
