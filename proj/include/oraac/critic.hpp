#pragma once

// Implicit quantile critic for continuous actions:
//
//   Z(s, a; tau) = f( m_sa([psi_s(s), psi_a(a)]) * psi_tau(tau) )
//
// where * is the elementwise product and psi_tau embeds tau through the
// cosine basis cos(pi i tau), i = 1..n, followed by a linear layer and relu.
// Values are computed for every (sample, level) pair with the state-action
// trunk evaluated once per sample.

#include <vector>

#include <json.hpp>

#include "oraac/diffcore.hpp"
#include "oraac/transition.hpp"

namespace oraac {

struct CriticConfig {
    Index state_dim = 2;
    Index action_dim = 1;
    Index embed_width = 64;   // d: width of psi_s and psi_a
    Index merge_width = 16;   // n: m_sa output width and cosine basis size
    Index head_hidden = 32;
    double kappa = 1.0;
    Index n_quantiles = 32;         // N
    Index n_target_quantiles = 32;  // N'
    double gamma = 0.99;

    void validate() const;
};

nlohmann::json to_json(const CriticConfig& config);
CriticConfig critic_config_from_json(const nlohmann::json& doc, CriticConfig defaults = {});

/// [cos(pi * i * tau)] for i = 1..n.
Vector cosine_embedding(double tau, Index n);
/// Column k holds cosine_embedding(taus[k], n).
Matrix cosine_features(const Vector& taus, Index n);

struct CriticTape {
    MlpTape<double> state;
    MlpTape<double> action;
    MlpTape<double> merge;
    MlpTape<double> tau;
    MlpTape<double> head;
    Index batch = 0;
    Index levels = 0;
};

class QuantileCritic {
public:
    enum Net : std::size_t { kState = 0, kAction, kMerge, kTau, kHead };

    QuantileCritic() = default;
    QuantileCritic(const CriticConfig& config, Rng& rng);
    QuantileCritic(const CriticConfig& config, ParamSet<double> params);

    const CriticConfig& config() const { return config_; }
    ParamSet<double>& params() { return params_; }
    const ParamSet<double>& params() const { return params_; }

    /// Quantile values, one row per level and one column per sample (N x B).
    Matrix values(const Matrix& states, const Matrix& actions, const Vector& taus, CriticTape* tape = nullptr) const;

    /// Accumulates parameter gradients of <upstream, values> into `grads` when
    /// non-null; returns the gradient with respect to the actions (action_dim x B).
    Matrix backward(const CriticTape& tape, const Matrix& upstream, GradSet<double>* grads) const;

    double quantile_value(const Vector& state, const Vector& action, double tau) const;

private:
    void check_shapes() const;

    CriticConfig config_;
    ParamSet<double> params_;
};

/// |tau - 1{delta < 0}| * H_kappa(delta).
double quantile_huber_loss(double delta, double tau, double kappa);
/// Derivative of quantile_huber_loss with respect to delta.
double quantile_huber_grad(double delta, double tau, double kappa);

/// delta(i, j) = r + gamma (1 - done) Z_target(s', a'; tau'_j) - Z(s, a; tau_i),
/// one N x N' matrix per transition.
std::vector<Matrix> td_errors(const QuantileCritic& critic, const QuantileCritic& target,
                              const TransitionBatch& batch, const Matrix& next_actions, const Vector& taus,
                              const Vector& target_taus);

/// Batch mean of (1 / (N N')) sum_ij quantile_huber_loss(delta_ij; tau_i).
/// Gradients (online critic only) are accumulated into `grads` when non-null.
double critic_loss(const QuantileCritic& critic, const QuantileCritic& target, const TransitionBatch& batch,
                   const Matrix& next_actions, const Vector& taus, const Vector& target_taus,
                   GradSet<double>* grads);

/// Same, drawing N and N' levels from Uniform(0, 1).
double critic_loss(const QuantileCritic& critic, const QuantileCritic& target, const TransitionBatch& batch,
                   const Matrix& next_actions, Rng& rng, GradSet<double>* grads);

}  // namespace oraac
