#include "oraac/vae.hpp"

#include <algorithm>
#include <cmath>

namespace oraac {

void VaeConfig::validate() const
{
    if (state_dim < 1 || action_dim < 1)
        throw ConfigError("vae: state and action dimensions must be positive");
    if (latent_dim < 0)
        throw ConfigError("vae: latent dimension must be nonnegative");
    if (hidden.empty())
        throw ConfigError("vae: at least one hidden layer is required");
    for (Index h : hidden)
        if (h < 1)
            throw ConfigError("vae: hidden widths must be positive");
    if (!(latent_clip > 0.0))
        throw ConfigError("vae: latent clip bound must be positive");
    if (!(log_sigma_min < log_sigma_max))
        throw ConfigError("vae: empty log-sigma range");
}

nlohmann::json to_json(const VaeConfig& c)
{
    return {{"state_dim", c.state_dim},       {"action_dim", c.action_dim},
            {"latent_dim", c.latent()},       {"hidden", c.hidden},
            {"latent_clip", c.latent_clip},   {"log_sigma_min", c.log_sigma_min},
            {"log_sigma_max", c.log_sigma_max}};
}

VaeConfig vae_config_from_json(const nlohmann::json& doc, VaeConfig c)
{
    c.state_dim = doc.value("state_dim", c.state_dim);
    c.action_dim = doc.value("action_dim", c.action_dim);
    c.latent_dim = doc.value("latent_dim", c.latent_dim);
    if (doc.contains("hidden"))
        c.hidden = doc.at("hidden").get<std::vector<Index>>();
    c.latent_clip = doc.value("latent_clip", c.latent_clip);
    c.log_sigma_min = doc.value("log_sigma_min", c.log_sigma_min);
    c.log_sigma_max = doc.value("log_sigma_max", c.log_sigma_max);
    c.validate();
    return c;
}

Vector gaussian_kl(const Matrix& mu, const Matrix& sigma)
{
    const Matrix var = sigma.array().square().matrix();
    return 0.5 * (mu.array().square() + var.array() - var.array().log() - 1.0).colwise().sum().transpose();
}

Matrix reparam_sample(const Matrix& mu, const Matrix& sigma, Rng& rng)
{
    Matrix z(mu.rows(), mu.cols());
    for (Index j = 0; j < z.cols(); ++j)
        for (Index i = 0; i < z.rows(); ++i)
            z(i, j) = mu(i, j) + sigma(i, j) * standard_normal(rng);
    return z;
}

namespace {

std::vector<Index> widths(Index in, const std::vector<Index>& hidden, Index out)
{
    std::vector<Index> w{in};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(out);
    return w;
}

Matrix stack(const Matrix& top, const Matrix& bottom)
{
    Matrix out(top.rows() + bottom.rows(), top.cols());
    out << top, bottom;
    return out;
}

}  // namespace

BehaviorVae::BehaviorVae(const VaeConfig& config, ActionBox box, Rng& rng) : config_(config), box_(std::move(box))
{
    config_.validate();
    if (box_.dim() != config_.action_dim)
        throw ConfigError("vae: action box dimension mismatch");
    const Index latent = config_.latent();
    const auto enc = widths(config_.state_dim + config_.action_dim, config_.hidden, 2 * latent);
    const auto dec = widths(config_.state_dim + latent, config_.hidden, config_.action_dim);
    params_.add("encoder", Mlp<double>::random(std::span<const Index>(enc), Activation::relu, Activation::identity, rng));
    params_.add("decoder", Mlp<double>::random(std::span<const Index>(dec), Activation::relu, Activation::tanh, rng));
}

BehaviorVae::BehaviorVae(const VaeConfig& config, ActionBox box, ParamSet<double> params)
    : config_(config), box_(std::move(box)), params_(std::move(params))
{
    config_.validate();
    check_shapes();
}

void BehaviorVae::check_shapes() const
{
    const Index latent = config_.latent();
    if (params_.size() != 2 || params_.net(kEncoder).input_width() != config_.state_dim + config_.action_dim ||
        params_.net(kEncoder).output_width() != 2 * latent ||
        params_.net(kDecoder).input_width() != config_.state_dim + latent ||
        params_.net(kDecoder).output_width() != config_.action_dim)
        throw ConfigError("vae: network shapes do not match the configuration");
    if (box_.dim() != config_.action_dim)
        throw ConfigError("vae: action box dimension mismatch");
}

Posterior BehaviorVae::encode(const Matrix& states, const Matrix& actions) const
{
    if (states.rows() != config_.state_dim || actions.rows() != config_.action_dim || states.cols() != actions.cols())
        throw ConfigError("vae encode: dimension mismatch");
    const Index latent = config_.latent();
    const Matrix out = params_.net(kEncoder).forward(stack(states, actions));
    Posterior post;
    post.mu = out.topRows(latent);
    post.sigma = out.bottomRows(latent).cwiseMax(config_.log_sigma_min).cwiseMin(config_.log_sigma_max).array().exp();
    return post;
}

Matrix BehaviorVae::decode_unclipped(const Matrix& states, const Matrix& latents, MlpTape<double>* tape) const
{
    if (states.rows() != config_.state_dim || latents.rows() != config_.latent() || states.cols() != latents.cols())
        throw ConfigError("vae decode: dimension mismatch");
    const Matrix squashed = params_.net(kDecoder).forward(stack(states, latents), tape);
    return (squashed.array().colwise() * box_.half_range().array()).colwise() + box_.center().array();
}

Matrix BehaviorVae::decode(const Matrix& states, const Matrix& latents) const
{
    const double c = config_.latent_clip;
    return decode_unclipped(states, latents.cwiseMax(-c).cwiseMin(c), nullptr);
}

Matrix BehaviorVae::sample(const Matrix& states, Rng& rng) const
{
    Matrix z(config_.latent(), states.cols());
    for (Index j = 0; j < z.cols(); ++j)
        for (Index i = 0; i < z.rows(); ++i)
            z(i, j) = standard_normal(rng);
    return decode(states, z);
}

VaeLossParts BehaviorVae::loss(const Matrix& states, const Matrix& actions, const Matrix& noise,
                               GradSet<double>* grads) const
{
    const Index batch = states.cols();
    if (batch == 0)
        throw UsageError("vae loss: empty batch");
    if (states.rows() != config_.state_dim || actions.rows() != config_.action_dim || actions.cols() != batch)
        throw ConfigError("vae loss: dimension mismatch");
    const Index latent = config_.latent();
    if (noise.rows() != latent || noise.cols() != batch)
        throw ConfigError("vae loss: noise must be latent_dim x batch");
    if (grads && !grads->congruent(params_))
        throw ConfigError("vae loss: gradient buffer is not congruent");

    MlpTape<double> enc_tape;
    MlpTape<double> dec_tape;
    const Matrix enc_out = params_.net(kEncoder).forward(stack(states, actions), grads ? &enc_tape : nullptr);
    const Matrix mu = enc_out.topRows(latent);
    const Matrix raw_log_sigma = enc_out.bottomRows(latent);
    const Matrix log_sigma = raw_log_sigma.cwiseMax(config_.log_sigma_min).cwiseMin(config_.log_sigma_max);
    const Matrix sigma = log_sigma.array().exp();
    const Matrix z = mu + sigma.cwiseProduct(noise);
    const Matrix recon = decode_unclipped(states, z, grads ? &dec_tape : nullptr);

    const Matrix err = actions - recon;
    const Vector kl = gaussian_kl(mu, sigma);
    const double inv_b = 1.0 / static_cast<double>(batch);

    VaeLossParts parts;
    parts.reconstruction = err.squaredNorm() * inv_b;
    parts.kl = kl.sum() * inv_b;
    parts.total = parts.reconstruction + 0.5 * parts.kl;

    if (grads) {
        // d/d recon, then through the affine output scaling.
        const Matrix g_recon = -2.0 * inv_b * err;
        const Matrix g_squashed = g_recon.array().colwise() * box_.half_range().array();
        const Matrix g_dec_in = params_.net(kDecoder).backward(dec_tape, g_squashed, &grads->net(kDecoder));
        const Matrix g_z = g_dec_in.bottomRows(latent);

        // 0.5 * KL / B with KL = 0.5 sum(mu^2 + sigma^2 - 2 log sigma - 1).
        const Matrix g_mu = g_z + 0.5 * inv_b * mu;
        Matrix g_log_sigma = g_z.cwiseProduct(noise).cwiseProduct(sigma) +
                             0.5 * inv_b * (sigma.array().square() - 1.0).matrix();
        g_log_sigma = (raw_log_sigma.array() >= config_.log_sigma_min && raw_log_sigma.array() <= config_.log_sigma_max)
                          .select(g_log_sigma, 0.0);
        Matrix g_enc(2 * latent, batch);
        g_enc << g_mu, g_log_sigma;
        params_.net(kEncoder).backward(enc_tape, g_enc, &grads->net(kEncoder));
    }
    return parts;
}

VaeLossParts BehaviorVae::loss(const Matrix& states, const Matrix& actions, Rng& rng, GradSet<double>* grads) const
{
    Matrix noise(config_.latent(), states.cols());
    for (Index j = 0; j < noise.cols(); ++j)
        for (Index i = 0; i < noise.rows(); ++i)
            noise(i, j) = standard_normal(rng);
    return loss(states, actions, noise, grads);
}

}  // namespace oraac
