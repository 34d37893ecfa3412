#include "oraac/critic.hpp"

#include <cmath>
#include <numbers>

namespace oraac {

void CriticConfig::validate() const
{
    if (state_dim < 1 || action_dim < 1)
        throw ConfigError("critic: state and action dimensions must be positive");
    if (embed_width < 1 || merge_width < 1 || head_hidden < 1)
        throw ConfigError("critic: layer widths must be positive");
    if (n_quantiles < 1 || n_target_quantiles < 1)
        throw ConfigError("critic: N and N' must be at least 1");
    if (!(kappa > 0.0))
        throw ConfigError("critic: kappa must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw ConfigError("critic: gamma must lie in [0, 1)");
}

nlohmann::json to_json(const CriticConfig& c)
{
    return {{"state_dim", c.state_dim},
            {"action_dim", c.action_dim},
            {"embed_width", c.embed_width},
            {"merge_width", c.merge_width},
            {"head_hidden", c.head_hidden},
            {"kappa", c.kappa},
            {"n_quantiles", c.n_quantiles},
            {"n_target_quantiles", c.n_target_quantiles},
            {"gamma", c.gamma}};
}

CriticConfig critic_config_from_json(const nlohmann::json& doc, CriticConfig c)
{
    c.state_dim = doc.value("state_dim", c.state_dim);
    c.action_dim = doc.value("action_dim", c.action_dim);
    c.embed_width = doc.value("embed_width", c.embed_width);
    c.merge_width = doc.value("merge_width", c.merge_width);
    c.head_hidden = doc.value("head_hidden", c.head_hidden);
    c.kappa = doc.value("kappa", c.kappa);
    c.n_quantiles = doc.value("n_quantiles", c.n_quantiles);
    c.n_target_quantiles = doc.value("n_target_quantiles", c.n_target_quantiles);
    c.gamma = doc.value("gamma", c.gamma);
    c.validate();
    return c;
}

Vector cosine_embedding(double tau, Index n)
{
    if (!(tau >= 0.0 && tau <= 1.0))
        throw UsageError("cosine_embedding: tau must lie in [0, 1]");
    Vector out(n);
    for (Index i = 0; i < n; ++i)
        out(i) = std::cos(std::numbers::pi * static_cast<double>(i + 1) * tau);
    return out;
}

Matrix cosine_features(const Vector& taus, Index n)
{
    Matrix out(n, taus.size());
    for (Index k = 0; k < taus.size(); ++k)
        out.col(k) = cosine_embedding(taus(k), n);
    return out;
}

QuantileCritic::QuantileCritic(const CriticConfig& config, Rng& rng) : config_(config)
{
    config_.validate();
    const Index d = config_.embed_width;
    const Index n = config_.merge_width;
    params_.add("psi_s", Mlp<double>::random({config_.state_dim, d, d}, Activation::relu, Activation::relu, rng));
    params_.add("psi_a", Mlp<double>::random({config_.action_dim, d, d}, Activation::relu, Activation::relu, rng));
    params_.add("m_sa", Mlp<double>::random({2 * d, n, n}, Activation::relu, Activation::relu, rng));
    params_.add("psi_tau", Mlp<double>::random({n, n}, Activation::relu, Activation::relu, rng));
    params_.add("head", Mlp<double>::random({n, config_.head_hidden, 1}, Activation::relu, Activation::identity, rng));
}

QuantileCritic::QuantileCritic(const CriticConfig& config, ParamSet<double> params)
    : config_(config), params_(std::move(params))
{
    config_.validate();
    check_shapes();
}

void QuantileCritic::check_shapes() const
{
    if (params_.size() != 5)
        throw ConfigError("critic: expected five networks");
    const Index d = config_.embed_width;
    const Index n = config_.merge_width;
    const auto& s = params_.net(kState);
    const auto& a = params_.net(kAction);
    const auto& m = params_.net(kMerge);
    const auto& t = params_.net(kTau);
    const auto& f = params_.net(kHead);
    if (s.input_width() != config_.state_dim || s.output_width() != d || a.input_width() != config_.action_dim ||
        a.output_width() != d || m.input_width() != 2 * d || m.output_width() != n || t.input_width() != n ||
        t.output_width() != n || f.input_width() != n || f.output_width() != 1)
        throw ConfigError("critic: network shapes do not match the configuration");
}

Matrix QuantileCritic::values(const Matrix& states, const Matrix& actions, const Vector& taus, CriticTape* tape) const
{
    if (states.rows() != config_.state_dim || actions.rows() != config_.action_dim)
        throw ConfigError("critic: state or action dimension mismatch");
    if (states.cols() != actions.cols())
        throw ConfigError("critic: state and action batch sizes differ");
    const Index batch = states.cols();
    const Index levels = taus.size();
    const Index n = config_.merge_width;

    MlpTape<double>* ts = tape ? &tape->state : nullptr;
    MlpTape<double>* ta = tape ? &tape->action : nullptr;
    MlpTape<double>* tm = tape ? &tape->merge : nullptr;
    MlpTape<double>* tt = tape ? &tape->tau : nullptr;
    MlpTape<double>* th = tape ? &tape->head : nullptr;

    Matrix joint(2 * config_.embed_width, batch);
    joint.topRows(config_.embed_width) = params_.net(kState).forward(states, ts);
    joint.bottomRows(config_.embed_width) = params_.net(kAction).forward(actions, ta);
    const Matrix trunk = params_.net(kMerge).forward(joint, tm);
    const Matrix embed = params_.net(kTau).forward(cosine_features(taus, n), tt);

    Matrix product(n, batch * levels);
    for (Index b = 0; b < batch; ++b)
        product.middleCols(b * levels, levels) = embed.array().colwise() * trunk.col(b).array();

    const Matrix out = params_.net(kHead).forward(product, th);
    if (tape) {
        tape->batch = batch;
        tape->levels = levels;
    }
    return Eigen::Map<const Matrix>(out.data(), levels, batch);
}

Matrix QuantileCritic::backward(const CriticTape& tape, const Matrix& upstream, GradSet<double>* grads) const
{
    if (tape.head.empty())
        throw UsageError("critic backward called without a taped forward pass");
    if (upstream.rows() != tape.levels || upstream.cols() != tape.batch)
        throw ConfigError("critic backward: upstream shape does not match the taped values");
    if (grads && !grads->congruent(params_))
        throw ConfigError("critic backward: gradient buffer is not congruent");

    const Index batch = tape.batch;
    const Index levels = tape.levels;
    const Index d = config_.embed_width;
    auto slot = [&](Net k) { return grads ? &grads->net(k) : nullptr; };

    const Eigen::Map<const Matrix> flat(upstream.data(), 1, batch * levels);
    const Matrix g_product = params_.net(kHead).backward(tape.head, flat, slot(kHead));

    const Matrix& trunk = tape.merge.output();
    const Matrix& embed = tape.tau.output();
    Matrix g_trunk(trunk.rows(), batch);
    Matrix g_embed = Matrix::Zero(embed.rows(), levels);
    for (Index b = 0; b < batch; ++b) {
        const auto block = g_product.middleCols(b * levels, levels);
        g_trunk.col(b) = block.cwiseProduct(embed).rowwise().sum();
        g_embed.array() += block.array().colwise() * trunk.col(b).array();
    }
    if (grads)
        params_.net(kTau).backward(tape.tau, g_embed, slot(kTau));

    const Matrix g_joint = params_.net(kMerge).backward(tape.merge, g_trunk, slot(kMerge));
    if (grads)
        params_.net(kState).backward(tape.state, g_joint.topRows(d), slot(kState));
    return params_.net(kAction).backward(tape.action, g_joint.bottomRows(d), slot(kAction));
}

double QuantileCritic::quantile_value(const Vector& state, const Vector& action, double tau) const
{
    Vector taus(1);
    taus(0) = tau;
    return values(state, action, taus)(0, 0);
}

double quantile_huber_loss(double delta, double tau, double kappa)
{
    const double weight = std::abs(tau - (delta < 0.0 ? 1.0 : 0.0));
    const double mag = std::abs(delta);
    const double huber = mag <= kappa ? delta * delta / (2.0 * kappa) : mag - 0.5 * kappa;
    return weight * huber;
}

double quantile_huber_grad(double delta, double tau, double kappa)
{
    const double weight = std::abs(tau - (delta < 0.0 ? 1.0 : 0.0));
    const double slope = std::abs(delta) <= kappa ? delta / kappa : (delta > 0.0 ? 1.0 : -1.0);
    return weight * slope;
}

namespace {

struct TdParts {
    Matrix online;   // N x B
    Matrix targets;  // N' x B, already r + gamma (1 - done) Z'
};

TdParts td_parts(const QuantileCritic& critic, const QuantileCritic& target, const TransitionBatch& batch,
                 const Matrix& next_actions, const Vector& taus, const Vector& target_taus, CriticTape* tape)
{
    if (batch.size() == 0)
        throw UsageError("critic loss: empty batch");
    if (next_actions.cols() != batch.size())
        throw ConfigError("critic loss: one next action per transition is required");
    const double gamma = critic.config().gamma;
    TdParts parts;
    parts.online = critic.values(batch.states, batch.actions, taus, tape);
    parts.targets = target.values(batch.next_states, next_actions, target_taus);
    for (Index b = 0; b < batch.size(); ++b) {
        const double scale = gamma * (1.0 - batch.dones(b));
        parts.targets.col(b) = (scale * parts.targets.col(b)).array() + batch.rewards(b);
    }
    return parts;
}

}  // namespace

std::vector<Matrix> td_errors(const QuantileCritic& critic, const QuantileCritic& target,
                              const TransitionBatch& batch, const Matrix& next_actions, const Vector& taus,
                              const Vector& target_taus)
{
    const TdParts parts = td_parts(critic, target, batch, next_actions, taus, target_taus, nullptr);
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(batch.size()));
    for (Index b = 0; b < batch.size(); ++b) {
        Matrix delta(taus.size(), target_taus.size());
        for (Index j = 0; j < target_taus.size(); ++j)
            delta.col(j) = parts.targets(j, b) - parts.online.col(b).array();
        out.push_back(std::move(delta));
    }
    return out;
}

double critic_loss(const QuantileCritic& critic, const QuantileCritic& target, const TransitionBatch& batch,
                   const Matrix& next_actions, const Vector& taus, const Vector& target_taus,
                   GradSet<double>* grads)
{
    CriticTape tape;
    const TdParts parts = td_parts(critic, target, batch, next_actions, taus, target_taus, grads ? &tape : nullptr);
    const double kappa = critic.config().kappa;
    const Index n = taus.size();
    const Index n_target = target_taus.size();
    const double norm = 1.0 / (static_cast<double>(batch.size()) * static_cast<double>(n * n_target));

    double loss = 0.0;
    Matrix upstream = Matrix::Zero(n, batch.size());
    for (Index b = 0; b < batch.size(); ++b)
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n_target; ++j) {
                const double delta = parts.targets(j, b) - parts.online(i, b);
                loss += quantile_huber_loss(delta, taus(i), kappa);
                // d delta / d Z_online = -1
                upstream(i, b) -= quantile_huber_grad(delta, taus(i), kappa);
            }
    if (grads)
        critic.backward(tape, upstream * norm, grads);
    return loss * norm;
}

double critic_loss(const QuantileCritic& critic, const QuantileCritic& target, const TransitionBatch& batch,
                   const Matrix& next_actions, Rng& rng, GradSet<double>* grads)
{
    Vector taus(critic.config().n_quantiles);
    for (Index i = 0; i < taus.size(); ++i)
        taus(i) = uniform01(rng);
    Vector target_taus(critic.config().n_target_quantiles);
    for (Index j = 0; j < target_taus.size(); ++j)
        target_taus(j) = uniform01(rng);
    return critic_loss(critic, target, batch, next_actions, taus, target_taus, grads);
}

}  // namespace oraac
