#include "oraac/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "oraac/logging.hpp"
#include "oraac/param_io.hpp"

namespace oraac {

std::string to_string(TrainMode mode)
{
    switch (mode) {
    case TrainMode::raac: return "raac";
    case TrainMode::vae_only: return "vae_only";
    default: return "oraac";
    }
}

TrainMode train_mode_from_string(const std::string& name)
{
    if (name == "oraac")
        return TrainMode::oraac;
    if (name == "raac")
        return TrainMode::raac;
    if (name == "vae_only")
        return TrainMode::vae_only;
    throw ConfigError("unknown training mode '" + name + "'");
}

void TrainerConfig::validate() const
{
    distortion.validate();
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw ConfigError("lambda must lie in [0, 1]");
    if (batch_size < 1)
        throw ConfigError("batch_size must be at least 1");
    if (!(critic_lr > 0.0 && actor_lr > 0.0 && vae_lr > 0.0))
        throw ConfigError("learning rates must be positive");
    if (!(soft_update >= 0.0 && soft_update <= 1.0))
        throw ConfigError("soft_update must lie in [0, 1]");
    if (n_quantiles < 1 || n_target_quantiles < 1 || k_samples < 1)
        throw ConfigError("quantile sample counts must be at least 1");
    if (!(kappa > 0.0))
        throw ConfigError("kappa must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw ConfigError("gamma must lie in [0, 1)");
    if (!(reward_scale > 0.0))
        throw ConfigError("reward_scale must be positive");
    if (total_steps < 0 || vae_pretrain_steps < 0)
        throw ConfigError("step counts must be nonnegative");
    if (eval_interval < 1)
        throw ConfigError("eval_interval must be at least 1");
    if (eval_episodes < 1)
        throw ConfigError("eval_episodes must be at least 1");
    if (!(eval_alpha > 0.0 && eval_alpha <= 1.0))
        throw ConfigError("eval_alpha must lie in (0, 1]");
    if (online.warmup_episodes < 0 || online.episodes_per_block < 0 || online.steps_per_block < 1)
        throw ConfigError("online schedule counts are invalid");
    if (!(online.noise_theta > 0.0 && online.noise_theta <= 1.0))
        throw ConfigError("online.noise_theta must be in (0, 1]");
    if (online.buffer_capacity < 0)
        throw ConfigError("online.buffer_capacity must be nonnegative");
    if (!(online.exploration_noise >= 0.0))
        throw ConfigError("exploration noise must be nonnegative");
    if (!env.is_object())
        throw ConfigError("env must be an object");
}

nlohmann::json to_json(const TrainerConfig& c)
{
    return {{"mode", to_string(c.mode)},
            {"distortion", to_json(c.distortion)},
            {"lambda", c.lambda},
            {"batch_size", c.batch_size},
            {"critic_lr", c.critic_lr},
            {"actor_lr", c.actor_lr},
            {"vae_lr", c.vae_lr},
            {"soft_update", c.soft_update},
            {"n_quantiles", c.n_quantiles},
            {"n_target_quantiles", c.n_target_quantiles},
            {"k_samples", c.k_samples},
            {"kappa", c.kappa},
            {"gamma", c.gamma},
            {"reward_scale", c.reward_scale},
            {"total_steps", c.total_steps},
            {"eval_interval", c.eval_interval},
            {"eval_episodes", c.eval_episodes},
            {"eval_alpha", c.eval_alpha},
            {"seed", c.seed},
            {"early_stop", c.early_stop},
            {"zero_latent_eval", c.zero_latent_eval},
            {"vae_pretrain_steps", c.vae_pretrain_steps},
            {"critic_embed", c.critic_embed},
            {"critic_merge", c.critic_merge},
            {"critic_head", c.critic_head},
            {"actor_hidden", c.actor_hidden},
            {"vae_hidden", c.vae_hidden},
            {"latent_dim", c.latent_dim},
            {"latent_clip", c.latent_clip},
            {"env", c.env},
            {"online",
             {{"warmup_episodes", c.online.warmup_episodes},
              {"episodes_per_block", c.online.episodes_per_block},
              {"steps_per_block", c.online.steps_per_block},
              {"exploration_noise", c.online.exploration_noise},
              {"noise_theta", c.online.noise_theta},
              {"buffer_capacity", c.online.buffer_capacity}}}};
}

TrainerConfig trainer_config_from_json(const nlohmann::json& doc)
{
    if (!doc.is_object())
        throw ConfigError("run configuration must be a JSON object");
    TrainerConfig c;
    const nlohmann::json defaults = to_json(c);
    for (const auto& [key, value] : doc.items())
        if (!defaults.contains(key))
            throw ConfigError("unknown configuration field '" + key + "'");
    try {
        if (doc.contains("mode"))
            c.mode = train_mode_from_string(doc.at("mode").get<std::string>());
        if (doc.contains("distortion"))
            c.distortion = distortion_from_json(doc.at("distortion"));
        c.lambda = doc.value("lambda", c.lambda);
        c.batch_size = doc.value("batch_size", c.batch_size);
        c.critic_lr = doc.value("critic_lr", c.critic_lr);
        c.actor_lr = doc.value("actor_lr", c.actor_lr);
        c.vae_lr = doc.value("vae_lr", c.vae_lr);
        c.soft_update = doc.value("soft_update", c.soft_update);
        c.n_quantiles = doc.value("n_quantiles", c.n_quantiles);
        c.n_target_quantiles = doc.value("n_target_quantiles", c.n_target_quantiles);
        c.k_samples = doc.value("k_samples", c.k_samples);
        c.kappa = doc.value("kappa", c.kappa);
        c.gamma = doc.value("gamma", c.gamma);
        c.reward_scale = doc.value("reward_scale", c.reward_scale);
        c.total_steps = doc.value("total_steps", c.total_steps);
        c.eval_interval = doc.value("eval_interval", c.eval_interval);
        c.eval_episodes = doc.value("eval_episodes", c.eval_episodes);
        c.eval_alpha = doc.value("eval_alpha", c.eval_alpha);
        c.seed = doc.value("seed", c.seed);
        c.early_stop = doc.value("early_stop", c.early_stop);
        c.zero_latent_eval = doc.value("zero_latent_eval", c.zero_latent_eval);
        c.vae_pretrain_steps = doc.value("vae_pretrain_steps", c.vae_pretrain_steps);
        c.critic_embed = doc.value("critic_embed", c.critic_embed);
        c.critic_merge = doc.value("critic_merge", c.critic_merge);
        c.critic_head = doc.value("critic_head", c.critic_head);
        c.actor_hidden = doc.value("actor_hidden", c.actor_hidden);
        c.vae_hidden = doc.value("vae_hidden", c.vae_hidden);
        c.latent_dim = doc.value("latent_dim", c.latent_dim);
        c.latent_clip = doc.value("latent_clip", c.latent_clip);
        if (doc.contains("env"))
            c.env = doc.at("env");
        if (doc.contains("online")) {
            const auto& o = doc.at("online");
            c.online.warmup_episodes = o.value("warmup_episodes", c.online.warmup_episodes);
            c.online.episodes_per_block = o.value("episodes_per_block", c.online.episodes_per_block);
            c.online.steps_per_block = o.value("steps_per_block", c.online.steps_per_block);
            c.online.exploration_noise = o.value("exploration_noise", c.online.exploration_noise);
            c.online.noise_theta = o.value("noise_theta", c.online.noise_theta);
            c.online.buffer_capacity = o.value("buffer_capacity", c.online.buffer_capacity);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed run configuration: ") + e.what());
    }
    if (c.mode == TrainMode::raac)
        c.lambda = 1.0;
    c.validate();
    return c;
}

TrainerConfig load_trainer_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open configuration '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("configuration '" + path + "' is not valid JSON: " + e.what());
    }
    return trainer_config_from_json(doc);
}

std::uint64_t config_hash(const TrainerConfig& config) { return fnv1a(to_json(config).dump()); }

TrainerStreams TrainerStreams::from_seed(std::uint64_t seed)
{
    return {make_stream(seed, "minibatch"), make_stream(seed, "quantiles"), make_stream(seed, "latent"),
            make_stream(seed, "explore")};
}

namespace {

CriticConfig critic_config(const TrainerConfig& c, const Environment& env)
{
    CriticConfig cc;
    cc.state_dim = env.state_dim();
    cc.action_dim = env.action_dim();
    cc.embed_width = c.critic_embed;
    cc.merge_width = c.critic_merge;
    cc.head_hidden = c.critic_head;
    cc.kappa = c.kappa;
    cc.n_quantiles = c.n_quantiles;
    cc.n_target_quantiles = c.n_target_quantiles;
    cc.gamma = c.gamma;
    return cc;
}

PolicyConfig policy_config(const TrainerConfig& c, const Environment& env)
{
    PolicyConfig pc;
    pc.state_dim = env.state_dim();
    pc.action_dim = env.action_dim();
    pc.hidden = c.actor_hidden;
    pc.mode = c.mode == TrainMode::raac ? PolicyMode::raac : PolicyMode::oraac;
    pc.lambda = c.mode == TrainMode::raac ? 1.0 : c.lambda;
    return pc;
}

VaeConfig vae_config(const TrainerConfig& c, const Environment& env)
{
    VaeConfig vc;
    vc.state_dim = env.state_dim();
    vc.action_dim = env.action_dim();
    vc.hidden = c.vae_hidden;
    vc.latent_dim = c.latent_dim;
    vc.latent_clip = c.latent_clip;
    return vc;
}

}  // namespace

TrainerState TrainerState::initialize(const TrainerConfig& config, const Environment& env)
{
    config.validate();
    TrainerState s;
    s.config = config;
    Rng init = make_stream(config.seed, "init");
    s.critic = QuantileCritic(critic_config(config, env), init);
    s.critic_target = s.critic;
    s.vae = BehaviorVae(vae_config(config, env), env.action_box(), init);
    s.policy = PerturbationPolicy(policy_config(config, env), env.action_box(), init);
    s.policy_target = s.policy;
    s.critic_opt = AdamState<double>(s.critic.params(), {config.critic_lr});
    s.actor_opt = AdamState<double>(s.policy.params(), {config.actor_lr});
    s.vae_opt = AdamState<double>(s.vae.params(), {config.vae_lr});
    s.streams = TrainerStreams::from_seed(config.seed);
    return s;
}

PolicySnapshot PolicySnapshot::of(const TrainerState& state)
{
    return {state.config.mode, state.policy, state.vae, state.config.zero_latent_eval};
}

ActionSource PolicySnapshot::action_source() const
{
    auto snap = std::make_shared<const PolicySnapshot>(*this);
    return [snap](const Vector& s, Rng& rng) -> Vector {
        switch (snap->mode) {
        case TrainMode::vae_only: {
            const Matrix state = s;
            if (snap->zero_latent)
                return snap->vae.decode(state, Matrix::Zero(snap->vae.config().latent(), 1)).col(0);
            return snap->vae.sample(state, rng).col(0);
        }
        case TrainMode::raac: return eval_action(snap->policy, nullptr, s, rng);
        default: return eval_action(snap->policy, &snap->vae, s, rng, snap->zero_latent);
        }
    };
}

namespace {

bool finite(double x) { return std::isfinite(x); }

/// One VAE update on a fresh minibatch (pre-training).
void vae_only_step(TrainerState& state, const OfflineDataset& dataset)
{
    TransitionBatch batch = sample_minibatch(dataset, state.config.batch_size, state.streams.minibatch);
    GradSet<double> g = GradSet<double>::zeros_like(state.vae.params());
    const double loss = state.vae.loss(batch.states, batch.actions, state.streams.latent, &g).total;
    if (!finite(loss))
        throw NumericError("VAE pre-training: nonfinite loss");
    adam_step(state.vae.params(), g, state.vae_opt);
}

}  // namespace

StepDiagnostics train_step(TrainerState& state, const OfflineDataset& dataset)
{
    if (dataset.empty())
        throw UsageError("train_step: empty dataset");
    const TrainerConfig& cfg = state.config;
    const bool use_vae = cfg.mode != TrainMode::raac;
    const bool use_actor_critic = cfg.mode != TrainMode::vae_only;

    TransitionBatch batch = sample_minibatch(dataset, cfg.batch_size, state.streams.minibatch);
    if (cfg.reward_scale != 1.0)
        batch.rewards *= cfg.reward_scale;

    StepDiagnostics diag;
    diag.step = state.step;
    GradSet<double> critic_grads;
    GradSet<double> actor_grads;
    GradSet<double> vae_grads;

    if (use_actor_critic) {
        const BehaviorVae* vae = use_vae ? &state.vae : nullptr;
        Matrix next_behavior;
        if (vae)
            next_behavior = vae->sample(batch.next_states, state.streams.latent);
        const Matrix next_actions = state.policy_target.act(batch.next_states, next_behavior);
        critic_grads = GradSet<double>::zeros_like(state.critic.params());
        diag.critic_loss = critic_loss(state.critic, state.critic_target, batch, next_actions,
                                       state.streams.quantiles, &critic_grads);

        actor_grads = GradSet<double>::zeros_like(state.policy.params());
        diag.actor_loss = actor_loss(state.policy, vae, state.critic, batch.states, cfg.distortion, cfg.k_samples,
                                     state.streams.quantiles, &actor_grads);
    }
    if (use_vae) {
        vae_grads = GradSet<double>::zeros_like(state.vae.params());
        diag.vae_loss = state.vae.loss(batch.states, batch.actions, state.streams.latent, &vae_grads).total;
    }

    const auto bad = [&](double loss, const GradSet<double>& g) { return !finite(loss) || !g.all_finite(); };
    if ((use_actor_critic && (bad(diag.critic_loss, critic_grads) || bad(diag.actor_loss, actor_grads))) ||
        (use_vae && bad(diag.vae_loss, vae_grads)))
        throw NumericError("train_step " + std::to_string(state.step) + ": nonfinite loss or gradient, step aborted");

    if (use_actor_critic) {
        adam_step(state.critic.params(), critic_grads, state.critic_opt);
        adam_step(state.policy.params(), actor_grads, state.actor_opt);
    }
    if (use_vae)
        adam_step(state.vae.params(), vae_grads, state.vae_opt);
    if (use_actor_critic) {
        soft_update(state.critic_target.params(), state.critic.params(), cfg.soft_update);
        soft_update(state.policy_target.params(), state.policy.params(), cfg.soft_update);
    }
    state.step += 1;
    return diag;
}

const char* const kMetricsHeader =
    "step,critic_loss,actor_loss,vae_loss,eval_cvar,eval_mean,eval_risky_steps,eval_duration";

std::string format_metrics_row(const MetricsRow& row)
{
    auto num = [](double x) -> std::string {
        if (std::isnan(x))
            return "";
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.10g", x);
        return buf;
    };
    std::ostringstream out;
    out << row.step << ',' << num(row.critic_loss) << ',' << num(row.actor_loss) << ',' << num(row.vae_loss) << ','
        << num(row.eval_cvar) << ',' << num(row.eval_mean) << ',' << num(row.eval_risky_steps) << ','
        << num(row.eval_duration);
    return out.str();
}

namespace {

/// Shared machinery of the offline and online loops: steps, loss averaging,
/// periodic evaluation, best-checkpoint tracking and output files.
class LoopDriver {
public:
    LoopDriver(const TrainerConfig& config, const TrainOptions& options, const Environment& env)
        : config_(config), options_(options), env_(env.clone())
    {
        if (options_.out_dir) {
            std::filesystem::create_directories(*options_.out_dir);
            metrics_file_.open(std::filesystem::path(*options_.out_dir) / "metrics.csv", std::ios::binary);
            if (!metrics_file_)
                throw FormatError("cannot write metrics log in '" + *options_.out_dir + "'");
            metrics_file_ << kMetricsHeader << '\n' << std::flush;
        }
    }

    void start(TrainResult& result)
    {
        if (options_.resume) {
            result.final_state = *options_.resume;
            if (config_hash(result.final_state.config) != config_hash(config_))
                throw ConfigError("resume state was produced by a different configuration");
        } else {
            result.final_state = TrainerState::initialize(config_, *env_);
        }
        result.best_state = result.final_state;
    }

    void pretrain_vae(TrainResult& result, const OfflineDataset& data)
    {
        if (options_.resume || config_.mode != TrainMode::oraac)
            return;
        for (long i = 0; i < config_.vae_pretrain_steps; ++i)
            vae_only_step(result.final_state, data);
    }

    void run_until(TrainResult& result, const OfflineDataset& data, long until)
    {
        TrainerState& state = result.final_state;
        while (state.step < until) {
            const StepDiagnostics d = train_step(state, data);
            accumulate(d);
            if (state.step % config_.eval_interval == 0)
                evaluate(result);
        }
    }

    void finish(TrainResult& result)
    {
        if (options_.out_dir) {
            const std::filesystem::path dir(*options_.out_dir);
            save_checkpoint(result.final_state, (dir / "final").string());
            save_checkpoint(result.best_state, (dir / "best").string());
        }
    }

    const Environment& env() const { return *env_; }

private:
    void accumulate(const StepDiagnostics& d)
    {
        sums_[0] += d.critic_loss;
        sums_[1] += d.actor_loss;
        sums_[2] += d.vae_loss;
        ++count_;
    }

    void evaluate(TrainResult& result)
    {
        TrainerState& state = result.final_state;
        Rng rng = make_stream(config_.seed, "eval", static_cast<std::uint64_t>(state.step));
        const EvalReport report = evaluate_policy(*env_, PolicySnapshot::of(state).action_source(),
                                                  config_.eval_episodes, config_.eval_alpha, rng);
        MetricsRow row;
        row.step = state.step;
        const double n = static_cast<double>(std::max<long>(count_, 1));
        row.critic_loss = sums_[0] / n;
        row.actor_loss = sums_[1] / n;
        row.vae_loss = sums_[2] / n;
        row.eval_cvar = report.cvar;
        row.eval_mean = report.mean;
        row.eval_risky_steps = report.risky_steps_mean;
        row.eval_duration = report.duration_mean;
        sums_ = {0.0, 0.0, 0.0};
        count_ = 0;
        result.metrics.push_back(row);
        if (metrics_file_.is_open())
            metrics_file_ << format_metrics_row(row) << '\n' << std::flush;
        log_debug("step " + std::to_string(row.step) + " cvar " + std::to_string(report.cvar) + " mean " +
                  std::to_string(report.mean) + " risky " + std::to_string(report.risky_steps_mean));

        if (report.cvar > state.best_cvar) {
            state.best_cvar = report.cvar;
            state.best_step = state.step;
            result.best_state = state;
            if (options_.out_dir)
                save_checkpoint(result.best_state, (std::filesystem::path(*options_.out_dir) / "best").string());
        }
    }

    TrainerConfig config_;
    TrainOptions options_;
    std::unique_ptr<Environment> env_;
    std::ofstream metrics_file_;
    std::array<double, 3> sums_{0.0, 0.0, 0.0};
    long count_ = 0;
};

}  // namespace

TrainResult train_loop(const OfflineDataset& dataset, const TrainerConfig& config, const TrainOptions& options)
{
    config.validate();
    if (dataset.empty())
        throw UsageError("train_loop: empty dataset");
    const auto env = make_environment(config.env);
    if (dataset.state_dim != env->state_dim() || dataset.action_dim != env->action_dim())
        throw ConfigError("train_loop: dataset dimensions do not match the environment");
    LoopDriver driver(config, options, *env);
    TrainResult result;
    driver.start(result);
    driver.pretrain_vae(result, dataset);
    driver.run_until(result, dataset, config.total_steps);
    driver.finish(result);
    return result;
}

TrainResult train_online(const TrainerConfig& config, const TrainOptions& options, const OfflineDataset* initial)
{
    config.validate();
    if (options.resume)
        throw UsageError("train_online: resuming online runs is not supported");
    const auto env = make_environment(config.env);
    LoopDriver driver(config, options, *env);
    TrainResult result;
    driver.start(result);
    OfflineDataset& buffer = result.buffer;
    if (initial) {
        buffer = *initial;
    } else {
        buffer.env = env->to_json();
        buffer.state_dim = env->state_dim();
        buffer.action_dim = env->action_dim();
        buffer.generator = {{"kind", "online"}, {"exploration_noise", config.online.exploration_noise}};
        buffer.seed = config.seed;
    }

    auto collect = [&](int episodes) {
        TrainerState& state = result.final_state;
        const ActionSource base = PolicySnapshot::of(state).action_source();
        const double sigma = config.online.exploration_noise;
        const double theta = config.online.noise_theta;
        const ActionBox box = env->action_box();
        for (int e = 0; e < episodes; ++e) {
            Vector noise = Vector::Zero(env->action_dim());
            const ActionSource explore = [&](const Vector& s, Rng& rng) {
                for (Index i = 0; i < noise.size(); ++i)
                    noise(i) = (1.0 - theta) * noise(i) + sigma * standard_normal(rng);
                return box.clip(base(s, rng) + noise);
            };
            buffer.append(run_episode(*env, explore, state.streams.explore));
        }
        const auto capacity = static_cast<std::size_t>(config.online.buffer_capacity);
        if (capacity > 0) {
            std::size_t drop = 0;
            while (drop + 1 < buffer.episodes() && buffer.size() - buffer.episode_starts[drop] > capacity)
                ++drop;
            buffer.drop_front(drop);
        }
    };

    collect(config.online.warmup_episodes);
    while (result.final_state.step < config.total_steps) {
        collect(config.online.episodes_per_block);
        if (buffer.empty())
            throw UsageError("train_online: no data collected");
        const long until = std::min(config.total_steps, result.final_state.step + config.online.steps_per_block);
        driver.run_until(result, buffer, until);
    }
    driver.finish(result);
    return result;
}

const TrainerState& selected_state(const TrainResult& result)
{
    return result.final_state.config.early_stop ? result.best_state : result.final_state;
}

namespace {

std::string rng_state(const Rng& rng)
{
    std::ostringstream out;
    out << rng;
    return out.str();
}

Rng rng_from_state(const std::string& text)
{
    Rng rng;
    std::istringstream in(text);
    in >> rng;
    if (!in)
        throw FormatError("checkpoint: malformed random generator state");
    return rng;
}

std::string hex(std::uint64_t value)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

}  // namespace

void save_checkpoint(const TrainerState& state, const std::string& path)
{
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty())
        std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw FormatError("cannot open '" + path + "' for writing");
    nlohmann::json header{
        {"format", "oraac-checkpoint"},
        {"version", 1},
        {"config", to_json(state.config)},
        {"config_hash", hex(config_hash(state.config))},
        {"step", state.step},
        {"best_cvar", std::isfinite(state.best_cvar) ? nlohmann::json(state.best_cvar) : nlohmann::json()},
        {"best_step", state.best_step},
        {"rng",
         {{"minibatch", rng_state(state.streams.minibatch)},
          {"quantiles", rng_state(state.streams.quantiles)},
          {"latent", rng_state(state.streams.latent)},
          {"explore", rng_state(state.streams.explore)}}}};
    out << header.dump() << '\n';
    auto params_line = [&](const char* name, const ParamSet<double>& p) {
        out << nlohmann::json{{"component", name}, {"params", encode_params(p)}}.dump() << '\n';
    };
    auto adam_line = [&](const char* name, const AdamState<double>& a) {
        out << nlohmann::json{{"component", name}, {"adam", encode_adam(a)}}.dump() << '\n';
    };
    params_line("critic", state.critic.params());
    params_line("critic_target", state.critic_target.params());
    params_line("vae", state.vae.params());
    params_line("policy", state.policy.params());
    params_line("policy_target", state.policy_target.params());
    adam_line("critic_opt", state.critic_opt);
    adam_line("actor_opt", state.actor_opt);
    adam_line("vae_opt", state.vae_opt);
    if (!out)
        throw FormatError("write to '" + path + "' failed");
}

TrainerState load_checkpoint(const std::string& path, const TrainerConfig* expected)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FormatError("cannot open checkpoint '" + path + "'");
    std::string line;
    std::size_t line_no = 0;
    auto next_json = [&]() {
        if (!std::getline(in, line))
            throw FormatError(path + ":" + std::to_string(line_no + 1) + ": unexpected end of checkpoint");
        ++line_no;
        try {
            return nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": malformed checkpoint record");
        }
    };

    const nlohmann::json header = next_json();
    if (header.value("format", std::string()) != "oraac-checkpoint" || header.value("version", 0) != 1)
        throw FormatError(path + ": not a version 1 oraac checkpoint");
    const TrainerConfig config = trainer_config_from_json(header.at("config"));
    // Hash the stored text so configuration fields added later, which load
    // with their defaults, do not invalidate older checkpoints.
    if (hex(fnv1a(header.at("config").dump())) != header.value("config_hash", std::string()))
        throw FormatError(path + ": configuration hash does not match the stored configuration");
    if (expected && config_hash(*expected) != config_hash(config))
        throw ConfigError(path + ": checkpoint was produced by a different configuration; refusing to resume");

    const auto env = make_environment(config.env);
    TrainerState s = TrainerState::initialize(config, *env);
    s.step = header.at("step").get<long>();
    s.best_cvar = header.at("best_cvar").is_null() ? -std::numeric_limits<double>::infinity()
                                                   : header.at("best_cvar").get<double>();
    s.best_step = header.at("best_step").get<long>();
    const auto& rng = header.at("rng");
    s.streams.minibatch = rng_from_state(rng.at("minibatch").get<std::string>());
    s.streams.quantiles = rng_from_state(rng.at("quantiles").get<std::string>());
    s.streams.latent = rng_from_state(rng.at("latent").get<std::string>());
    s.streams.explore = rng_from_state(rng.at("explore").get<std::string>());

    std::set<std::string> seen;
    for (int i = 0; i < 8; ++i) {
        const nlohmann::json rec = next_json();
        const std::string name = rec.value("component", std::string());
        if (!seen.insert(name).second)
            throw FormatError(path + ":" + std::to_string(line_no) + ": duplicate component '" + name + "'");
        try {
            if (rec.contains("params")) {
                ParamSet<double> p = decode_params(rec.at("params"));
                if (name == "critic")
                    s.critic = QuantileCritic(s.critic.config(), std::move(p));
                else if (name == "critic_target")
                    s.critic_target = QuantileCritic(s.critic.config(), std::move(p));
                else if (name == "vae")
                    s.vae = BehaviorVae(s.vae.config(), s.vae.box(), std::move(p));
                else if (name == "policy")
                    s.policy = PerturbationPolicy(s.policy.config(), s.policy.box(), std::move(p));
                else if (name == "policy_target")
                    s.policy_target = PerturbationPolicy(s.policy.config(), s.policy.box(), std::move(p));
                else
                    throw FormatError("unknown component '" + name + "'");
            } else {
                AdamState<double> a = decode_adam(rec.at("adam"));
                AdamState<double>* slot = name == "critic_opt" ? &s.critic_opt
                                          : name == "actor_opt" ? &s.actor_opt
                                          : name == "vae_opt"   ? &s.vae_opt
                                                                : nullptr;
                if (!slot)
                    throw FormatError("unknown component '" + name + "'");
                if (a.first_moment.size() != slot->first_moment.size())
                    throw FormatError("optimizer state '" + name + "' has the wrong size");
                *slot = std::move(a);
            }
        } catch (const ConfigError& e) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const FormatError& e) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return s;
}

}  // namespace oraac
