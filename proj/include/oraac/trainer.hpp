#pragma once

// Offline risk-averse actor-critic training.
//
// One train_step samples a minibatch, draws N and N' critic levels, computes
// the critic, actor and VAE losses with the parameters as they were at the
// start of the step, then applies one Adam step per component and one soft
// update per target network. The TD target uses the target perturbation
// network composed with the current VAE.
//
// Modes:
//   oraac     VAE + perturbation actor + critic
//   raac      actor a = xi(s) + critic, no behavior model
//   vae_only  only the VAE is trained; the policy is the VAE prior sampler

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oraac/actor.hpp"
#include "oraac/critic.hpp"
#include "oraac/data.hpp"
#include "oraac/evaluation.hpp"
#include "oraac/risk.hpp"
#include "oraac/vae.hpp"

namespace oraac {

enum class TrainMode { oraac, raac, vae_only };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

/// Alternating collection/update schedule for training against a live environment.
struct OnlineSchedule {
    int warmup_episodes = 20;
    int episodes_per_block = 5;
    long steps_per_block = 250;
    double exploration_noise = 0.3;
    /// Noise follows n <- (1 - theta) n + sigma eps, reset every episode;
    /// theta = 1 is white Gaussian noise.
    double noise_theta = 1.0;
    /// Oldest whole episodes are evicted once the buffer holds more
    /// transitions than this; 0 keeps everything.
    long buffer_capacity = 0;
};

struct TrainerConfig {
    TrainMode mode = TrainMode::oraac;
    DistortionSpec distortion = DistortionSpec::cvar(0.1);
    double lambda = 0.25;
    Index batch_size = 128;
    double critic_lr = 1e-3;
    double actor_lr = 1e-4;
    double vae_lr = 1e-3;
    double soft_update = 0.005;
    Index n_quantiles = 32;
    Index n_target_quantiles = 32;
    Index k_samples = 8;
    double kappa = 1.0;
    double gamma = 0.99;
    double reward_scale = 1.0;
    long total_steps = 20000;
    long eval_interval = 1000;
    int eval_episodes = 20;
    double eval_alpha = 0.1;
    std::uint64_t seed = 0;
    bool early_stop = true;
    bool zero_latent_eval = false;
    long vae_pretrain_steps = 0;

    Index critic_embed = 64;
    Index critic_merge = 16;
    Index critic_head = 32;
    std::vector<Index> actor_hidden{64, 64};
    std::vector<Index> vae_hidden{64, 64};
    Index latent_dim = 0;
    double latent_clip = 0.5;

    nlohmann::json env = nlohmann::json{{"name", "car"}};
    OnlineSchedule online;

    void validate() const;
};

nlohmann::json to_json(const TrainerConfig& config);
/// Missing fields take their defaults; unknown fields are rejected.
TrainerConfig trainer_config_from_json(const nlohmann::json& doc);
TrainerConfig load_trainer_config(const std::string& path);
/// FNV-1a of the canonical JSON form.
std::uint64_t config_hash(const TrainerConfig& config);

struct TrainerStreams {
    Rng minibatch;
    Rng quantiles;
    Rng latent;
    Rng explore;

    static TrainerStreams from_seed(std::uint64_t seed);
};

struct TrainerState {
    TrainerConfig config;
    QuantileCritic critic;
    QuantileCritic critic_target;
    BehaviorVae vae;
    PerturbationPolicy policy;
    PerturbationPolicy policy_target;
    AdamState<double> critic_opt;
    AdamState<double> actor_opt;
    AdamState<double> vae_opt;
    long step = 0;
    TrainerStreams streams;
    double best_cvar = -std::numeric_limits<double>::infinity();
    long best_step = -1;  // -1: the initial policy

    /// Fresh networks for `config` on `env`, seeded from config.seed.
    static TrainerState initialize(const TrainerConfig& config, const Environment& env);
};

/// Frozen policy usable for rollouts.
struct PolicySnapshot {
    TrainMode mode = TrainMode::oraac;
    PerturbationPolicy policy;
    BehaviorVae vae;
    bool zero_latent = false;

    static PolicySnapshot of(const TrainerState& state);
    ActionSource action_source() const;
};

struct StepDiagnostics {
    long step = 0;
    double critic_loss = std::numeric_limits<double>::quiet_NaN();
    double actor_loss = std::numeric_limits<double>::quiet_NaN();
    double vae_loss = std::numeric_limits<double>::quiet_NaN();
};

/// One iteration of the training algorithm. Throws NumericError (naming the
/// step) if any loss is nonfinite; the state is then left unchanged.
StepDiagnostics train_step(TrainerState& state, const OfflineDataset& dataset);

struct MetricsRow {
    long step = 0;
    double critic_loss = std::numeric_limits<double>::quiet_NaN();
    double actor_loss = std::numeric_limits<double>::quiet_NaN();
    double vae_loss = std::numeric_limits<double>::quiet_NaN();
    double eval_cvar = std::numeric_limits<double>::quiet_NaN();
    double eval_mean = std::numeric_limits<double>::quiet_NaN();
    double eval_risky_steps = std::numeric_limits<double>::quiet_NaN();
    double eval_duration = std::numeric_limits<double>::quiet_NaN();
};

extern const char* const kMetricsHeader;
std::string format_metrics_row(const MetricsRow& row);

struct TrainOptions {
    /// When set: metrics.csv, best and final checkpoints are written here.
    std::optional<std::string> out_dir;
    /// Continue from this state instead of starting fresh.
    const TrainerState* resume = nullptr;
};

struct TrainResult {
    TrainerState final_state;
    TrainerState best_state;
    std::vector<MetricsRow> metrics;
    OfflineDataset buffer;  // online runs: everything collected
};

/// Offline training on a fixed dataset with periodic evaluation and
/// early stopping on the evaluation CVaR.
TrainResult train_loop(const OfflineDataset& dataset, const TrainerConfig& config, const TrainOptions& options = {});

/// Alternates data collection with the current policy (plus Gaussian
/// exploration noise) and blocks of update steps on the growing buffer.
TrainResult train_online(const TrainerConfig& config, const TrainOptions& options = {},
                         const OfflineDataset* initial = nullptr);

/// The policy chosen by the run: the best-CVaR checkpoint when early stopping
/// is enabled, the final state otherwise.
const TrainerState& selected_state(const TrainResult& result);

void save_checkpoint(const TrainerState& state, const std::string& path);
/// Verifies the embedded config hash; when `expected` is given, also requires
/// it to match the stored configuration.
TrainerState load_checkpoint(const std::string& path, const TrainerConfig* expected = nullptr);

}  // namespace oraac
