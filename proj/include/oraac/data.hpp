#pragma once

// Offline transition datasets: scripted behavior data for the car, episode
// bookkeeping, minibatch sampling, JSONL persistence and the bootstrap
// estimate of the behavior policy's return statistics.
//
// File format (one JSON value per line):
//   line 1   {"format": "oraac-dataset", "version": 1, "env": {...}, "state_dim": ..,
//             "action_dim": .., "count": .., "episode_starts": [...],
//             "episode_returns": [...], "generator": {...}, "seed": ..}
//   line 2+  [s..., a..., r, s'..., done]

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "oraac/envs.hpp"
#include "oraac/transition.hpp"

namespace oraac {

enum class BehaviorKind { max_accel, saturate, mixture };

struct BehaviorPolicySpec {
    BehaviorKind kind = BehaviorKind::mixture;
    double mix = 0.5;           // probability that a mixture episode is max_accel
    double noise = 0.1;         // std of the Gaussian action noise
    double target_speed = 0.9;  // coasting speed of the saturate policy
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const BehaviorPolicySpec& spec);
BehaviorPolicySpec behavior_spec_from_json(const nlohmann::json& doc);
BehaviorKind behavior_kind_from_string(const std::string& name);
std::string to_string(BehaviorKind kind);

/// Scripted controller for one episode; `kind` must not be mixture.
ActionSource scripted_policy(BehaviorKind kind, double noise, double target_speed);

struct OfflineDataset {
    nlohmann::json env;  // environment description, {"name": ..., ...}
    Index state_dim = 0;
    Index action_dim = 0;
    std::vector<Transition> transitions;
    std::vector<std::size_t> episode_starts;
    std::vector<double> recorded_returns;  // per episode, as observed while collecting
    nlohmann::json generator = nlohmann::json::object();
    std::uint64_t seed = 0;

    std::size_t size() const { return transitions.size(); }
    bool empty() const { return transitions.empty(); }
    std::size_t episodes() const { return episode_starts.size(); }
    /// [begin, end) transition indices of episode e.
    std::pair<std::size_t, std::size_t> episode(std::size_t e) const;

    void append(const EpisodeRecord& record);
    /// Removes the oldest `count` episodes.
    void drop_front(std::size_t count);
    void validate() const;

    bool operator==(const OfflineDataset& other) const;
};

OfflineDataset generate_dataset(Environment& env, const BehaviorPolicySpec& spec, int n_episodes, Rng& rng);

/// B transitions drawn uniformly with replacement.
TransitionBatch sample_minibatch(const OfflineDataset& dataset, Index batch_size, Rng& rng);

void save_dataset(const OfflineDataset& dataset, const std::string& path);
OfflineDataset load_dataset(const std::string& path);

/// Undiscounted returns recomputed from the stored rewards.
std::vector<double> episode_returns(const OfflineDataset& dataset);

struct BootstrapSummary {
    double mean_of_means = 0.0;
    double std_of_means = 0.0;
    double mean_of_cvars = 0.0;
    double std_of_cvars = 0.0;
    std::vector<double> means;
    std::vector<double> cvars;
};

/// Resamples the episode returns with replacement `n_boot` times and reports
/// the mean and CVaR_alpha of each resample, reduced to mean and std.
BootstrapSummary behavior_return_bootstrap(const OfflineDataset& dataset, int n_boot, double alpha, Rng& rng);

/// Sample standard deviation (n - 1 in the denominator); 0 for fewer than two values.
double sample_std(const std::vector<double>& values);
double mean_of(const std::vector<double>& values);

}  // namespace oraac
