#pragma once

// Policy evaluation: M independent episodes, each with its own random
// substream, summarized by the empirical CVaR and mean of the undiscounted
// returns, the risky-step and duration statistics and a histogram of the
// monitored risk variable.

#include <string>
#include <vector>

#include <json.hpp>

#include "oraac/envs.hpp"

namespace oraac {

struct RiskHistogram {
    double lo = -0.5;
    double hi = 2.0;
    double width = 0.05;
    double threshold = 1.0;
    std::vector<long> counts;

    RiskHistogram() : counts(bins(), 0) {}
    RiskHistogram(double lo_, double hi_, double width_, double threshold_);

    std::size_t bins() const;
    /// Values outside [lo, hi) land in the first or last bin.
    void add(double value);
    long total() const;
    double bin_lo(std::size_t i) const { return lo + width * static_cast<double>(i); }
};

struct EvalReport {
    int episodes = 0;
    double alpha = 0.1;
    double cvar = 0.0;
    double mean = 0.0;
    double risky_steps_mean = 0.0;
    double risky_steps_std = 0.0;
    double duration_mean = 0.0;
    double duration_std = 0.0;
    int goals_reached = 0;
    std::vector<double> returns;
    std::vector<int> risky_steps;
    std::vector<int> durations;
    RiskHistogram histogram;
    std::string return_kind = "undiscounted";
};

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& doc);
/// bin_lo,bin_hi,count,beyond_threshold
std::string histogram_csv(const RiskHistogram& histogram);

/// Summarizes finished episodes.
EvalReport summarize_episodes(const std::vector<EpisodeRecord>& episodes, double alpha, double risk_threshold);

/// Runs M episodes; episode i uses a substream derived from one draw of `rng`
/// and i, so results do not depend on the order episodes are run in.
EvalReport evaluate_policy(const Environment& env, const ActionSource& policy, int episodes, double alpha, Rng& rng);

}  // namespace oraac
