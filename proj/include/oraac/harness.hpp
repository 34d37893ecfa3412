#pragma once

// Experiment orchestration on top of the trainer: evaluating checkpoints,
// lambda and distortion sweeps, comparison tables, plot-data export and the
// command line front end.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "oraac/data.hpp"
#include "oraac/evaluation.hpp"
#include "oraac/trainer.hpp"

namespace oraac {

/// "48.0 (8.3)" style cell.
std::string format_mean_std(double mean, double std, int precision = 1);

/// M fresh episodes of the policy held by `state`, on the environment of its config.
EvalReport evaluate_state(const TrainerState& state, int episodes, double alpha, std::uint64_t seed);

struct SweepOptions {
    int eval_episodes = 100;
    double alpha = 0.1;
    std::uint64_t eval_seed = 0;
    /// Offline runs train on the dataset; online runs ignore it.
    bool online = false;
};

struct SweepRun {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    EvalReport report;
};

struct SweepRow {
    std::string label;
    TrainerConfig config;  // seed field is the first run's
    std::vector<SweepRun> runs;
    double cvar_mean = 0.0;
    double cvar_std = 0.0;
    double return_mean = 0.0;
    double return_std = 0.0;
    int failures = 0;
};

/// One run per (variant, seed); failed runs are recorded and skipped in the
/// aggregates. Each run is evaluated on its selected (best or final) state.
std::vector<SweepRow> run_sweep(const OfflineDataset* dataset, const std::vector<TrainerConfig>& variants,
                                const std::vector<std::string>& labels, const std::vector<std::uint64_t>& seeds,
                                const SweepOptions& options);

std::vector<SweepRow> lambda_sweep(const OfflineDataset& dataset, const TrainerConfig& base,
                                   const std::vector<double>& lambdas, const std::vector<std::uint64_t>& seeds,
                                   const SweepOptions& options = {});

std::vector<SweepRow> distortion_sweep(const OfflineDataset* dataset, const TrainerConfig& base,
                                       const std::vector<DistortionSpec>& distortions,
                                       const std::vector<std::uint64_t>& seeds, const SweepOptions& options = {});

/// label,runs,failures,cvar_mean,cvar_std,return_mean,return_std
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct NamedReport {
    std::string name;
    EvalReport report;
};

struct ComparisonTable {
    std::string csv;
    std::string text;
};

/// Reports sharing a name are pooled (one report per seed): cells show the
/// mean and sample std over the group. A lone report shows its within-run
/// spread. Throws ConfigError when fewer than two reports are given or the
/// alphas differ.
ComparisonTable compare_runs(const std::vector<NamedReport>& reports);

/// Metrics CSV (trainer format) to tidy step,metric,value rows; empty cells are dropped.
std::string export_plot_data(const std::string& metrics_csv);

/// Command line entry point. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace oraac
