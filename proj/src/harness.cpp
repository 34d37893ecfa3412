#include "oraac/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "oraac/logging.hpp"

namespace oraac {

std::string format_mean_std(double mean, double std, int precision)
{
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.*f (%.*f)", precision, mean, precision, std);
    return buf;
}

EvalReport evaluate_state(const TrainerState& state, int episodes, double alpha, std::uint64_t seed)
{
    const auto env = make_environment(state.config.env);
    Rng rng = make_stream(seed, "evaluate");
    return evaluate_policy(*env, PolicySnapshot::of(state).action_source(), episodes, alpha, rng);
}

std::vector<SweepRow> run_sweep(const OfflineDataset* dataset, const std::vector<TrainerConfig>& variants,
                                const std::vector<std::string>& labels, const std::vector<std::uint64_t>& seeds,
                                const SweepOptions& options)
{
    if (variants.empty())
        throw ConfigError("sweep needs at least one variant");
    if (labels.size() != variants.size())
        throw ConfigError("sweep labels and variants differ in count");
    if (seeds.empty())
        throw ConfigError("sweep needs at least one seed");
    if (!options.online && !dataset)
        throw ConfigError("offline sweep needs a dataset");

    std::vector<SweepRow> rows;
    for (std::size_t v = 0; v < variants.size(); ++v) {
        SweepRow row;
        row.label = labels[v];
        row.config = variants[v];
        row.config.seed = seeds.front();
        std::vector<double> cvars, means;
        for (const std::uint64_t seed : seeds) {
            SweepRun run;
            run.seed = seed;
            try {
                TrainerConfig cfg = variants[v];
                cfg.seed = seed;
                const TrainResult result = options.online ? train_online(cfg) : train_loop(*dataset, cfg);
                run.report = evaluate_state(selected_state(result), options.eval_episodes, options.alpha,
                                            options.eval_seed ^ (seed * 0x9e3779b97f4a7c15ULL));
                run.ok = true;
                cvars.push_back(run.report.cvar);
                means.push_back(run.report.mean);
                log_info("sweep " + row.label + " seed " + std::to_string(seed) + ": cvar " +
                         std::to_string(run.report.cvar) + " mean " + std::to_string(run.report.mean));
            } catch (const std::exception& e) {
                run.error = e.what();
                ++row.failures;
                log_error("sweep " + row.label + " seed " + std::to_string(seed) + " failed: " + e.what());
            }
            row.runs.push_back(std::move(run));
        }
        if (!cvars.empty()) {
            row.cvar_mean = mean_of(cvars);
            row.cvar_std = sample_std(cvars);
            row.return_mean = mean_of(means);
            row.return_std = sample_std(means);
        } else {
            row.cvar_mean = row.cvar_std = row.return_mean = row.return_std =
                std::numeric_limits<double>::quiet_NaN();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

std::string num(double x)
{
    if (std::isnan(x))
        return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

}  // namespace

std::vector<SweepRow> lambda_sweep(const OfflineDataset& dataset, const TrainerConfig& base,
                                   const std::vector<double>& lambdas, const std::vector<std::uint64_t>& seeds,
                                   const SweepOptions& options)
{
    if (lambdas.empty())
        throw ConfigError("lambda sweep needs at least one value");
    std::vector<TrainerConfig> variants;
    std::vector<std::string> labels;
    for (const double lambda : lambdas) {
        TrainerConfig cfg = base;
        cfg.lambda = lambda;
        cfg.validate();
        variants.push_back(cfg);
        labels.push_back("lambda=" + num(lambda));
    }
    return run_sweep(&dataset, variants, labels, seeds, options);
}

std::vector<SweepRow> distortion_sweep(const OfflineDataset* dataset, const TrainerConfig& base,
                                       const std::vector<DistortionSpec>& distortions,
                                       const std::vector<std::uint64_t>& seeds, const SweepOptions& options)
{
    if (distortions.empty())
        throw ConfigError("distortion sweep needs at least one distortion");
    std::vector<TrainerConfig> variants;
    std::vector<std::string> labels;
    for (const DistortionSpec& d : distortions) {
        TrainerConfig cfg = base;
        cfg.distortion = d;
        cfg.validate();
        variants.push_back(cfg);
        labels.push_back(d.describe());
    }
    return run_sweep(dataset, variants, labels, seeds, options);
}

std::string sweep_csv(const std::vector<SweepRow>& rows)
{
    std::ostringstream out;
    out << "label,runs,failures,cvar_mean,cvar_std,return_mean,return_std\n";
    for (const SweepRow& r : rows)
        out << r.label << ',' << r.runs.size() << ',' << r.failures << ',' << num(r.cvar_mean) << ','
            << num(r.cvar_std) << ',' << num(r.return_mean) << ',' << num(r.return_std) << '\n';
    return out.str();
}

ComparisonTable compare_runs(const std::vector<NamedReport>& reports)
{
    if (reports.size() < 2)
        throw ConfigError("compare needs at least two reports");
    const double alpha = reports.front().report.alpha;
    for (const NamedReport& r : reports)
        if (r.report.alpha != alpha)
            throw ConfigError("reports disagree on alpha (" + num(alpha) + " vs " + num(r.report.alpha) + ")");

    // Groups in first-appearance order.
    std::vector<std::string> order;
    std::map<std::string, std::vector<const EvalReport*>> groups;
    for (const NamedReport& r : reports) {
        if (!groups.count(r.name))
            order.push_back(r.name);
        groups[r.name].push_back(&r.report);
    }

    struct Cells {
        double cvar, cvar_sd, mean, mean_sd, risky, risky_sd, dur, dur_sd;
        std::size_t n;
    };
    std::vector<Cells> cells;
    for (const std::string& name : order) {
        const auto& g = groups[name];
        Cells c{};
        c.n = g.size();
        if (g.size() == 1) {
            const EvalReport& r = *g.front();
            c.cvar = r.cvar;
            c.cvar_sd = 0.0;
            c.mean = r.mean;
            c.mean_sd = sample_std(r.returns);
            c.risky = r.risky_steps_mean;
            c.risky_sd = r.risky_steps_std;
            c.dur = r.duration_mean;
            c.dur_sd = r.duration_std;
        } else {
            std::vector<double> cv, mn, rk, du;
            for (const EvalReport* r : g) {
                cv.push_back(r->cvar);
                mn.push_back(r->mean);
                rk.push_back(r->risky_steps_mean);
                du.push_back(r->duration_mean);
            }
            c.cvar = mean_of(cv);
            c.cvar_sd = sample_std(cv);
            c.mean = mean_of(mn);
            c.mean_sd = sample_std(mn);
            c.risky = mean_of(rk);
            c.risky_sd = sample_std(rk);
            c.dur = mean_of(du);
            c.dur_sd = sample_std(du);
        }
        cells.push_back(c);
    }

    const std::string cvar_name = "CVaR_" + num(alpha);
    ComparisonTable table;
    std::ostringstream csv;
    csv << "name,runs,cvar_mean,cvar_std,return_mean,return_std,risky_steps_mean,risky_steps_std,duration_mean,"
           "duration_std\n";
    for (std::size_t i = 0; i < order.size(); ++i) {
        const Cells& c = cells[i];
        csv << order[i] << ',' << c.n << ',' << num(c.cvar) << ',' << num(c.cvar_sd) << ',' << num(c.mean) << ','
            << num(c.mean_sd) << ',' << num(c.risky) << ',' << num(c.risky_sd) << ',' << num(c.dur) << ','
            << num(c.dur_sd) << '\n';
    }
    table.csv = csv.str();

    std::vector<std::vector<std::string>> grid{{"Algorithm", cvar_name, "Mean", "Risky Steps", "Total Steps"}};
    for (std::size_t i = 0; i < order.size(); ++i) {
        const Cells& c = cells[i];
        grid.push_back({order[i], format_mean_std(c.cvar, c.cvar_sd), format_mean_std(c.mean, c.mean_sd),
                        format_mean_std(c.risky, c.risky_sd), format_mean_std(c.dur, c.dur_sd)});
    }
    std::vector<std::size_t> widths(grid.front().size(), 0);
    for (const auto& row : grid)
        for (std::size_t j = 0; j < row.size(); ++j)
            widths[j] = std::max(widths[j], row[j].size());
    std::ostringstream text;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (std::size_t j = 0; j < grid[i].size(); ++j) {
            if (j == 0)
                text << std::left << std::setw(static_cast<int>(widths[j])) << grid[i][j];
            else
                text << "  " << std::right << std::setw(static_cast<int>(widths[j])) << grid[i][j];
        }
        text << '\n';
        if (i == 0) {
            std::size_t total = 0;
            for (const std::size_t w : widths)
                total += w + 2;
            text << std::string(total - 2, '-') << '\n';
        }
    }
    table.text = text.str();
    return table;
}

std::string export_plot_data(const std::string& metrics_csv)
{
    std::istringstream in(metrics_csv);
    std::string line;
    if (!std::getline(in, line))
        throw FormatError("metrics log is empty");
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(s);
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        if (!s.empty() && s.back() == ',')
            cells.emplace_back();
        return cells;
    };
    const std::vector<std::string> header = split(line);
    if (header.empty() || header.front() != "step")
        throw FormatError("metrics log header must start with 'step'");
    std::ostringstream out;
    out << "step,metric,value\n";
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        const std::vector<std::string> cells = split(line);
        if (cells.size() != header.size())
            throw FormatError("metrics log line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " fields");
        for (std::size_t j = 1; j < cells.size(); ++j)
            if (!cells[j].empty())
                out << cells[0] << ',' << header[j] << ',' << cells[j] << '\n';
    }
    return out.str();
}

namespace {

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text)
{
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty())
        std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ConfigError("cannot write '" + path + "'");
    out << text;
}

/// Writes to `path`, or to `out` when the path is empty or "-".
void emit(const std::string& path, const std::string& text, std::ostream& out)
{
    if (path.empty() || path == "-")
        out << text;
    else
        write_file(path, text);
}

std::vector<std::string> split_list(const std::string& text)
{
    std::vector<std::string> items;
    std::string item;
    std::istringstream ss(text);
    while (std::getline(ss, item, ','))
        if (!item.empty())
            items.push_back(item);
    return items;
}

std::vector<std::uint64_t> seed_list(std::uint64_t first, int count)
{
    if (count < 1)
        throw ConfigError("--n-seeds must be at least 1");
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < count; ++i)
        seeds.push_back(first + static_cast<std::uint64_t>(i));
    return seeds;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Offline risk-averse actor-critic: data generation, training, evaluation and experiments", "oraac"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate an offline dataset with a scripted behavior policy");
    std::string gen_env = "car", gen_behavior = "mixture", gen_out;
    int gen_episodes = 200;
    std::uint64_t gen_seed = 0;
    double gen_noise = 0.1, gen_mix = 0.5, gen_target = 0.9;
    gen->add_option("--env", gen_env, "environment name")->check(CLI::IsMember({"car"}));
    gen->add_option("--behavior", gen_behavior, "max_accel, saturate or mixture");
    gen->add_option("--episodes", gen_episodes, "episode count")->check(CLI::PositiveNumber);
    gen->add_option("--noise", gen_noise, "behavior action noise std");
    gen->add_option("--mix", gen_mix, "probability of a max_accel episode in the mixture");
    gen->add_option("--target-speed", gen_target, "coasting speed of the saturate behavior");
    gen->add_option("--seed", gen_seed, "random seed");
    gen->add_option("--out", gen_out, "output path (JSONL)")->required();

    // train
    auto* train = app.add_subcommand("train", "train a policy and write metrics and checkpoints");
    std::string train_config, train_data, train_out, train_resume;
    std::optional<std::uint64_t> train_seed;
    bool train_online_flag = false;
    train->add_option("--config", train_config, "run configuration (JSON)");
    train->add_option("--data", train_data, "offline dataset (JSONL)");
    train->add_option("--out", train_out, "output directory")->required();
    train->add_option("--seed", train_seed, "override the configuration seed");
    train->add_option("--resume", train_resume, "continue from this checkpoint");
    train->add_flag("--online", train_online_flag, "alternate data collection and update blocks");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt, eval_out, eval_hist;
    int eval_episodes = 100;
    double eval_alpha = 0.1;
    std::uint64_t eval_seed = 0;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    eval->add_option("--episodes", eval_episodes, "episode count")->check(CLI::PositiveNumber);
    eval->add_option("--alpha", eval_alpha, "CVaR level");
    eval->add_option("--seed", eval_seed, "random seed");
    eval->add_option("--out", eval_out, "report path (JSON; default stdout)");
    eval->add_option("--histogram", eval_hist, "risk histogram path (CSV)");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "train and evaluate over lambda values or distortions");
    std::string sweep_config, sweep_data, sweep_lambdas, sweep_distortions, sweep_out;
    int sweep_seeds = 1, sweep_episodes = 100;
    double sweep_alpha = 0.1;
    std::uint64_t sweep_seed = 0;
    bool sweep_online = false;
    sweep->add_option("--config", sweep_config, "base run configuration (JSON)");
    sweep->add_option("--data", sweep_data, "offline dataset (JSONL)");
    auto* lam_opt = sweep->add_option("--lambdas", sweep_lambdas, "comma separated lambda values");
    auto* dis_opt = sweep->add_option("--distortions", sweep_distortions, "comma separated, e.g. cvar:0.1,expectation");
    lam_opt->excludes(dis_opt);
    sweep->add_option("--n-seeds", sweep_seeds, "runs per value, seeds seed, seed+1, ...");
    sweep->add_option("--episodes", sweep_episodes, "evaluation episodes per run")->check(CLI::PositiveNumber);
    sweep->add_option("--alpha", sweep_alpha, "CVaR level");
    sweep->add_option("--seed", sweep_seed, "first seed");
    sweep->add_option("--out", sweep_out, "table path (CSV; default stdout)");
    sweep->add_flag("--online", sweep_online, "train online instead of on the dataset");

    // compare
    auto* compare = app.add_subcommand("compare", "tabulate evaluation reports");
    std::vector<std::string> compare_reports;
    std::string compare_out;
    compare->add_option("--report", compare_reports, "name=report.json; repeat names to pool seeds")->required();
    compare->add_option("--out", compare_out, "table path (CSV); the text table goes to stdout");

    // export-plots
    auto* plots = app.add_subcommand("export-plots", "convert a metrics log to tidy CSV");
    std::string plots_metrics, plots_out;
    plots->add_option("--metrics", plots_metrics, "metrics.csv from a training run")->required();
    plots->add_option("--out", plots_out, "output path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (*gen) {
            BehaviorPolicySpec spec;
            spec.kind = behavior_kind_from_string(gen_behavior);
            spec.noise = gen_noise;
            spec.mix = gen_mix;
            spec.target_speed = gen_target;
            spec.seed = gen_seed;
            spec.validate();
            auto env = make_environment(nlohmann::json{{"name", gen_env}});
            Rng rng = make_stream(gen_seed, "gen-data");
            const OfflineDataset data = generate_dataset(*env, spec, gen_episodes, rng);
            save_dataset(data, gen_out);
            log_info("wrote " + std::to_string(data.episodes()) + " episodes (" + std::to_string(data.size()) +
                     " transitions) to " + gen_out);
        } else if (*train) {
            TrainerConfig cfg = train_config.empty() ? TrainerConfig{} : load_trainer_config(train_config);
            if (train_seed)
                cfg.seed = *train_seed;
            TrainOptions opts;
            opts.out_dir = train_out;
            std::optional<TrainerState> resume;
            if (!train_resume.empty()) {
                resume = load_checkpoint(train_resume, &cfg);
                opts.resume = &*resume;
            }
            TrainResult result;
            if (train_online_flag) {
                std::optional<OfflineDataset> initial;
                if (!train_data.empty())
                    initial = load_dataset(train_data);
                result = train_online(cfg, opts, initial ? &*initial : nullptr);
                save_dataset(result.buffer, (std::filesystem::path(train_out) / "buffer.jsonl").string());
            } else {
                if (train_data.empty())
                    throw ConfigError("offline training needs --data");
                result = train_loop(load_dataset(train_data), cfg, opts);
            }
            log_info("trained " + std::to_string(result.final_state.step) + " steps; best eval CVaR " +
                     num(result.final_state.best_cvar) + " at step " + std::to_string(result.final_state.best_step));
        } else if (*eval) {
            const TrainerState state = load_checkpoint(eval_ckpt);
            if (!(eval_alpha > 0.0 && eval_alpha <= 1.0))
                throw ConfigError("--alpha must lie in (0, 1]");
            const EvalReport report = evaluate_state(state, eval_episodes, eval_alpha, eval_seed);
            emit(eval_out, to_json(report).dump(2) + "\n", out);
            if (!eval_hist.empty())
                write_file(eval_hist, histogram_csv(report.histogram));
        } else if (*sweep) {
            TrainerConfig base = sweep_config.empty() ? TrainerConfig{} : load_trainer_config(sweep_config);
            SweepOptions opts;
            opts.eval_episodes = sweep_episodes;
            opts.alpha = sweep_alpha;
            opts.eval_seed = sweep_seed;
            opts.online = sweep_online;
            std::optional<OfflineDataset> data;
            if (!sweep_data.empty())
                data = load_dataset(sweep_data);
            const auto seeds = seed_list(sweep_seed, sweep_seeds);
            std::vector<SweepRow> rows;
            if (!sweep_lambdas.empty()) {
                if (!data)
                    throw ConfigError("lambda sweeps need --data");
                std::vector<double> lambdas;
                for (const std::string& s : split_list(sweep_lambdas)) {
                    try {
                        lambdas.push_back(std::stod(s));
                    } catch (const std::exception&) {
                        throw ConfigError("bad lambda value '" + s + "'");
                    }
                }
                rows = lambda_sweep(*data, base, lambdas, seeds, opts);
            } else if (!sweep_distortions.empty()) {
                std::vector<DistortionSpec> specs;
                for (const std::string& s : split_list(sweep_distortions))
                    specs.push_back(parse_distortion(s));
                rows = distortion_sweep(data ? &*data : nullptr, base, specs, seeds, opts);
            } else {
                throw ConfigError("sweep needs --lambdas or --distortions");
            }
            emit(sweep_out, sweep_csv(rows), out);
        } else if (*compare) {
            std::vector<NamedReport> reports;
            for (const std::string& item : compare_reports) {
                const auto eq = item.find('=');
                if (eq == std::string::npos || eq == 0)
                    throw ConfigError("--report expects name=path, got '" + item + "'");
                nlohmann::json doc;
                try {
                    doc = nlohmann::json::parse(read_file(item.substr(eq + 1)));
                } catch (const nlohmann::json::exception& e) {
                    throw FormatError(item.substr(eq + 1) + ": " + e.what());
                }
                reports.push_back({item.substr(0, eq), eval_report_from_json(doc)});
            }
            const ComparisonTable table = compare_runs(reports);
            out << table.text;
            if (!compare_out.empty())
                write_file(compare_out, table.csv);
        } else if (*plots) {
            emit(plots_out, export_plot_data(read_file(plots_metrics)), out);
        }
    } catch (const std::exception& e) {
        err << "oraac: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace oraac
