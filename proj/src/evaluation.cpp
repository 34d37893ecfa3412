#include "oraac/evaluation.hpp"

#include <cmath>
#include <sstream>

#include "oraac/data.hpp"
#include "oraac/risk.hpp"

namespace oraac {

RiskHistogram::RiskHistogram(double lo_, double hi_, double width_, double threshold_)
    : lo(lo_), hi(hi_), width(width_), threshold(threshold_)
{
    if (!(hi > lo && width > 0.0))
        throw ConfigError("histogram: need hi > lo and a positive bin width");
    counts.assign(bins(), 0);
}

std::size_t RiskHistogram::bins() const
{
    return static_cast<std::size_t>(std::llround((hi - lo) / width));
}

void RiskHistogram::add(double value)
{
    const double pos = std::floor((value - lo) / width);
    const auto last = static_cast<double>(counts.size() - 1);
    counts[static_cast<std::size_t>(std::clamp(pos, 0.0, last))] += 1;
}

long RiskHistogram::total() const
{
    long n = 0;
    for (long c : counts)
        n += c;
    return n;
}

nlohmann::json to_json(const EvalReport& r)
{
    return {{"episodes", r.episodes},
            {"alpha", r.alpha},
            {"cvar", r.cvar},
            {"mean", r.mean},
            {"risky_steps_mean", r.risky_steps_mean},
            {"risky_steps_std", r.risky_steps_std},
            {"duration_mean", r.duration_mean},
            {"duration_std", r.duration_std},
            {"goals_reached", r.goals_reached},
            {"returns", r.returns},
            {"risky_steps", r.risky_steps},
            {"durations", r.durations},
            {"return_kind", r.return_kind},
            {"histogram",
             {{"lo", r.histogram.lo},
              {"hi", r.histogram.hi},
              {"width", r.histogram.width},
              {"threshold", r.histogram.threshold},
              {"counts", r.histogram.counts}}}};
}

EvalReport eval_report_from_json(const nlohmann::json& doc)
{
    EvalReport r;
    try {
        r.episodes = doc.at("episodes").get<int>();
        r.alpha = doc.at("alpha").get<double>();
        r.cvar = doc.at("cvar").get<double>();
        r.mean = doc.at("mean").get<double>();
        r.risky_steps_mean = doc.at("risky_steps_mean").get<double>();
        r.risky_steps_std = doc.at("risky_steps_std").get<double>();
        r.duration_mean = doc.at("duration_mean").get<double>();
        r.duration_std = doc.at("duration_std").get<double>();
        r.goals_reached = doc.value("goals_reached", 0);
        r.returns = doc.at("returns").get<std::vector<double>>();
        r.risky_steps = doc.value("risky_steps", std::vector<int>{});
        r.durations = doc.value("durations", std::vector<int>{});
        r.return_kind = doc.value("return_kind", std::string("undiscounted"));
        const auto& h = doc.at("histogram");
        r.histogram = RiskHistogram(h.at("lo").get<double>(), h.at("hi").get<double>(), h.at("width").get<double>(),
                                    h.at("threshold").get<double>());
        r.histogram.counts = h.at("counts").get<std::vector<long>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed evaluation report: ") + e.what());
    }
    return r;
}

std::string histogram_csv(const RiskHistogram& h)
{
    std::ostringstream out;
    out << "bin_lo,bin_hi,count,beyond_threshold\n";
    out.precision(10);
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        const double lo = h.bin_lo(i);
        out << lo << ',' << lo + h.width << ',' << h.counts[i] << ',' << (lo >= h.threshold ? 1 : 0) << '\n';
    }
    return out.str();
}

EvalReport summarize_episodes(const std::vector<EpisodeRecord>& episodes, double alpha, double risk_threshold)
{
    if (episodes.empty())
        throw UsageError("evaluation: at least one episode is required");
    EvalReport r;
    r.episodes = static_cast<int>(episodes.size());
    r.alpha = alpha;
    r.histogram = RiskHistogram(-0.5, 2.0, 0.05, risk_threshold);
    std::vector<double> risky;
    std::vector<double> duration;
    for (const auto& ep : episodes) {
        r.returns.push_back(ep.total_return);
        r.risky_steps.push_back(ep.risky_steps);
        r.durations.push_back(ep.duration);
        risky.push_back(ep.risky_steps);
        duration.push_back(ep.duration);
        r.goals_reached += ep.reached_goal ? 1 : 0;
        for (double v : ep.risk_values)
            r.histogram.add(v);
    }
    r.cvar = empirical_cvar(r.returns, alpha);
    r.mean = mean_of(r.returns);
    r.risky_steps_mean = mean_of(risky);
    r.risky_steps_std = sample_std(risky);
    r.duration_mean = mean_of(duration);
    r.duration_std = sample_std(duration);
    return r;
}

EvalReport evaluate_policy(const Environment& env, const ActionSource& policy, int episodes, double alpha, Rng& rng)
{
    if (episodes < 1)
        throw UsageError("evaluate_policy: at least one episode is required");
    const std::uint64_t base = rng();
    std::vector<EpisodeRecord> records;
    records.reserve(static_cast<std::size_t>(episodes));
    auto local = env.clone();
    for (int i = 0; i < episodes; ++i) {
        Rng episode_rng = make_stream(base, "eval-episode", static_cast<std::uint64_t>(i));
        EpisodeRecord ep = run_episode(*local, policy, episode_rng);
        ep.transitions.clear();
        ep.transitions.shrink_to_fit();
        records.push_back(std::move(ep));
    }
    return summarize_episodes(records, alpha, env.risk_threshold());
}

}  // namespace oraac
