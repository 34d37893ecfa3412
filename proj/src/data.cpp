#include "oraac/data.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "oraac/risk.hpp"

namespace oraac {

void BehaviorPolicySpec::validate() const
{
    if (!(mix >= 0.0 && mix <= 1.0))
        throw ConfigError("behavior: mixture weight must lie in [0, 1]");
    if (!(noise >= 0.0))
        throw ConfigError("behavior: noise scale must be nonnegative");
    if (!(target_speed > 0.0))
        throw ConfigError("behavior: target speed must be positive");
}

std::string to_string(BehaviorKind kind)
{
    switch (kind) {
    case BehaviorKind::max_accel: return "max_accel";
    case BehaviorKind::saturate: return "saturate";
    default: return "mixture";
    }
}

BehaviorKind behavior_kind_from_string(const std::string& name)
{
    if (name == "max_accel")
        return BehaviorKind::max_accel;
    if (name == "saturate")
        return BehaviorKind::saturate;
    if (name == "mixture")
        return BehaviorKind::mixture;
    throw ConfigError("unknown behavior policy '" + name + "'");
}

nlohmann::json to_json(const BehaviorPolicySpec& s)
{
    return {{"kind", to_string(s.kind)},
            {"mix", s.mix},
            {"noise", s.noise},
            {"target_speed", s.target_speed},
            {"seed", s.seed}};
}

BehaviorPolicySpec behavior_spec_from_json(const nlohmann::json& doc)
{
    BehaviorPolicySpec s;
    s.kind = behavior_kind_from_string(doc.value("kind", std::string("mixture")));
    s.mix = doc.value("mix", s.mix);
    s.noise = doc.value("noise", s.noise);
    s.target_speed = doc.value("target_speed", s.target_speed);
    s.seed = doc.value("seed", s.seed);
    s.validate();
    return s;
}

ActionSource scripted_policy(BehaviorKind kind, double noise, double target_speed)
{
    if (kind == BehaviorKind::mixture)
        throw UsageError("scripted_policy: pick a concrete behavior per episode");
    return [=](const Vector& state, Rng& rng) {
        Vector a(1);
        if (kind == BehaviorKind::max_accel) {
            a(0) = 1.0;
        } else {
            // Deadbeat speed controller: full throttle until the target speed, then hold it.
            const double dt = 0.1;
            a(0) = std::clamp((target_speed - state(1)) / dt, -1.0, 1.0);
        }
        if (noise > 0.0)
            a(0) += noise * standard_normal(rng);
        a(0) = std::clamp(a(0), -1.0, 1.0);
        return a;
    };
}

std::pair<std::size_t, std::size_t> OfflineDataset::episode(std::size_t e) const
{
    const std::size_t begin = episode_starts.at(e);
    const std::size_t end = e + 1 < episode_starts.size() ? episode_starts[e + 1] : transitions.size();
    return {begin, end};
}

void OfflineDataset::append(const EpisodeRecord& record)
{
    if (record.transitions.empty())
        throw UsageError("dataset: cannot append an empty episode");
    episode_starts.push_back(transitions.size());
    transitions.insert(transitions.end(), record.transitions.begin(), record.transitions.end());
    recorded_returns.push_back(record.total_return);
}

void OfflineDataset::drop_front(std::size_t count)
{
    if (count == 0)
        return;
    if (count > episodes())
        throw UsageError("dataset: cannot drop more episodes than stored");
    const std::size_t cut = count == episodes() ? transitions.size() : episode_starts[count];
    transitions.erase(transitions.begin(), transitions.begin() + static_cast<std::ptrdiff_t>(cut));
    episode_starts.erase(episode_starts.begin(), episode_starts.begin() + static_cast<std::ptrdiff_t>(count));
    for (auto& s : episode_starts)
        s -= cut;
    if (!recorded_returns.empty())
        recorded_returns.erase(recorded_returns.begin(), recorded_returns.begin() + static_cast<std::ptrdiff_t>(count));
}

void OfflineDataset::validate() const
{
    if (transitions.empty() || episode_starts.empty())
        throw UsageError("dataset: no episodes");
    if (episode_starts.front() != 0)
        throw UsageError("dataset: the first episode must start at index 0");
    for (std::size_t e = 1; e < episode_starts.size(); ++e)
        if (episode_starts[e] <= episode_starts[e - 1])
            throw UsageError("dataset: episode " + std::to_string(e - 1) + " is empty");
    if (episode_starts.back() >= transitions.size())
        throw UsageError("dataset: the last episode is empty");
    if (!recorded_returns.empty() && recorded_returns.size() != episode_starts.size())
        throw UsageError("dataset: one recorded return per episode is required");
    for (const auto& t : transitions) {
        if (t.state.size() != state_dim || t.next_state.size() != state_dim || t.action.size() != action_dim)
            throw UsageError("dataset: transition dimensions are inconsistent");
        if (!t.state.allFinite() || !t.next_state.allFinite() || !t.action.allFinite() || !std::isfinite(t.reward))
            throw UsageError("dataset: nonfinite transition");
    }
}

bool OfflineDataset::operator==(const OfflineDataset& o) const
{
    return env == o.env && state_dim == o.state_dim && action_dim == o.action_dim && transitions == o.transitions &&
           episode_starts == o.episode_starts && recorded_returns == o.recorded_returns &&
           generator == o.generator && seed == o.seed;
}

OfflineDataset generate_dataset(Environment& env, const BehaviorPolicySpec& spec, int n_episodes, Rng& rng)
{
    if (n_episodes < 1)
        throw UsageError("generate_dataset: at least one episode is required");
    spec.validate();
    OfflineDataset data;
    data.env = env.to_json();
    data.state_dim = env.state_dim();
    data.action_dim = env.action_dim();
    data.generator = to_json(spec);
    data.seed = spec.seed;
    for (int e = 0; e < n_episodes; ++e) {
        BehaviorKind kind = spec.kind;
        if (kind == BehaviorKind::mixture)
            kind = uniform01(rng) < spec.mix ? BehaviorKind::max_accel : BehaviorKind::saturate;
        data.append(run_episode(env, scripted_policy(kind, spec.noise, spec.target_speed), rng));
    }
    return data;
}

TransitionBatch sample_minibatch(const OfflineDataset& dataset, Index batch_size, Rng& rng)
{
    if (dataset.empty())
        throw UsageError("sample_minibatch: empty dataset");
    if (batch_size < 1)
        throw UsageError("sample_minibatch: batch size must be at least 1");
    std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
    std::vector<const Transition*> items;
    items.reserve(static_cast<std::size_t>(batch_size));
    for (Index i = 0; i < batch_size; ++i)
        items.push_back(&dataset.transitions[pick(rng)]);
    return TransitionBatch::from(items);
}

void save_dataset(const OfflineDataset& dataset, const std::string& path)
{
    dataset.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw FormatError("cannot open '" + path + "' for writing");
    nlohmann::json header{{"format", "oraac-dataset"},
                          {"version", 1},
                          {"env", dataset.env},
                          {"state_dim", dataset.state_dim},
                          {"action_dim", dataset.action_dim},
                          {"count", dataset.size()},
                          {"episode_starts", dataset.episode_starts},
                          {"episode_returns", dataset.recorded_returns},
                          {"generator", dataset.generator},
                          {"seed", dataset.seed}};
    out << header.dump() << '\n';
    for (const auto& t : dataset.transitions) {
        nlohmann::json row = nlohmann::json::array();
        for (Index i = 0; i < t.state.size(); ++i)
            row.push_back(t.state(i));
        for (Index i = 0; i < t.action.size(); ++i)
            row.push_back(t.action(i));
        row.push_back(t.reward);
        for (Index i = 0; i < t.next_state.size(); ++i)
            row.push_back(t.next_state(i));
        row.push_back(t.done);
        out << row.dump() << '\n';
    }
    if (!out)
        throw FormatError("write to '" + path + "' failed");
}

namespace {

[[noreturn]] void fail(const std::string& path, std::size_t line, const std::string& what)
{
    throw FormatError(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

OfflineDataset load_dataset(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FormatError("cannot open '" + path + "'");
    std::string text;
    if (!std::getline(in, text))
        fail(path, 1, "missing metadata header");

    OfflineDataset data;
    std::size_t count = 0;
    try {
        const auto header = nlohmann::json::parse(text);
        if (header.value("format", std::string()) != "oraac-dataset")
            fail(path, 1, "not an oraac dataset");
        if (header.value("version", 0) != 1)
            fail(path, 1, "unsupported dataset version");
        data.env = header.at("env");
        data.state_dim = header.at("state_dim").get<Index>();
        data.action_dim = header.at("action_dim").get<Index>();
        count = header.at("count").get<std::size_t>();
        data.episode_starts = header.at("episode_starts").get<std::vector<std::size_t>>();
        data.recorded_returns = header.value("episode_returns", std::vector<double>{});
        data.generator = header.value("generator", nlohmann::json::object());
        data.seed = header.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        fail(path, 1, std::string("malformed metadata: ") + e.what());
    }
    if (data.state_dim < 1 || data.action_dim < 1)
        fail(path, 1, "dimensions must be positive");

    const auto sd = static_cast<std::size_t>(data.state_dim);
    const auto ad = static_cast<std::size_t>(data.action_dim);
    const std::size_t width = 2 * sd + ad + 2;
    data.transitions.reserve(count);
    std::size_t line = 1;
    while (std::getline(in, text)) {
        ++line;
        if (text.empty())
            continue;
        nlohmann::json row;
        try {
            row = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception&) {
            fail(path, line, "truncated or malformed record");
        }
        if (!row.is_array() || row.size() != width)
            fail(path, line, "record has " + std::to_string(row.is_array() ? row.size() : 0) + " fields, expected " +
                                 std::to_string(width));
        for (std::size_t i = 0; i + 1 < width; ++i)
            if (!row[i].is_number())
                fail(path, line, "field " + std::to_string(i) + " is not a number");
        if (!row[width - 1].is_boolean())
            fail(path, line, "done flag must be a boolean");
        Transition t;
        t.state.resize(data.state_dim);
        t.action.resize(data.action_dim);
        t.next_state.resize(data.state_dim);
        std::size_t k = 0;
        for (std::size_t i = 0; i < sd; ++i)
            t.state(static_cast<Index>(i)) = row[k++].get<double>();
        for (std::size_t i = 0; i < ad; ++i)
            t.action(static_cast<Index>(i)) = row[k++].get<double>();
        t.reward = row[k++].get<double>();
        for (std::size_t i = 0; i < sd; ++i)
            t.next_state(static_cast<Index>(i)) = row[k++].get<double>();
        t.done = row[k].get<bool>();
        data.transitions.push_back(std::move(t));
    }
    if (data.transitions.size() != count)
        fail(path, line, "header announces " + std::to_string(count) + " transitions, found " +
                             std::to_string(data.transitions.size()));
    try {
        data.validate();
    } catch (const UsageError& e) {
        fail(path, 1, e.what());
    }
    return data;
}

std::vector<double> episode_returns(const OfflineDataset& dataset)
{
    std::vector<double> out;
    out.reserve(dataset.episodes());
    for (std::size_t e = 0; e < dataset.episodes(); ++e) {
        const auto [begin, end] = dataset.episode(e);
        double total = 0.0;
        for (std::size_t i = begin; i < end; ++i)
            total += dataset.transitions[i].reward;
        out.push_back(total);
    }
    return out;
}

double mean_of(const std::vector<double>& values)
{
    if (values.empty())
        return 0.0;
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_std(const std::vector<double>& values)
{
    if (values.size() < 2)
        return 0.0;
    const double m = mean_of(values);
    double ss = 0.0;
    for (double v : values)
        ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

BootstrapSummary behavior_return_bootstrap(const OfflineDataset& dataset, int n_boot, double alpha, Rng& rng)
{
    if (n_boot < 2)
        throw UsageError("bootstrap: at least two resamples are required");
    const std::vector<double> returns = episode_returns(dataset);
    if (returns.size() < 2)
        throw UsageError("bootstrap: at least two episodes are required");
    std::uniform_int_distribution<std::size_t> pick(0, returns.size() - 1);
    BootstrapSummary out;
    std::vector<double> resample(returns.size());
    for (int b = 0; b < n_boot; ++b) {
        for (auto& r : resample)
            r = returns[pick(rng)];
        out.means.push_back(mean_of(resample));
        out.cvars.push_back(empirical_cvar(resample, alpha));
    }
    out.mean_of_means = mean_of(out.means);
    out.std_of_means = sample_std(out.means);
    out.mean_of_cvars = mean_of(out.cvars);
    out.std_of_cvars = sample_std(out.cvars);
    return out;
}

}  // namespace oraac
