#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oraac/data.hpp"

using namespace oraac;

namespace {

std::string temp_path(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / "oraac_test_data";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

OfflineDataset generate(BehaviorKind kind, double noise, int episodes, std::uint64_t seed, double mix = 0.5)
{
    CarEnv env;
    BehaviorPolicySpec spec;
    spec.kind = kind;
    spec.noise = noise;
    spec.mix = mix;
    spec.seed = seed;
    Rng rng = make_stream(seed, "gen");
    return generate_dataset(env, spec, episodes, rng);
}

std::vector<int> risky_per_episode(const OfflineDataset& d)
{
    std::vector<int> out;
    for (std::size_t e = 0; e < d.episodes(); ++e) {
        const auto [b, end] = d.episode(e);
        int n = 0;
        for (std::size_t i = b; i < end; ++i)
            n += d.transitions[i].next_state(1) > 1.0 ? 1 : 0;
        out.push_back(n);
    }
    return out;
}

// Replace line `n` (0-based) of a file.
void corrupt_line(const std::string& path, std::size_t n, const std::string& text)
{
    std::ifstream in(path);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);)
        lines.push_back(l);
    in.close();
    lines.at(n) = text;
    std::ofstream out(path);
    for (const auto& l : lines)
        out << l << '\n';
}

}  // namespace

TEST_CASE("generate: noiseless full throttle")
{
    const OfflineDataset d = generate(BehaviorKind::max_accel, 0.0, 1, 1);
    REQUIRE(d.episodes() == 1);
    CHECK(d.size() >= 22);
    CHECK(d.size() <= 24);
    for (const auto& t : d.transitions)
        CHECK(t.action(0) == 1.0);
    CHECK(d.transitions.back().done);
    CHECK(d.state_dim == 2);
    CHECK(d.action_dim == 1);
}

TEST_CASE("generate: noiseless saturate never speeds")
{
    const OfflineDataset d = generate(BehaviorKind::saturate, 0.0, 5, 2);
    for (int r : risky_per_episode(d))
        CHECK(r == 0);
    for (std::size_t e = 0; e < d.episodes(); ++e)
        CHECK(d.transitions[d.episode(e).second - 1].done);
}

TEST_CASE("generate: mixture has risky and safe episodes; returns match recorded")
{
    const OfflineDataset d = generate(BehaviorKind::mixture, 0.1, 100, 3);
    CHECK(d.episodes() == 100);
    const auto risky = risky_per_episode(d);
    int zero = 0, positive = 0;
    for (int r : risky)
        (r == 0 ? zero : positive)++;
    CHECK(zero > 0);
    CHECK(positive > 0);
    CHECK_NOTHROW(d.validate());
    const auto returns = episode_returns(d);
    REQUIRE(returns.size() == d.recorded_returns.size());
    for (std::size_t i = 0; i < returns.size(); ++i)
        CHECK(returns[i] == d.recorded_returns[i]);
}

TEST_CASE("generate: reproducible and validated")
{
    CHECK(generate(BehaviorKind::mixture, 0.1, 10, 4) == generate(BehaviorKind::mixture, 0.1, 10, 4));
    CarEnv env;
    Rng rng = make_stream(0, "t");
    CHECK_THROWS_AS(generate_dataset(env, {}, 0, rng), UsageError);
    BehaviorPolicySpec bad;
    bad.mix = 1.2;
    CHECK_THROWS_AS(generate_dataset(env, bad, 1, rng), ConfigError);
    bad = {};
    bad.noise = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("sample_minibatch")
{
    OfflineDataset one = generate(BehaviorKind::max_accel, 0.0, 1, 5);
    one.transitions.resize(1);
    one.recorded_returns.clear();
    Rng rng = make_stream(1, "t");
    const TransitionBatch b = sample_minibatch(one, 1, rng);
    CHECK(b.states.col(0) == one.transitions[0].state);
    CHECK(b.actions.col(0) == one.transitions[0].action);
    CHECK(b.rewards(0) == one.transitions[0].reward);

    const OfflineDataset d = generate(BehaviorKind::mixture, 0.1, 5, 6);
    Rng r1 = make_stream(2, "t"), r2 = make_stream(2, "t");
    for (int i = 0; i < 5; ++i) {
        const TransitionBatch x = sample_minibatch(d, 16, r1), y = sample_minibatch(d, 16, r2);
        CHECK(x.states == y.states);
        CHECK(x.rewards == y.rewards);
    }

    // 1e5 draws over 10 transitions: every frequency within 5 sigma of uniform.
    OfflineDataset ten = generate(BehaviorKind::max_accel, 0.0, 1, 7);
    ten.transitions.resize(10);
    for (std::size_t i = 0; i < 10; ++i)
        ten.transitions[i].reward = static_cast<double>(i);
    Rng r3 = make_stream(3, "t");
    std::vector<int> counts(10, 0);
    const int n = 100000;
    const TransitionBatch big = sample_minibatch(ten, n, r3);
    for (Index i = 0; i < n; ++i) {
        const double k = big.rewards(i);
        REQUIRE(k >= 0);
        REQUIRE(k <= 9);
        counts[static_cast<std::size_t>(k)]++;
    }
    const double sigma = std::sqrt(n * 0.1 * 0.9);
    for (int c : counts)
        CHECK(std::abs(c - n * 0.1) < 5 * sigma);

    OfflineDataset empty;
    CHECK_THROWS_AS(sample_minibatch(empty, 4, r3), UsageError);
}

TEST_CASE("save/load round trip is exact")
{
    const OfflineDataset d = generate(BehaviorKind::mixture, 0.1, 20, 8);
    const std::string path = temp_path("roundtrip.jsonl");
    save_dataset(d, path);
    const OfflineDataset back = load_dataset(path);
    CHECK(back == d);
}

TEST_CASE("load rejects corrupted files with a line number")
{
    const OfflineDataset d = generate(BehaviorKind::mixture, 0.1, 3, 9);
    const std::string path = temp_path("corrupt.jsonl");

    save_dataset(d, path);
    corrupt_line(path, 0, "{\"format\": \"oraac-dataset\", \"version\": 1, \"state_dim\": ");
    CHECK_THROWS_AS(load_dataset(path), FormatError);

    save_dataset(d, path);
    corrupt_line(path, 4, "[0.0, 1.0, 2.0");
    try {
        load_dataset(path);
        FAIL("expected a load error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find(":5:") != std::string::npos);
    }

    save_dataset(d, path);
    corrupt_line(path, 2, "[0.0, 1.0, 2.0, 3.0]");
    CHECK_THROWS_AS(load_dataset(path), FormatError);

    CHECK_THROWS_AS(load_dataset(temp_path("does-not-exist.jsonl")), FormatError);
}

TEST_CASE("drop_front removes the oldest episodes")
{
    OfflineDataset d = generate(BehaviorKind::mixture, 0.1, 6, 14);
    const OfflineDataset full = d;
    d.drop_front(0);
    CHECK(d == full);
    d.drop_front(2);
    CHECK(d.episodes() == 4);
    CHECK(d.episode_starts.front() == 0);
    CHECK_NOTHROW(d.validate());
    for (std::size_t e = 0; e < 4; ++e) {
        const auto [b, end] = d.episode(e);
        const auto [fb, fend] = full.episode(e + 2);
        CHECK(end - b == fend - fb);
        CHECK(d.transitions[b] == full.transitions[fb]);
        CHECK(d.recorded_returns[e] == full.recorded_returns[e + 2]);
    }
    CHECK_THROWS_AS(d.drop_front(5), UsageError);
    d.drop_front(4);
    CHECK(d.empty());
}

TEST_CASE("save rejects empty episodes")
{
    OfflineDataset d = generate(BehaviorKind::max_accel, 0.0, 2, 10);
    d.episode_starts.push_back(d.transitions.size());
    d.recorded_returns.push_back(0.0);
    CHECK_THROWS_AS(save_dataset(d, temp_path("empty.jsonl")), UsageError);
    OfflineDataset none;
    CHECK_THROWS_AS(save_dataset(none, temp_path("none.jsonl")), UsageError);
}

TEST_CASE("behavior return bootstrap")
{
    // All returns equal: noiseless saturate episodes are identical.
    const OfflineDataset same = generate(BehaviorKind::saturate, 0.0, 8, 11);
    Rng rng = make_stream(1, "t");
    const BootstrapSummary s = behavior_return_bootstrap(same, 10, 0.1, rng);
    const double c = episode_returns(same).front();
    CHECK(s.means.size() == 10);
    CHECK(s.cvars.size() == 10);
    CHECK(s.mean_of_means == doctest::Approx(c));
    CHECK(s.mean_of_cvars == doctest::Approx(c));
    CHECK(s.std_of_means == doctest::Approx(0.0));
    CHECK(s.std_of_cvars == doctest::Approx(0.0));

    // Returns {0, 100} x 50: each resample's CVaR_0.1 sits at 0.
    OfflineDataset two = generate(BehaviorKind::max_accel, 0.0, 1, 12);
    two.transitions.resize(1);
    two.recorded_returns.clear();
    two.episode_starts.clear();
    std::vector<Transition> ts;
    for (int e = 0; e < 100; ++e) {
        Transition t = two.transitions[0];
        t.reward = e % 2 == 0 ? 0.0 : 100.0;
        t.done = true;
        two.episode_starts.push_back(ts.size());
        ts.push_back(t);
    }
    two.transitions = ts;
    const BootstrapSummary z = behavior_return_bootstrap(two, 10, 0.1, rng);
    for (double cv : z.cvars)
        CHECK(cv == 0.0);
    CHECK(std::abs(z.mean_of_means - 50.0) < 20.0);

    const OfflineDataset single = generate(BehaviorKind::max_accel, 0.0, 1, 13);
    CHECK_THROWS_AS(behavior_return_bootstrap(single, 10, 0.1, rng), UsageError);
    CHECK_THROWS_AS(behavior_return_bootstrap(same, 1, 0.1, rng), UsageError);
}
