#include <doctest.h>

#include <cmath>

#include "oraac/envs.hpp"

using namespace oraac;

namespace {

ActionSource constant(double a)
{
    return [a](const Vector&, Rng&) { return Vector::Constant(1, a); };
}

}  // namespace

TEST_CASE("car dynamics")
{
    const CarState a = car_step({0.0, 0.0, 0}, 1.0);
    CHECK(a.x == doctest::Approx(0.005));
    CHECK(a.v == doctest::Approx(0.1));
    CHECK(a.t == 1);

    const CarState b = car_step({2.4, 1.0, 5}, 0.0);
    CHECK(b.x == doctest::Approx(2.5));
    CHECK(b.v == 1.0);
    CHECK(reached_goal(b));

    const CarState c = car_step({0.0, 0.0, 0}, -1.0);
    CHECK(c.x == doctest::Approx(-0.005));
    CHECK(c.v == doctest::Approx(-0.1));

    // Actions are clipped to the box.
    const CarState d = car_step({0.0, 0.0, 0}, 7.0);
    CHECK(d.v == doctest::Approx(0.1));
}

TEST_CASE("car reward")
{
    CHECK(car_reward({2.6, 0.8, 20}, false) == 360.0);
    CHECK(car_reward({1.0, 1.2, 20}, true) == -35.0);
    CHECK(car_reward({1.0, 1.2, 20}, false) == -10.0);
    CHECK(car_reward({1.0, 1.0, 20}, true) == -10.0);  // strict inequality
    CHECK(car_reward({2.6, 1.2, 20}, true) == 335.0);

    // The Bernoulli is drawn only when speeding; its rate is the configured one.
    Rng rng = make_stream(1, "t");
    int hits = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i)
        hits += car_reward({1.0, 1.2, 3}, rng) < -10.0 ? 1 : 0;
    CHECK(std::abs(hits / double(n) - 0.2) < 5.0 * std::sqrt(0.16 / n));
    Rng r1 = make_stream(2, "t"), r2 = make_stream(2, "t");
    car_reward({1.0, 0.5, 3}, r1);
    CHECK(r1() == r2());
}

TEST_CASE("terminal states")
{
    CHECK(is_terminal({2.5, 0.0, 30}));
    CHECK(is_terminal({2.49, 0.0, 400}));
    CHECK(!is_terminal({0.0, 0.0, 0}));
}

TEST_CASE("config validation and json")
{
    CarConfig bad;
    bad.penalty_prob = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = CarConfig{};
    bad.horizon = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CarConfig c;
    c.horizon = 77;
    CHECK(car_config_from_json(to_json(c)).horizon == 77);
    CHECK(make_environment(nlohmann::json{{"name", "car"}, {"goal", 3.0}})->to_json()["goal"] == 3.0);
    CHECK_THROWS_AS(make_environment(nlohmann::json{{"name", "cheetah"}}), ConfigError);
}

TEST_CASE("run_episode: full throttle")
{
    CarEnv env;
    Rng rng = make_stream(3, "t");
    const EpisodeRecord r = run_episode(env, constant(1.0), rng);
    CHECK(r.duration == 23);
    CHECK(r.risky_steps == 13);
    CHECK(r.reached_goal);
    CHECK(r.transitions.back().done);
    // Return decomposition.
    int penalties = 0;
    for (const auto& t : r.transitions)
        penalties += (t.reward == -35.0 || t.reward == 335.0) ? 1 : 0;
    CHECK(r.total_return == doctest::Approx(-10.0 * r.duration + 370.0 - 25.0 * penalties));
    int risky = 0;
    for (const auto& t : r.transitions)
        risky += t.next_state(1) > 1.0 ? 1 : 0;
    CHECK(risky == r.risky_steps);
}

TEST_CASE("run_episode: standing still hits the horizon")
{
    CarEnv env;
    Rng rng = make_stream(4, "t");
    const EpisodeRecord r = run_episode(env, constant(0.0), rng);
    CHECK(r.duration == 400);
    CHECK(r.total_return == -4000.0);
    CHECK(r.risky_steps == 0);
    CHECK(!r.reached_goal);
    for (const auto& t : r.transitions)
        CHECK(!t.done);
}

TEST_CASE("run_episode: accelerate to the limit then coast")
{
    CarEnv env;
    Rng rng = make_stream(5, "t");
    const ActionSource bang = [](const Vector& s, Rng&) { return Vector::Constant(1, s(1) < 1.0 - 1e-9 ? 1.0 : 0.0); };
    const EpisodeRecord r = run_episode(env, bang, rng);
    CHECK(r.risky_steps == 0);
    CHECK(r.reached_goal);
    CHECK(r.duration == 30);
    CHECK(r.total_return == 70.0);
    for (double v : r.risk_values)
        CHECK(v <= 1.0);
}

TEST_CASE("run_episode: reproducible and only the reward consumes randomness")
{
    CarEnv e1, e2;
    Rng a = make_stream(6, "t"), b = make_stream(6, "t");
    const auto r1 = run_episode(e1, constant(1.0), a);
    const auto r2 = run_episode(e2, constant(1.0), b);
    CHECK(r1.transitions == r2.transitions);
    CHECK(r1.total_return == r2.total_return);

    Rng c = make_stream(7, "t");
    const auto r3 = run_episode(e1, constant(1.0), c);
    REQUIRE(r3.duration == r1.duration);
    for (int i = 0; i < r1.duration; ++i)
        CHECK(r1.transitions[i].next_state == r3.transitions[i].next_state);
}
