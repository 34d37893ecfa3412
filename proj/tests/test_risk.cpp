#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "oraac/risk.hpp"

using namespace oraac;

namespace {

// Standard normal quantile by bisection on the CDF.
double normal_quantile(double p)
{
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (0.5 * std::erfc(-mid / std::numbers::sqrt2) < p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

// (1/alpha) * integral_0^alpha Phi^-1(u) du, via Gauss-Legendre on a log-spaced
// grid (the integrand is singular at 0).
double normal_cvar_quadrature(double alpha)
{
    const double x[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831, 0.9061798459386640};
    const double w[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
                         0.2369268850561891};
    double total = 0.0;
    double hi = alpha;
    for (int seg = 0; seg < 60; ++seg) {
        const double lo = hi / 2.0;
        const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
        for (int k = 0; k < 5; ++k)
            total += half * w[k] * normal_quantile(mid + half * x[k]);
        hi = lo;
    }
    return total / alpha;
}

}  // namespace

TEST_CASE("distortion spec validation and parsing")
{
    CHECK_NOTHROW(DistortionSpec::cvar(0.1).validate());
    CHECK_NOTHROW(DistortionSpec::cvar(1.0).validate());
    CHECK_THROWS_AS(DistortionSpec::cvar(0.0).validate(), ConfigError);
    CHECK_THROWS_AS(DistortionSpec::cvar(1.5).validate(), ConfigError);
    CHECK_THROWS_AS(DistortionSpec::cpw(0.0).validate(), ConfigError);

    CHECK(parse_distortion("cvar:0.1") == DistortionSpec::cvar(0.1));
    CHECK(parse_distortion("expectation") == DistortionSpec::expectation());
    CHECK(parse_distortion("cpw") == DistortionSpec::cpw(0.71));
    CHECK(parse_distortion("cpw:0.5").eta == 0.5);
    CHECK_THROWS_AS(parse_distortion("wang:0.3"), ConfigError);

    const DistortionSpec spec = DistortionSpec::cvar(0.25);
    CHECK(distortion_from_json(to_json(spec)) == spec);
    CHECK(distortion_from_json(nlohmann::json{{"kind", "cvar"}, {"alpha", 0.1}}) == DistortionSpec::cvar(0.1));
}

TEST_CASE("sample_quantile_levels")
{
    Rng rng = make_stream(1, "t");
    const Vector c = sample_quantile_levels(DistortionSpec::cvar(0.1), 8, rng);
    CHECK(c.size() == 8);
    CHECK((c.array() >= 0.0).all());
    CHECK((c.array() <= 0.1).all());

    const Vector e = sample_quantile_levels(DistortionSpec::expectation(), 100000, rng);
    CHECK((e.array() >= 0.0).all());
    CHECK((e.array() <= 1.0).all());
    CHECK(e.mean() == doctest::Approx(0.5).epsilon(0.01));

    const Vector p = sample_quantile_levels(DistortionSpec::cpw(), 1000, rng);
    CHECK((p.array() >= 0.0).all());
    CHECK((p.array() <= 1.0).all());

    CHECK_THROWS_AS(sample_quantile_levels(DistortionSpec::cvar(0.1), 0, rng), UsageError);
}

TEST_CASE("cpw weighting")
{
    // 0.5^0.71 / (2 * 0.5^0.71)^(1/0.71) by hand.
    CHECK(cpw_weight(0.5, 0.71) == doctest::Approx(0.4606).epsilon(1e-3));
    CHECK(cpw_weight(0.0, 0.71) == 0.0);
    CHECK(cpw_weight(1.0, 0.71) == doctest::Approx(1.0));
    CHECK(cpw_weight(0.3, 1.0) == doctest::Approx(0.3));
}

TEST_CASE("distorted value: constant quantile function is exact")
{
    const auto constant = [](double) { return -3.25; };
    for (const auto& spec : {DistortionSpec::cvar(0.1), DistortionSpec::expectation(), DistortionSpec::cpw()})
        for (std::uint64_t seed = 0; seed < 10; ++seed)
            for (Index k : {1, 7, 100}) {
                Rng rng = make_stream(seed, "const");
                CHECK(distorted_value_estimate(constant, spec, k, rng) == -3.25);
            }
}

TEST_CASE("distorted value: uniform returns")
{
    const auto identity = [](double t) { return t; };
    Rng rng = make_stream(2, "t");
    CHECK(distorted_value_estimate(identity, DistortionSpec::cvar(0.1), 100000, rng) ==
          doctest::Approx(0.05).epsilon(0.01));
    CHECK(std::abs(distorted_value_estimate(identity, DistortionSpec::expectation(), 10000, rng) - 0.5) < 0.01);
}

TEST_CASE("distorted value: normal CVaR matches quadrature within 3 sigma / sqrt(K)")
{
    const double oracle = normal_cvar_quadrature(0.1);
    CHECK(oracle == doctest::Approx(-1.7550).epsilon(1e-4));
    // Closed form -phi(z_0.1) / 0.1 as a second opinion.
    const double z = normal_quantile(0.1);
    CHECK(oracle == doctest::Approx(-std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi) / 0.1).epsilon(1e-9));

    const Index k = 1000;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng = make_stream(seed, "normal-cvar");
        const Vector levels = sample_quantile_levels(DistortionSpec::cvar(0.1), k, rng);
        Vector q(k);
        for (Index i = 0; i < k; ++i)
            q(i) = normal_quantile(levels(i));
        const double est = distorted_value_estimate(normal_quantile, levels);
        const double sd = std::sqrt((q.array() - q.mean()).square().sum() / double(k - 1));
        CHECK(std::abs(est - oracle) < 3.0 * sd / std::sqrt(double(k)));
    }
}

TEST_CASE("distorted value: monotone in the quantile function with shared levels")
{
    Rng rng = make_stream(3, "t");
    const Vector levels = sample_quantile_levels(DistortionSpec::cvar(0.3), 50, rng);
    const auto f1 = [](double t) { return t * t; };
    const auto f2 = [](double t) { return t * t + 0.1 * t; };
    CHECK(distorted_value_estimate(f1, levels) <= distorted_value_estimate(f2, levels));
}

TEST_CASE("distorted value: more risk aversion gives lower values for increasing quantile functions")
{
    const auto f = [](double t) { return std::log(t + 0.01); };
    double prev = -1e9;
    for (double alpha : {0.05, 0.1, 0.25, 0.5, 1.0}) {
        Rng rng = make_stream(4, "t");
        const double est = distorted_value_estimate(f, DistortionSpec::cvar(alpha), 200000, rng);
        CHECK(est > prev);
        prev = est;
    }
}

TEST_CASE("empirical cvar")
{
    std::vector<double> r{7, 3, 10, 1, 5, 2, 9, 4, 8, 6};
    CHECK(empirical_cvar(r, 0.2) == 1.5);
    CHECK(empirical_cvar(r, 0.1) == 1.0);
    CHECK(empirical_cvar(r, 0.01) == 1.0);
    CHECK(empirical_cvar(r, 1.0) == 5.5);
    CHECK(empirical_cvar(r, 0.3) == 2.0);

    std::vector<double> same(13, -4.0);
    for (double a : {0.05, 0.1, 0.5, 1.0})
        CHECK(empirical_cvar(same, a) == -4.0);

    CHECK_THROWS_AS(empirical_cvar(std::vector<double>{}, 0.1), UsageError);
    CHECK_THROWS_AS(empirical_cvar(r, 0.0), ConfigError);
}
