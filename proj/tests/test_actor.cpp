#include <doctest.h>

#include <cmath>

#include "oraac/actor.hpp"

using namespace oraac;

namespace {

Matrix gaussian(Index r, Index c, Rng& rng)
{
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i)
        m(i) = standard_normal(rng);
    return m;
}

PolicyConfig policy_cfg(PolicyMode mode, double lambda, std::vector<Index> hidden = {8, 8})
{
    PolicyConfig c;
    c.mode = mode;
    c.lambda = lambda;
    c.hidden = std::move(hidden);
    return c;
}

CriticConfig critic_cfg()
{
    CriticConfig c;
    c.embed_width = 4;
    c.merge_width = 4;
    c.head_hidden = 4;
    return c;
}

// xi saturated at +1: zero output weights, large output bias.
PerturbationPolicy saturated(PolicyMode mode, double lambda, Rng& rng)
{
    PerturbationPolicy p(policy_cfg(mode, lambda), ActionBox::symmetric(1), rng);
    auto& out = p.params().net(0).layers().back();
    out.weight.setZero();
    out.bias.setConstant(40.0);
    return p;
}

// A critic whose value depends on the action only: Z = a + shift(tau), where
// shift is 0, or 1 - cos(pi tau) when `tau_increasing`.
QuantileCritic probe_critic(bool tau_increasing, Rng& rng)
{
    QuantileCritic c(critic_cfg(), rng);
    auto& p = c.params();
    for (std::size_t n = 0; n < p.size(); ++n)
        p.net(n).set_zero();
    auto& sa = p.net(QuantileCritic::kAction).layers();
    sa[0].weight(0, 0) = 1.0;
    sa[0].bias(0) = 2.0;  // a + 2 > 0 on the box
    sa[1].weight(0, 0) = 1.0;
    auto& m = p.net(QuantileCritic::kMerge).layers();
    m[0].weight(0, 4) = 1.0;  // first action feature
    m[1].weight(0, 0) = 1.0;
    m[0].bias(1) = 1.0;  // constant channel
    m[1].weight(1, 1) = 1.0;
    auto& t = p.net(QuantileCritic::kTau).layers();
    t[0].bias(0) = 1.0;
    if (tau_increasing) {
        t[0].weight(1, 0) = -1.0;
        t[0].bias(1) = 1.0;
    }
    auto& h = p.net(QuantileCritic::kHead).layers();
    h[0].weight(0, 0) = 1.0;
    h[0].weight(1, 1) = 1.0;
    h[1].weight(0, 0) = 1.0;
    h[1].weight(0, 1) = 1.0;
    h[1].bias(0) = -2.0;
    return c;
}

}  // namespace

TEST_CASE("act: composition, clipping and the imitation limit")
{
    Rng rng = make_stream(1, "t");
    const auto p = saturated(PolicyMode::oraac, 0.25, rng);
    const Vector s = Vector::Zero(2);
    CHECK(p.act(s, Vector::Constant(1, 0.5))(0) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(p.act(s, Vector::Constant(1, 0.9))(0) == 1.0);

    const PerturbationPolicy imitate(policy_cfg(PolicyMode::oraac, 0.0), ActionBox::symmetric(1), rng);
    for (double b : {-0.8, 0.0, 0.33})
        CHECK(imitate.act(Vector(gaussian(2, 1, rng).col(0)), Vector::Constant(1, b).eval())(0) == b);

    const PerturbationPolicy wild(policy_cfg(PolicyMode::oraac, 1.0), ActionBox::symmetric(1), rng);
    const Matrix a = wild.act(Matrix(gaussian(2, 100, rng) * 10.0), Matrix(gaussian(1, 100, rng).array().tanh()));
    CHECK((a.array().abs() <= 1.0).all());
}

TEST_CASE("raac mode ignores the behavior action and requires lambda = 1")
{
    Rng rng = make_stream(2, "t");
    CHECK_THROWS_AS(PerturbationPolicy(policy_cfg(PolicyMode::raac, 0.25), ActionBox::symmetric(1), rng), ConfigError);
    const PerturbationPolicy p(policy_cfg(PolicyMode::raac, 1.0), ActionBox::symmetric(1), rng);
    const Matrix s = gaussian(2, 3, rng);
    CHECK(p.act(s, Matrix()) == p.perturbation(s, Matrix()));
    CHECK(p.params().net(0).input_width() == 2);
}

TEST_CASE("actor loss: zero critic")
{
    Rng rng = make_stream(3, "t");
    QuantileCritic critic(critic_cfg(), rng);
    critic.params().net(QuantileCritic::kHead).set_zero();
    const PerturbationPolicy p(policy_cfg(PolicyMode::oraac, 0.25), ActionBox::symmetric(1), rng);
    GradSet<double> g = GradSet<double>::zeros_like(p.params());
    const double l = actor_loss(p, critic, gaussian(2, 5, rng), gaussian(1, 5, rng).array().tanh(),
                                Vector::LinSpaced(4, 0.01, 0.09), &g);
    CHECK(l == 0.0);
    CHECK(g.all_zero());
    CHECK_THROWS_AS(actor_loss(p, critic, Matrix(2, 0), Matrix(1, 0), Vector::Ones(1), &g), UsageError);
}

TEST_CASE("actor loss: linear critic pushes actions up")
{
    Rng rng = make_stream(4, "t");
    const QuantileCritic critic = probe_critic(false, rng);
    const Matrix s = gaussian(2, 5, rng);
    Matrix a(1, 5);
    a << -0.9, -0.2, 0.0, 0.4, 0.95;
    const Vector taus = Vector::LinSpaced(3, 0.1, 0.9);
    CHECK((critic.values(s, a, taus).rowwise() - a.row(0)).cwiseAbs().maxCoeff() < 1e-12);

    // loss = -mean(a); d loss / d a_b = -1 / B.
    CriticTape tape;
    critic.values(s, a, taus, &tape);
    const Matrix da = critic.backward(tape, Matrix::Constant(3, 5, -1.0 / 15.0), nullptr);
    CHECK((da.array() + 1.0 / 5.0).abs().maxCoeff() < 1e-12);

    const PerturbationPolicy p(policy_cfg(PolicyMode::raac, 1.0), ActionBox::symmetric(1), rng);
    CHECK(actor_loss(p, critic, s, Matrix(), taus, nullptr) == doctest::Approx(-p.act(s, Matrix()).mean()));
}

TEST_CASE("actor loss: gradient matches finite differences over 100 draws")
{
    for (int draw = 0; draw < 100; ++draw) {
        Rng rng = make_stream(400, "actor-fd", draw);
        const bool raac = draw % 2 == 1;
        const PolicyConfig pc = raac ? policy_cfg(PolicyMode::raac, 1.0) : policy_cfg(PolicyMode::oraac, 0.25);
        const PerturbationPolicy policy(pc, ActionBox::symmetric(1), rng);
        CriticConfig cc = critic_cfg();
        cc.embed_width = 8;
        const QuantileCritic critic(cc, rng);
        const Matrix s = gaussian(2, 4, rng);
        Matrix b(1, 4);
        for (Index j = 0; j < 4; ++j)
            b(0, j) = uniform01(rng) - 0.5;  // keeps b + lambda xi inside the box
        const Vector taus = sample_quantile_levels(DistortionSpec::cvar(0.1), 8, rng);
        const LossClosure<double> loss = [&](const ParamSet<double>& p, GradSet<double>* g) {
            return actor_loss(PerturbationPolicy(pc, ActionBox::symmetric(1), p), critic, s, b, taus, g);
        };
        const FdReport rep = finite_diff_check(policy.params(), loss, 1e-4);
        CHECK_MESSAGE(rep.passed, "draw " << draw << " rel " << rep.max_relative_error << " nonsmooth " << rep.nonsmooth << "/" << rep.checked);
    }
}

TEST_CASE("actor loss: gradients never reach the critic or the vae")
{
    Rng rng = make_stream(5, "t");
    const QuantileCritic critic(critic_cfg(), rng);
    VaeConfig vc;
    vc.hidden = {8};
    const BehaviorVae vae(vc, ActionBox::symmetric(1), rng);
    const PerturbationPolicy p(policy_cfg(PolicyMode::oraac, 0.25), ActionBox::symmetric(1), rng);
    const auto critic_before = critic.params();
    const auto vae_before = vae.params();
    GradSet<double> g = GradSet<double>::zeros_like(p.params());
    actor_loss(p, &vae, critic, gaussian(2, 6, rng), DistortionSpec::cvar(0.1), 8, rng, &g);
    CHECK(!g.all_zero());
    CHECK(critic.params() == critic_before);
    CHECK(vae.params() == vae_before);
}

TEST_CASE("actor loss: distortions agree on tau-constant critics and order on increasing ones")
{
    Rng rng = make_stream(6, "t");
    const PerturbationPolicy p(policy_cfg(PolicyMode::raac, 1.0), ActionBox::symmetric(1), rng);
    const Matrix s = gaussian(2, 7, rng);

    const QuantileCritic flat = probe_critic(false, rng);
    Rng r1 = make_stream(10, "d"), r2 = make_stream(10, "d");
    CHECK(actor_loss(p, nullptr, flat, s, DistortionSpec::cvar(0.1), 8, r1, nullptr) ==
          actor_loss(p, nullptr, flat, s, DistortionSpec::expectation(), 8, r2, nullptr));

    const QuantileCritic rising = probe_critic(true, rng);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng a = make_stream(seed, "d"), b = make_stream(seed, "d");
        CHECK(actor_loss(p, nullptr, rising, s, DistortionSpec::cvar(0.1), 8, a, nullptr) >=
              actor_loss(p, nullptr, rising, s, DistortionSpec::expectation(), 8, b, nullptr));
    }
}

TEST_CASE("eval action")
{
    Rng rng = make_stream(7, "t");
    const PerturbationPolicy raac(policy_cfg(PolicyMode::raac, 1.0), ActionBox::symmetric(1), rng);
    const Vector s = gaussian(2, 1, rng).col(0);
    const Vector first = eval_action(raac, nullptr, s, rng);
    for (int i = 0; i < 5; ++i)
        CHECK(eval_action(raac, nullptr, s, rng) == first);

    VaeConfig vc;
    vc.hidden = {8};
    BehaviorVae vae(vc, ActionBox::symmetric(1), rng);
    const PerturbationPolicy oraac(policy_cfg(PolicyMode::oraac, 0.25), ActionBox::symmetric(1), rng);
    Rng a = make_stream(3, "e"), b = make_stream(3, "e");
    for (int i = 0; i < 5; ++i)
        CHECK(eval_action(oraac, &vae, s, a) == eval_action(oraac, &vae, s, b));
    CHECK_THROWS_AS(eval_action(oraac, nullptr, s, a), UsageError);

    vae.params().net(BehaviorVae::kDecoder).set_zero();
    const PerturbationPolicy imitate(policy_cfg(PolicyMode::oraac, 0.0), ActionBox::symmetric(1), rng);
    CHECK(eval_action(imitate, &vae, s, a)(0) == 0.0);
    CHECK(eval_action(imitate, &vae, s, a, true)(0) == 0.0);
}
