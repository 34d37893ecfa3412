#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oraac/vae.hpp"

using namespace oraac;

namespace {

VaeConfig small(Index sd = 2, Index ad = 1)
{
    VaeConfig c;
    c.state_dim = sd;
    c.action_dim = ad;
    c.hidden = {8, 8};
    return c;
}

Matrix gaussian(Index r, Index c, Rng& rng)
{
    Matrix m(r, c);
    for (Index i = 0; i < m.size(); ++i)
        m(i) = standard_normal(rng);
    return m;
}

}  // namespace

TEST_CASE("latent dimension defaults to twice the action dimension")
{
    CHECK(small(2, 1).latent() == 2);
    CHECK(small(3, 3).latent() == 6);
    VaeConfig c = small();
    c.latent_dim = 5;
    CHECK(c.latent() == 5);
}

TEST_CASE("encode: zero encoder gives the standard normal posterior")
{
    Rng rng = make_stream(1, "t");
    BehaviorVae vae(small(), ActionBox::symmetric(1), rng);
    vae.params().net(BehaviorVae::kEncoder).set_zero();
    const Posterior p = vae.encode(gaussian(2, 3, rng), gaussian(1, 3, rng));
    CHECK(p.mu.isZero(0.0));
    CHECK(p.sigma.isOnes(0.0));
}

TEST_CASE("encode: deterministic, finite and positive sigma")
{
    Rng rng = make_stream(2, "t");
    const BehaviorVae vae(small(), ActionBox::symmetric(1), rng);
    const Matrix s = gaussian(2, 10, rng), a = gaussian(1, 10, rng);
    const Posterior p1 = vae.encode(s, a), p2 = vae.encode(s, a);
    CHECK(p1.mu == p2.mu);
    CHECK(p1.sigma == p2.sigma);
    CHECK(p1.mu.allFinite());
    CHECK((p1.sigma.array() > 0.0).all());
}

TEST_CASE("reparameterized sampling")
{
    Rng rng = make_stream(3, "t");
    Matrix mu(2, 1);
    mu << 0.3, -1.2;
    const Matrix z = reparam_sample(mu, Matrix::Constant(2, 1, 1e-12), rng);
    CHECK((z - mu).cwiseAbs().maxCoeff() < 1e-10);

    const Matrix many = reparam_sample(Matrix::Zero(2, 10000), Matrix::Ones(2, 10000), rng);
    for (Index d = 0; d < 2; ++d)
        CHECK(std::abs(many.row(d).mean()) < 4.0 / 100.0);
}

TEST_CASE("decode: zero decoder, box bounds and latent clipping")
{
    Rng rng = make_stream(4, "t");
    BehaviorVae zero(small(), ActionBox::symmetric(1), rng);
    zero.params().net(BehaviorVae::kDecoder).set_zero();
    CHECK(zero.decode(gaussian(2, 5, rng), gaussian(2, 5, rng)).isZero(0.0));
    CHECK(zero.sample(gaussian(2, 5, rng), rng).isZero(0.0));

    ActionBox box{Vector::Constant(1, -0.5), Vector::Constant(1, 2.0)};
    BehaviorVae vae(small(), box, rng);
    vae.params().net(BehaviorVae::kDecoder).layers().back().weight *= 50.0;
    const Matrix b = vae.decode(gaussian(2, 200, rng) * 5.0, gaussian(2, 200, rng));
    CHECK((b.array() >= -0.5).all());
    CHECK((b.array() <= 2.0).all());

    const Matrix s = gaussian(2, 4, rng);
    Matrix z(2, 4);
    z << 3.0, -7.0, 0.2, 0.5, -0.6, 0.1, 100.0, -0.5;
    const Matrix clipped = z.cwiseMax(-0.5).cwiseMin(0.5);
    CHECK(vae.decode(s, z) == vae.decode(s, clipped));
}

TEST_CASE("sample: reproducible for a fixed seed")
{
    Rng rng = make_stream(5, "t");
    const BehaviorVae vae(small(), ActionBox::symmetric(1), rng);
    const Matrix s = gaussian(2, 6, rng);
    Rng a = make_stream(9, "s"), b = make_stream(9, "s");
    for (int i = 0; i < 5; ++i)
        CHECK(vae.sample(s, a) == vae.sample(s, b));
}

TEST_CASE("gaussian kl")
{
    CHECK(gaussian_kl(Matrix::Zero(3, 1), Matrix::Ones(3, 1))(0) == 0.0);
    CHECK(gaussian_kl(Matrix::Ones(1, 1), Matrix::Ones(1, 1))(0) == doctest::Approx(0.5));
    CHECK(gaussian_kl(Matrix::Zero(1, 1), Matrix::Constant(1, 1, std::sqrt(std::numbers::e)))(0) ==
          doctest::Approx(0.5 * (std::numbers::e - 2.0)));
    Rng rng = make_stream(6, "t");
    for (int i = 0; i < 100; ++i) {
        const Matrix mu = gaussian(3, 1, rng);
        const Matrix sigma = gaussian(3, 1, rng).array().exp();
        CHECK(gaussian_kl(mu, sigma)(0) >= 0.0);
    }
}

TEST_CASE("vae loss: parts, reconstruction identity and empty batch")
{
    Rng rng = make_stream(7, "t");
    BehaviorVae vae(small(), ActionBox::symmetric(1), rng);
    const Matrix s = gaussian(2, 5, rng), a = gaussian(1, 5, rng).array().tanh();
    const Matrix eps = gaussian(2, 5, rng);
    const VaeLossParts parts = vae.loss(s, a, eps, nullptr);
    CHECK(parts.total == doctest::Approx(parts.reconstruction + 0.5 * parts.kl));

    // With zero noise z = mu, so reconstruction is the squared distance to D(s, mu).
    const Posterior post = vae.encode(s, a);
    const VaeLossParts det = vae.loss(s, a, Matrix::Zero(2, 5), nullptr);
    // decode without clipping: pick a large clip so decode() is the identity on z.
    VaeConfig wide = vae.config();
    wide.latent_clip = 1e6;
    const BehaviorVae unclipped(wide, vae.box(), vae.params());
    const Matrix recon = unclipped.decode(s, post.mu);
    CHECK(det.reconstruction == doctest::Approx((a - recon).squaredNorm() / 5.0).epsilon(1e-12));
    CHECK(det.kl == doctest::Approx(gaussian_kl(post.mu, post.sigma).mean()).epsilon(1e-12));

    CHECK_THROWS_AS(vae.loss(Matrix(2, 0), Matrix(1, 0), Matrix(2, 0), nullptr), UsageError);
}

TEST_CASE("vae loss: gradient matches finite differences over 100 draws")
{
    for (int draw = 0; draw < 100; ++draw) {
        Rng rng = make_stream(300, "vae-fd", draw);
        const VaeConfig cfg = small(2, 2);
        const BehaviorVae vae(cfg, ActionBox::symmetric(2), rng);
        const Matrix s = gaussian(2, 4, rng), a = gaussian(2, 4, rng).array().tanh();
        const Matrix eps = gaussian(cfg.latent(), 4, rng);
        const LossClosure<double> loss = [&](const ParamSet<double>& p, GradSet<double>* g) {
            return BehaviorVae(cfg, vae.box(), p).loss(s, a, eps, g).total;
        };
        const FdReport rep = finite_diff_check(vae.params(), loss, 1e-4);
        CHECK_MESSAGE(rep.passed, "draw " << draw << " rel " << rep.max_relative_error << " nonsmooth " << rep.nonsmooth << "/" << rep.checked);
    }
}

TEST_CASE("vae: learns a known behavior policy")
{
    // Behavior a(s) = tanh(s0) with small noise; 1-d state.
    VaeConfig cfg;
    cfg.state_dim = 1;
    cfg.action_dim = 1;
    cfg.hidden = {32, 32};
    Rng rng = make_stream(8, "t");
    BehaviorVae vae(cfg, ActionBox::symmetric(1), rng);
    AdamState<double> opt(vae.params(), {1e-3});
    double early = 0.0, late = 0.0;
    const int steps = 3000;
    for (int step = 0; step < steps; ++step) {
        Matrix s(1, 64);
        for (Index j = 0; j < 64; ++j)
            s(0, j) = 4.0 * uniform01(rng) - 2.0;
        Matrix a = s.array().tanh();
        for (Index j = 0; j < 64; ++j)
            a(0, j) += 0.02 * standard_normal(rng);
        a = a.cwiseMax(-1.0).cwiseMin(1.0);
        GradSet<double> g = GradSet<double>::zeros_like(vae.params());
        const double l = vae.loss(s, a, rng, &g).total;
        if (step < 100)
            early += l / 100.0;
        if (step >= steps - 100)
            late += l / 100.0;
        adam_step(vae.params(), g, opt);
    }
    CHECK(late < early);

    Rng eval = make_stream(9, "t");
    for (double x : {-1.7, -0.9, -0.25, 0.4, 1.1, 1.8}) {
        const Matrix s = Matrix::Constant(1, 500, x);
        const double mean = vae.sample(s, eval).mean();
        CHECK_MESSAGE(std::abs(mean - std::tanh(x)) < 0.1, "state " << x << " mean " << mean);
    }
}
