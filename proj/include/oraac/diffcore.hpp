#pragma once

// Reverse-mode differentiable dense networks.
//
// Every network in the project is an Mlp: a stack of affine layers, each
// followed by an elementwise nonlinearity. Batches are column-major: an input
// of shape (in x B) holds B samples, one per column. A forward pass may record
// an MlpTape, from which backward() computes exact gradients of <upstream, out>
// with respect to every weight and bias and with respect to the input.
//
// Parameter bundles (ParamSet) are ordered, named collections of Mlp. The
// optimizer, soft target updates, serialization and finite-difference checks
// all operate on ParamSet/GradSet pairs, so a model only needs to expose its
// bundle to get those for free.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oraac/errors.hpp"
#include "oraac/rng.hpp"

namespace oraac {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

enum class Activation { identity, relu, tanh };

inline const char* to_string(Activation act)
{
    switch (act) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    default: return "identity";
    }
}

inline Activation activation_from_string(const std::string& name)
{
    if (name == "relu")
        return Activation::relu;
    if (name == "tanh")
        return Activation::tanh;
    if (name == "identity")
        return Activation::identity;
    throw ConfigError("unknown activation '" + name + "'");
}

template <typename Scalar>
struct Dense {
    MatrixX<Scalar> weight;  // out x in
    VectorX<Scalar> bias;    // out
    Activation activation = Activation::identity;

    Index in() const { return weight.cols(); }
    Index out() const { return weight.rows(); }
};

template <typename Scalar>
struct DenseGrad {
    MatrixX<Scalar> weight;
    VectorX<Scalar> bias;
};

template <typename Scalar>
using MlpGrad = std::vector<DenseGrad<Scalar>>;

/// Activations of one forward pass: values[0] is the input, values[l + 1] the
/// output of layer l.
template <typename Scalar>
struct MlpTape {
    std::vector<MatrixX<Scalar>> values;

    bool empty() const { return values.empty(); }
    const MatrixX<Scalar>& output() const { return values.back(); }
};

template <typename Scalar>
class Mlp {
public:
    Mlp() = default;

    explicit Mlp(std::vector<Dense<Scalar>> layers) : layers_(std::move(layers)) { validate(); }

    /// Weights and biases drawn uniformly from +-1/sqrt(fan_in).
    static Mlp random(std::span<const Index> widths, Activation hidden, Activation output, Rng& rng)
    {
        if (widths.size() < 2)
            throw ConfigError("an Mlp needs at least an input and an output width");
        std::vector<Dense<Scalar>> layers;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            const Index fan_in = widths[l];
            const Index fan_out = widths[l + 1];
            if (fan_in < 1 || fan_out < 1)
                throw ConfigError("layer widths must be positive");
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            std::uniform_real_distribution<double> dist(-bound, bound);
            Dense<Scalar> layer;
            layer.weight.resize(fan_out, fan_in);
            layer.bias.resize(fan_out);
            for (Index j = 0; j < fan_in; ++j)
                for (Index i = 0; i < fan_out; ++i)
                    layer.weight(i, j) = static_cast<Scalar>(dist(rng));
            for (Index i = 0; i < fan_out; ++i)
                layer.bias(i) = static_cast<Scalar>(dist(rng));
            layer.activation = (l + 2 == widths.size()) ? output : hidden;
            layers.push_back(std::move(layer));
        }
        return Mlp(std::move(layers));
    }

    static Mlp random(std::initializer_list<Index> widths, Activation hidden, Activation output, Rng& rng)
    {
        std::vector<Index> w(widths);
        return random(std::span<const Index>(w), hidden, output, rng);
    }

    Index input_width() const { return layers_.empty() ? 0 : layers_.front().in(); }
    Index output_width() const { return layers_.empty() ? 0 : layers_.back().out(); }
    std::size_t depth() const { return layers_.size(); }

    const std::vector<Dense<Scalar>>& layers() const { return layers_; }
    std::vector<Dense<Scalar>>& layers() { return layers_; }
    const Dense<Scalar>& layer(std::size_t l) const { return layers_.at(l); }
    Dense<Scalar>& layer(std::size_t l) { return layers_.at(l); }

    Index parameter_count() const
    {
        Index n = 0;
        for (const auto& layer : layers_)
            n += layer.weight.size() + layer.bias.size();
        return n;
    }

    void validate() const
    {
        if (layers_.empty())
            throw ConfigError("an Mlp needs at least one layer");
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& layer = layers_[l];
            if (layer.bias.size() != layer.weight.rows())
                throw ConfigError("layer " + std::to_string(l) + ": bias width does not match weight rows");
            if (l > 0 && layer.in() != layers_[l - 1].out())
                throw ConfigError("layer " + std::to_string(l) + ": input width does not match previous output");
        }
    }

    MatrixX<Scalar> forward(const Eigen::Ref<const MatrixX<Scalar>>& input, MlpTape<Scalar>* tape = nullptr) const
    {
        if (input.rows() != input_width())
            throw ConfigError("Mlp input has " + std::to_string(input.rows()) + " rows, expected " +
                              std::to_string(input_width()));
        if (tape) {
            tape->values.clear();
            tape->values.reserve(layers_.size() + 1);
            tape->values.emplace_back(input);
        }
        MatrixX<Scalar> x = input;
        for (const auto& layer : layers_) {
            MatrixX<Scalar> y = layer.weight * x;
            y.colwise() += layer.bias;
            apply_activation(layer.activation, y);
            if (tape)
                tape->values.push_back(y);
            x = std::move(y);
        }
        return x;
    }

    /// Accumulates d<upstream, output>/dparams into `grad` (when non-null) and
    /// returns d<upstream, output>/dinput.
    MatrixX<Scalar> backward(const MlpTape<Scalar>& tape, const Eigen::Ref<const MatrixX<Scalar>>& upstream,
                             MlpGrad<Scalar>* grad) const
    {
        if (tape.values.size() != layers_.size() + 1)
            throw UsageError("backward called without a taped forward pass");
        if (upstream.rows() != output_width() || upstream.cols() != tape.output().cols())
            throw ConfigError("upstream gradient shape does not match the taped output");
        if (grad && grad->size() != layers_.size())
            throw ConfigError("gradient buffer is not congruent with the network");

        MatrixX<Scalar> delta = upstream;
        for (std::size_t l = layers_.size(); l-- > 0;) {
            const auto& layer = layers_[l];
            const auto& out = tape.values[l + 1];
            switch (layer.activation) {
            case Activation::relu:
                delta = (out.array() > Scalar(0)).select(delta, Scalar(0));
                break;
            case Activation::tanh:
                delta.array() *= Scalar(1) - out.array().square();
                break;
            case Activation::identity:
                break;
            }
            if (grad) {
                (*grad)[l].weight.noalias() += delta * tape.values[l].transpose();
                (*grad)[l].bias += delta.rowwise().sum();
            }
            delta = layer.weight.transpose() * delta;
        }
        return delta;
    }

    MlpGrad<Scalar> zero_grad() const
    {
        MlpGrad<Scalar> g(layers_.size());
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            g[l].weight = MatrixX<Scalar>::Zero(layers_[l].weight.rows(), layers_[l].weight.cols());
            g[l].bias = VectorX<Scalar>::Zero(layers_[l].bias.size());
        }
        return g;
    }

    void set_zero()
    {
        for (auto& layer : layers_) {
            layer.weight.setZero();
            layer.bias.setZero();
        }
    }

private:
    static void apply_activation(Activation act, MatrixX<Scalar>& y)
    {
        switch (act) {
        case Activation::relu: y = y.cwiseMax(Scalar(0)); break;
        case Activation::tanh: y = y.array().tanh().matrix(); break;
        case Activation::identity: break;
        }
    }

    std::vector<Dense<Scalar>> layers_;
};

/// Visits every weight and bias of `net` as a flat column vector.
template <typename Scalar, typename Fn>
void for_each_tensor(Mlp<Scalar>& net, Fn&& fn)
{
    for (auto& layer : net.layers()) {
        Eigen::Map<VectorX<Scalar>> w(layer.weight.data(), layer.weight.size());
        fn(w);
        Eigen::Map<VectorX<Scalar>> b(layer.bias.data(), layer.bias.size());
        fn(b);
    }
}

template <typename Scalar>
class GradSet;

/// Ordered, named collection of networks making up one model.
template <typename Scalar>
class ParamSet {
public:
    std::size_t add(std::string name, Mlp<Scalar> net)
    {
        for (const auto& n : names_)
            if (n == name)
                throw ConfigError("duplicate network name '" + name + "'");
        names_.push_back(std::move(name));
        nets_.push_back(std::move(net));
        return nets_.size() - 1;
    }

    std::size_t size() const { return nets_.size(); }
    const std::vector<std::string>& names() const { return names_; }

    Mlp<Scalar>& net(std::size_t i) { return nets_.at(i); }
    const Mlp<Scalar>& net(std::size_t i) const { return nets_.at(i); }

    std::size_t index_of(const std::string& name) const
    {
        for (std::size_t i = 0; i < names_.size(); ++i)
            if (names_[i] == name)
                return i;
        throw ConfigError("no network named '" + name + "'");
    }

    Index parameter_count() const
    {
        Index n = 0;
        for (const auto& net : nets_)
            n += net.parameter_count();
        return n;
    }

    /// Same names, same layer shapes and activations.
    bool congruent(const ParamSet& other) const
    {
        if (names_ != other.names_)
            return false;
        for (std::size_t i = 0; i < nets_.size(); ++i) {
            const auto& a = nets_[i].layers();
            const auto& b = other.nets_[i].layers();
            if (a.size() != b.size())
                return false;
            for (std::size_t l = 0; l < a.size(); ++l)
                if (a[l].weight.rows() != b[l].weight.rows() || a[l].weight.cols() != b[l].weight.cols() ||
                    a[l].activation != b[l].activation)
                    return false;
        }
        return true;
    }

    bool all_finite() const
    {
        for (const auto& net : nets_)
            for (const auto& layer : net.layers())
                if (!layer.weight.allFinite() || !layer.bias.allFinite())
                    return false;
        return true;
    }

    VectorX<Scalar> flatten() const
    {
        VectorX<Scalar> flat(parameter_count());
        Index offset = 0;
        for (const auto& net : nets_)
            for (const auto& layer : net.layers()) {
                flat.segment(offset, layer.weight.size()) =
                    Eigen::Map<const VectorX<Scalar>>(layer.weight.data(), layer.weight.size());
                offset += layer.weight.size();
                flat.segment(offset, layer.bias.size()) = layer.bias;
                offset += layer.bias.size();
            }
        return flat;
    }

    void assign(const Eigen::Ref<const VectorX<Scalar>>& flat)
    {
        if (flat.size() != parameter_count())
            throw ConfigError("flat parameter vector has the wrong length");
        Index offset = 0;
        for (auto& net : nets_)
            for_each_tensor(net, [&](auto& t) {
                t = flat.segment(offset, t.size());
                offset += t.size();
            });
    }

    bool operator==(const ParamSet& other) const
    {
        return congruent(other) && flatten() == other.flatten();
    }

private:
    std::vector<std::string> names_;
    std::vector<Mlp<Scalar>> nets_;
};

/// Gradients shaped like a ParamSet.
template <typename Scalar>
class GradSet {
public:
    GradSet() = default;

    static GradSet zeros_like(const ParamSet<Scalar>& params)
    {
        GradSet g;
        for (std::size_t i = 0; i < params.size(); ++i)
            g.nets_.push_back(params.net(i).zero_grad());
        return g;
    }

    std::size_t size() const { return nets_.size(); }
    MlpGrad<Scalar>& net(std::size_t i) { return nets_.at(i); }
    const MlpGrad<Scalar>& net(std::size_t i) const { return nets_.at(i); }

    void reset()
    {
        for (auto& net : nets_)
            for (auto& layer : net) {
                layer.weight.setZero();
                layer.bias.setZero();
            }
    }

    bool congruent(const ParamSet<Scalar>& params) const
    {
        if (nets_.size() != params.size())
            return false;
        for (std::size_t i = 0; i < nets_.size(); ++i) {
            const auto& layers = params.net(i).layers();
            if (nets_[i].size() != layers.size())
                return false;
            for (std::size_t l = 0; l < layers.size(); ++l)
                if (nets_[i][l].weight.rows() != layers[l].weight.rows() ||
                    nets_[i][l].weight.cols() != layers[l].weight.cols() ||
                    nets_[i][l].bias.size() != layers[l].bias.size())
                    return false;
        }
        return true;
    }

    template <typename Fn>
    void for_each(Fn&& fn) const
    {
        for (const auto& net : nets_)
            for (const auto& layer : net) {
                fn(Eigen::Map<const VectorX<Scalar>>(layer.weight.data(), layer.weight.size()));
                fn(Eigen::Map<const VectorX<Scalar>>(layer.bias.data(), layer.bias.size()));
            }
    }

    VectorX<Scalar> flatten() const
    {
        Index n = 0;
        for_each([&](const auto& t) { n += t.size(); });
        VectorX<Scalar> flat(n);
        Index offset = 0;
        for_each([&](const auto& t) {
            flat.segment(offset, t.size()) = t;
            offset += t.size();
        });
        return flat;
    }

    bool all_finite() const
    {
        bool ok = true;
        for_each([&](const auto& t) { ok = ok && t.allFinite(); });
        return ok;
    }

    bool all_zero() const
    {
        bool zero = true;
        for_each([&](const auto& t) { zero = zero && (t.array() == Scalar(0)).all(); });
        return zero;
    }

    Scalar max_abs() const
    {
        Scalar m(0);
        for_each([&](const auto& t) {
            if (t.size() > 0)
                m = std::max(m, t.cwiseAbs().maxCoeff());
        });
        return m;
    }

private:
    std::vector<MlpGrad<Scalar>> nets_;
};

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
    AdamHyper hyper;
    long step = 0;
    VectorX<Scalar> first_moment;
    VectorX<Scalar> second_moment;

    AdamState() = default;
    AdamState(const ParamSet<Scalar>& params, AdamHyper h)
        : hyper(h),
          first_moment(VectorX<Scalar>::Zero(params.parameter_count())),
          second_moment(VectorX<Scalar>::Zero(params.parameter_count()))
    {
    }
};

/// Bias-corrected Adam update. Rejects the whole update if any gradient entry
/// is nonfinite; parameters and state are then left untouched.
template <typename Scalar>
void adam_step(ParamSet<Scalar>& params, const GradSet<Scalar>& grads, AdamState<Scalar>& state)
{
    if (!grads.congruent(params))
        throw ConfigError("adam_step: gradients are not congruent with parameters");
    if (state.first_moment.size() != params.parameter_count())
        throw ConfigError("adam_step: optimizer state does not match parameters");
    if (!grads.all_finite())
        throw NumericError("adam_step: nonfinite gradient entry, update rejected");

    const VectorX<Scalar> g = grads.flatten();
    const auto& h = state.hyper;
    state.step += 1;
    state.first_moment = Scalar(h.beta1) * state.first_moment + Scalar(1 - h.beta1) * g;
    state.second_moment = Scalar(h.beta2) * state.second_moment + Scalar(1 - h.beta2) * g.cwiseAbs2();
    const Scalar correction1 = Scalar(1) - std::pow(Scalar(h.beta1), Scalar(state.step));
    const Scalar correction2 = Scalar(1) - std::pow(Scalar(h.beta2), Scalar(state.step));

    VectorX<Scalar> flat = params.flatten();
    flat.array() -= Scalar(h.learning_rate) * (state.first_moment.array() / correction1) /
                    ((state.second_moment.array() / correction2).sqrt() + Scalar(h.epsilon));
    params.assign(flat);
}

/// target <- mu * online + (1 - mu) * target.
template <typename Scalar>
void soft_update(ParamSet<Scalar>& target, const ParamSet<Scalar>& online, double mu)
{
    if (!(mu >= 0.0 && mu <= 1.0))
        throw ConfigError("soft_update: mu must lie in [0, 1]");
    if (!target.congruent(online))
        throw ConfigError("soft_update: target and online parameters are not congruent");
    if (mu == 0.0)
        return;
    if (mu == 1.0) {
        target = online;
        return;
    }
    target.assign(Scalar(mu) * online.flatten() + Scalar(1 - mu) * target.flatten());
}

/// Loss evaluated at `params`; when `grad` is non-null it also receives the
/// reverse-mode gradient (already zeroed and congruent).
template <typename Scalar>
using LossClosure = std::function<Scalar(const ParamSet<Scalar>&, GradSet<Scalar>*)>;

struct FdOptions {
    double step = 1e-4;
    /// Denominator floor of the relative error, so that entries which are zero
    /// analytically are judged on absolute agreement.
    double floor = 1e-6;
    /// Check at most this many coordinates (chosen uniformly); 0 checks all.
    Index max_checks = 0;
    std::uint64_t seed = 0;
    /// A coordinate whose central differences at h and h/2 disagree has a ReLU
    /// kink within reach. The step is shrunk (down to step/1000) until they
    /// agree; coordinates where they never do are skipped, and the check fails
    /// when more than this fraction is skipped.
    double max_nonsmooth_fraction = 0.05;
};

struct FdReport {
    double max_relative_error = 0.0;
    Index worst_index = -1;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    Index checked = 0;
    Index nonsmooth = 0;
    bool passed = true;
};

/// Compares reverse-mode gradients with central differences coordinate by
/// coordinate; reports the worst relative error.
template <typename Scalar>
FdReport finite_diff_check(const ParamSet<Scalar>& params, const LossClosure<Scalar>& loss, double tolerance,
                           const FdOptions& options = {})
{
    GradSet<Scalar> analytic = GradSet<Scalar>::zeros_like(params);
    loss(params, &analytic);
    const VectorX<Scalar> g = analytic.flatten();
    const VectorX<Scalar> base = params.flatten();

    std::vector<Index> coords(static_cast<std::size_t>(base.size()));
    for (Index i = 0; i < base.size(); ++i)
        coords[static_cast<std::size_t>(i)] = i;
    if (options.max_checks > 0 && options.max_checks < base.size()) {
        Rng rng = make_stream(options.seed, "finite_diff_check");
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(static_cast<std::size_t>(options.max_checks));
        std::sort(coords.begin(), coords.end());
    }

    FdReport report;
    ParamSet<Scalar> probe = params;
    VectorX<Scalar> shifted = base;
    const auto central = [&](Index i, double h) {
        shifted(i) = base(i) + Scalar(h);
        probe.assign(shifted);
        const Scalar up = loss(probe, nullptr);
        shifted(i) = base(i) - Scalar(h);
        probe.assign(shifted);
        const Scalar down = loss(probe, nullptr);
        shifted(i) = base(i);
        return static_cast<double>((up - down) / Scalar(2 * h));
    };
    for (Index i : coords) {
        const double numeric = central(i, options.step);
        const double exact = static_cast<double>(g(i));
        const double denom = std::max({std::abs(exact), std::abs(numeric), options.floor});
        const double rel = std::abs(exact - numeric) / denom;
        ++report.checked;
        double numeric_used = numeric;
        double rel_used = rel;
        if (rel >= tolerance) {
            // Shrink the step until the kink is out of reach.
            bool smooth = false;
            for (double h = options.step; h >= 1e-3 * options.step && !smooth; h *= 0.1) {
                const double full = h == options.step ? numeric : central(i, h);
                const double half = central(i, 0.5 * h);
                if (std::abs(half - full) / std::max({std::abs(half), std::abs(full), options.floor}) < tolerance) {
                    smooth = true;
                    numeric_used = full;
                    rel_used = std::abs(exact - full) / std::max({std::abs(exact), std::abs(full), options.floor});
                }
            }
            if (!smooth) {
                ++report.nonsmooth;
                continue;
            }
        }
        if (rel_used > report.max_relative_error || report.worst_index < 0) {
            report.max_relative_error = rel_used;
            report.worst_index = i;
            report.analytic_at_worst = exact;
            report.numeric_at_worst = numeric_used;
        }
    }
    report.passed = report.max_relative_error < tolerance &&
                    static_cast<double>(report.nonsmooth) <= options.max_nonsmooth_fraction * static_cast<double>(report.checked);
    return report;
}

}  // namespace oraac
