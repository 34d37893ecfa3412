#include "oraac/risk.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

namespace oraac {

void DistortionSpec::validate() const
{
    switch (kind) {
    case DistortionKind::cvar:
        if (!(alpha > 0.0 && alpha <= 1.0))
            throw ConfigError("cvar distortion requires 0 < alpha <= 1");
        break;
    case DistortionKind::cpw:
        if (!(eta > 0.0) || !std::isfinite(eta))
            throw ConfigError("cpw distortion requires eta > 0");
        break;
    case DistortionKind::expectation:
        break;
    }
}

std::string DistortionSpec::describe() const
{
    std::ostringstream out;
    switch (kind) {
    case DistortionKind::cvar: out << "cvar(" << alpha << ")"; break;
    case DistortionKind::cpw: out << "cpw(" << eta << ")"; break;
    case DistortionKind::expectation: out << "expectation"; break;
    }
    return out.str();
}

nlohmann::json to_json(const DistortionSpec& spec)
{
    switch (spec.kind) {
    case DistortionKind::cvar: return {{"kind", "cvar"}, {"alpha", spec.alpha}};
    case DistortionKind::cpw: return {{"kind", "cpw"}, {"eta", spec.eta}};
    default: return {{"kind", "expectation"}};
    }
}

DistortionSpec distortion_from_json(const nlohmann::json& doc)
{
    if (!doc.is_object() || !doc.contains("kind"))
        throw ConfigError("distortion must be an object with a \"kind\" field");
    const std::string kind = doc.at("kind").get<std::string>();
    DistortionSpec spec;
    if (kind == "cvar") {
        if (!doc.contains("alpha"))
            throw ConfigError("cvar distortion requires \"alpha\"");
        spec = DistortionSpec::cvar(doc.at("alpha").get<double>());
    } else if (kind == "cpw") {
        spec = DistortionSpec::cpw(doc.value("eta", 0.71));
    } else if (kind == "expectation") {
        spec = DistortionSpec::expectation();
    } else {
        throw ConfigError("unknown distortion kind '" + kind + "'");
    }
    spec.validate();
    return spec;
}

DistortionSpec parse_distortion(const std::string& text)
{
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    nlohmann::json doc{{"kind", kind}};
    if (colon != std::string::npos) {
        const double value = std::stod(text.substr(colon + 1));
        doc[kind == "cpw" ? "eta" : "alpha"] = value;
    }
    return distortion_from_json(doc);
}

double cpw_weight(double u, double eta)
{
    const double num = std::pow(u, eta);
    const double den = std::pow(num + std::pow(1.0 - u, eta), 1.0 / eta);
    return num / den;
}

Vector sample_quantile_levels(const DistortionSpec& spec, Index count, Rng& rng)
{
    if (count < 1)
        throw UsageError("sample_quantile_levels: K must be at least 1");
    spec.validate();
    Vector levels(count);
    for (Index k = 0; k < count; ++k) {
        const double u = uniform01(rng);
        switch (spec.kind) {
        case DistortionKind::cvar: levels(k) = spec.alpha * u; break;
        case DistortionKind::cpw: levels(k) = cpw_weight(u, spec.eta); break;
        case DistortionKind::expectation: levels(k) = u; break;
        }
    }
    return levels;
}

double distorted_value_estimate(const std::function<double(double)>& quantile_fn, const Vector& levels)
{
    if (levels.size() == 0)
        throw UsageError("distorted_value_estimate: no quantile levels");
    double sum = 0.0;
    for (Index k = 0; k < levels.size(); ++k)
        sum += quantile_fn(levels(k));
    return sum / static_cast<double>(levels.size());
}

double distorted_value_estimate(const std::function<double(double)>& quantile_fn, const DistortionSpec& spec,
                                Index count, Rng& rng)
{
    return distorted_value_estimate(quantile_fn, sample_quantile_levels(spec, count, rng));
}

double empirical_cvar(std::span<const double> returns, double alpha)
{
    if (returns.empty())
        throw UsageError("empirical_cvar: no returns");
    if (!(alpha > 0.0 && alpha <= 1.0))
        throw ConfigError("empirical_cvar: alpha must lie in (0, 1]");
    std::vector<double> sorted(returns.begin(), returns.end());
    std::sort(sorted.begin(), sorted.end());
    const auto k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(alpha * static_cast<double>(sorted.size()) + 1e-9)));
    return std::accumulate(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), 0.0) /
           static_cast<double>(k);
}

}  // namespace oraac
