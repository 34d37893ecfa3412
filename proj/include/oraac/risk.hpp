#pragma once

// Risk distortions of a return distribution given through its quantile
// function. Each distortion is represented by the distribution of quantile
// levels it weights: averaging the quantile function over K levels drawn
// from that distribution estimates the distorted value.

#include <functional>
#include <span>
#include <string>

#include <json.hpp>

#include "oraac/diffcore.hpp"

namespace oraac {

enum class DistortionKind { cvar, expectation, cpw };

struct DistortionSpec {
    DistortionKind kind = DistortionKind::expectation;
    double alpha = 1.0;  // cvar level, 0 < alpha <= 1
    double eta = 0.71;   // cpw curvature, eta > 0

    static DistortionSpec cvar(double alpha) { return {DistortionKind::cvar, alpha, 0.71}; }
    static DistortionSpec expectation() { return {}; }
    static DistortionSpec cpw(double eta = 0.71) { return {DistortionKind::cpw, 1.0, eta}; }

    void validate() const;
    std::string describe() const;

    bool operator==(const DistortionSpec&) const = default;
};

nlohmann::json to_json(const DistortionSpec& spec);
DistortionSpec distortion_from_json(const nlohmann::json& doc);
/// Parses "cvar:0.1", "expectation", "cpw" or "cpw:0.71".
DistortionSpec parse_distortion(const std::string& text);

/// Cumulative prospect theory probability weighting
/// w(u) = u^eta / (u^eta + (1 - u)^eta)^(1 / eta).
double cpw_weight(double u, double eta);

/// K quantile levels drawn from the sampling distribution of `spec`.
Vector sample_quantile_levels(const DistortionSpec& spec, Index count, Rng& rng);

/// (1/K) sum_k quantile_fn(levels_k).
double distorted_value_estimate(const std::function<double(double)>& quantile_fn, const Vector& levels);
double distorted_value_estimate(const std::function<double(double)>& quantile_fn, const DistortionSpec& spec,
                                Index count, Rng& rng);

/// Mean of the k = max(1, floor(alpha * M)) smallest returns.
double empirical_cvar(std::span<const double> returns, double alpha);

}  // namespace oraac
