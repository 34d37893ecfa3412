#pragma once

#include "oraac/diffcore.hpp"

namespace oraac {

/// Axis-aligned box of admissible actions.
struct ActionBox {
    Vector low;
    Vector high;

    static ActionBox symmetric(Index dim, double bound = 1.0)
    {
        return {Vector::Constant(dim, -bound), Vector::Constant(dim, bound)};
    }
    Index dim() const { return low.size(); }
    Vector center() const { return 0.5 * (low + high); }
    Vector half_range() const { return 0.5 * (high - low); }
    Vector clip(const Vector& a) const { return a.cwiseMax(low).cwiseMin(high); }
    bool contains(const Vector& a) const
    {
        return (a.array() >= low.array()).all() && (a.array() <= high.array()).all();
    }
};

}  // namespace oraac
