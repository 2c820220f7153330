#pragma once

#include <algorithm>
#include <vector>

#include "coalflow/errors.hpp"

namespace coalflow {

// Finite point measure: strictly increasing atoms inside a half-open window.
struct PointMeasure {
    std::vector<double> atoms;
    double window_lo = 0.0;
    double window_hi = 0.0;

    std::size_t size() const { return atoms.size(); }
    bool empty() const { return atoms.empty(); }

    void validate() const {
        if (window_hi < window_lo) throw WindowError("PointMeasure: inverted window");
        for (std::size_t i = 0; i + 1 < atoms.size(); ++i)
            if (!(atoms[i] < atoms[i + 1]))
                throw NumericError("PointMeasure: atoms must be strictly increasing");
        if (!atoms.empty() && (atoms.front() < window_lo || atoms.back() >= window_hi))
            throw WindowError("PointMeasure: atom outside window");
    }

    PointMeasure restricted(double lo, double hi) const {
        PointMeasure out;
        out.window_lo = lo;
        out.window_hi = hi;
        auto first = std::lower_bound(atoms.begin(), atoms.end(), lo);
        auto last = std::lower_bound(atoms.begin(), atoms.end(), hi);
        out.atoms.assign(first, last);
        return out;
    }
};

// A non-decreasing map recorded on the atoms of a point measure.
struct MonotoneAtomMap {
    std::vector<double> values;  // aligned with the domain measure's atoms

    void validate(const PointMeasure& domain) const {
        if (values.size() != domain.atoms.size())
            throw ConfigError("MonotoneAtomMap: value count does not match atom count");
        for (std::size_t i = 0; i + 1 < values.size(); ++i)
            if (values[i] > values[i + 1])
                throw NumericError("MonotoneAtomMap: values must be non-decreasing");
    }
};

}  // namespace coalflow
