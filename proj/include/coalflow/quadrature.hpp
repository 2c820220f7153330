#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "coalflow/errors.hpp"

namespace coalflow {

// Gauss-Legendre nodes/weights on [-1,1], computed by Newton iteration on P_n.
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussLegendre(int order);
};

// Composite Gauss-Legendre rule: `panels` uniform panels on [a,b], `order` nodes each.
struct CompositeRule {
    std::vector<double> x;
    std::vector<double> w;
    double a = 0.0, b = 1.0;
    int panels = 1, order = 8;

    CompositeRule(double a_, double b_, int panels_, int order_);

    template <class F>
    double integrate(F&& f) const {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * f(x[i]);
        return s;
    }

    int panel_of(std::size_t node_index) const { return static_cast<int>(node_index) / order; }
};

// Splits `total_nodes` per axis into panels of order <= 8 (matching the
// "nodes per unit interval" convention used by kernel contexts).
CompositeRule unit_rule(int total_nodes);

// Quadrature nodes for integrands on [0,1]^2 that are smooth except for a kink
// on the diagonal u = v: off-diagonal panel pairs use a tensor rule, the
// diagonal panels are split into two triangles (Duffy map) so each piece is
// smooth.  Stored flat for batched evaluation.
struct DiagSplitGrid {
    CompositeRule line;               // shared 1-d composite rule
    std::vector<double> tri_u, tri_v, tri_w;  // diagonal-panel triangle nodes

    DiagSplitGrid(int panels, int order);

    template <class F2>
    double integrate(F2&& f) const {
        const auto& x = line.x;
        const auto& w = line.w;
        const std::size_t n = x.size();
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const int pi = line.panel_of(i);
            for (std::size_t j = 0; j < n; ++j) {
                if (line.panel_of(j) == pi) continue;
                s += w[i] * w[j] * f(x[i], x[j]);
            }
        }
        for (std::size_t p = 0; p < tri_u.size(); ++p)
            s += tri_w[p] * f(tri_u[p], tri_v[p]);
        return s;
    }
};

}  // namespace coalflow
