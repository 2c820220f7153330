#include "coalflow/quadrature.hpp"

#include <algorithm>

namespace coalflow {

GaussLegendre::GaussLegendre(int order) {
    if (order < 1) throw ConfigError("GaussLegendre: order must be >= 1");
    nodes.resize(order);
    weights.resize(order);
    const int m = (order + 1) / 2;
    for (int i = 0; i < m; ++i) {
        // Chebyshev-based initial guess, then Newton on P_n(x) = 0.
        double x = std::cos(M_PI * (i + 0.75) / (order + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= order; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = order * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
}

CompositeRule::CompositeRule(double a_, double b_, int panels_, int order_)
    : a(a_), b(b_), panels(panels_), order(order_) {
    if (panels < 1 || order < 1) throw ConfigError("CompositeRule: panels and order must be >= 1");
    if (!(b > a)) throw ConfigError("CompositeRule: empty interval");
    const GaussLegendre gl(order);
    const double h = (b - a) / panels;
    x.reserve(static_cast<std::size_t>(panels) * order);
    w.reserve(x.capacity());
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * h;
        for (int k = 0; k < order; ++k) {
            x.push_back(lo + 0.5 * h * (gl.nodes[k] + 1.0));
            w.push_back(0.5 * h * gl.weights[k]);
        }
    }
}

CompositeRule unit_rule(int total_nodes) {
    if (total_nodes < 1) throw ConfigError("unit_rule: need at least one node");
    if (total_nodes < 8) return CompositeRule(0.0, 1.0, 1, total_nodes);
    const int panels = total_nodes / 8;
    return CompositeRule(0.0, 1.0, panels, 8);
}

DiagSplitGrid::DiagSplitGrid(int panels, int order) : line(0.0, 1.0, panels, order) {
    const GaussLegendre gl(order);
    std::vector<double> n01(order), w01(order);
    for (int k = 0; k < order; ++k) {
        n01[k] = 0.5 * (gl.nodes[k] + 1.0);
        w01[k] = 0.5 * gl.weights[k];
    }
    const double h = 1.0 / panels;
    tri_u.reserve(static_cast<std::size_t>(panels) * 2 * order * order);
    tri_v.reserve(tri_u.capacity());
    tri_w.reserve(tri_u.capacity());
    for (int p = 0; p < panels; ++p) {
        const double lo = p * h;
        for (int i = 0; i < order; ++i) {
            for (int j = 0; j < order; ++j) {
                // Duffy map of the lower triangle {s >= s*t}; Jacobian h^2 * s.
                const double s = n01[i], t = n01[j];
                const double wt = w01[i] * w01[j] * h * h * s;
                tri_u.push_back(lo + h * s);
                tri_v.push_back(lo + h * s * t);
                tri_w.push_back(wt);
                // Mirror for the upper triangle.
                tri_u.push_back(lo + h * s * t);
                tri_v.push_back(lo + h * s);
                tri_w.push_back(wt);
            }
        }
    }
}

}  // namespace coalflow
