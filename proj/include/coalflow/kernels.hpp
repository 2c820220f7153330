#pragma once

#include <functional>

#include "coalflow/periodic_function.hpp"
#include "coalflow/quadrature.hpp"

// Closed-form densities and covariance kernels of the coalescing Brownian
// flow started from the whole line, plus the analytic bounds used by the
// experiment harness.  All evaluations are pure functions of their inputs.

namespace coalflow {

struct KernelContext {
    double t = 1.0;               // flow time
    int series_truncation = 16;   // lattice-sum terms kept per side
    int quad_points = 64;         // quadrature nodes per unit interval
    double abs_tol = 1e-10;

    // Picks the truncation depth adaptively from the Gaussian tail envelope.
    static KernelContext make(double t, double abs_tol = 1e-10, int quad_points = 64);

    // Upper bound on the dropped lattice-sum tail, valid for gaps in [-1,1].
    double tail_bound() const;

    void validate() const;  // throws on violated invariants
};

// One-point density: 1/sqrt(pi t).
double intensity(const KernelContext& ctx);

// Two-point density as a function of the gap z = |v2 - v1|.
double pair_density_gap(const KernelContext& ctx, double z);
double pair_density(const KernelContext& ctx, double v1, double v2);

// Truncated pair correlation g(x) = rho2(|x|) - 1/(pi t); even, Gaussian-decaying.
double truncated_pair_density(const KernelContext& ctx, double x);

// Certified envelope: |g(x)| <= exp(-x^2/(2t)) / (pi t).
double truncated_pair_envelope(const KernelContext& ctx, double x);

// Periodized block-covariance kernel G(v1,v2) = g(v1-v2) + 2 sum_{l>=1} g(v1-v2+l)
// and its symmetrization.
double covariance_kernel(const KernelContext& ctx, double v1, double v2);
double covariance_kernel_sym(const KernelContext& ctx, double u, double v);

// Symmetrized kernel as a function of the gap: sum_{|l|<=L} g(dx + l).
double covariance_kernel_sym_gap(const KernelContext& ctx, double dx);

// Integral of F(u,v) * G(u,v) over the unit square; F is smooth, the diagonal
// kink of G is handled by a split quadrature.
double integrate_against_kernel(const KernelContext& ctx,
                                const std::function<double(double, double)>& f2);

// Limit variance of the normalized block sums of f; always >= 0 up to tolerance.
double limit_variance(const KernelContext& ctx, const PeriodicFunction& f);

// Limit covariance between block sums of f and h; symmetric, diag = limit_variance.
double limit_covariance(const KernelContext& ctx, const PeriodicFunction& f,
                        const PeriodicFunction& h);

struct MixingBound {
    double integral_form = 0.0;  // 4 * Int_{h/3}^inf exp(-x^2/2)/sqrt(2 pi t) dx
    double closed_form = 0.0;    // 12/(h sqrt(2 pi t)) * exp(-h^2/18)
};
MixingBound mixing_coefficient_bound(const KernelContext& ctx, double h);

// Uniform n-point density bound (pi t)^{-n/2}.
double density_bound(const KernelContext& ctx, int order);

// Density of the event "paths from a and b have met by time s and sit at u".
// First-passage decomposition: the gap is a rate-2 Brownian motion absorbed at
// zero, the midpoint an independent rate-1/2 Brownian motion; after meeting
// the merged path diffuses at rate 1.
double coalescence_density(double s, double a, double b, double u, int quad_nodes = 200);

// Total mass of the above: P(pair from a,b coalesced by s) = erfc((b-a)/sqrt(4s)).
double coalescence_mass(double s, double a, double b);

// Expected block integral of f: intensity * mean(f); identical for every block.
double block_mean(const KernelContext& ctx, const PeriodicFunction& f);

// Quadrature helpers shared with other modules.
double integrate_unit(const KernelContext& ctx, const std::function<double(double)>& f);

}  // namespace coalflow
