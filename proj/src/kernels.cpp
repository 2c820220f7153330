#include "coalflow/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace coalflow {

namespace {

constexpr double kSqrtPi = 1.7724538509055160273;

int diag_panels(const KernelContext& ctx) { return std::max(1, ctx.quad_points / 8); }
int diag_order(const KernelContext& ctx) { return std::min(8, ctx.quad_points); }

}  // namespace

KernelContext KernelContext::make(double t, double abs_tol, int quad_points) {
    if (!(t > 0.0)) throw std::domain_error("KernelContext: flow time must be > 0");
    if (!(abs_tol >= 0.0)) throw ConfigError("KernelContext: abs_tol must be >= 0");
    KernelContext ctx;
    ctx.t = t;
    ctx.abs_tol = abs_tol;
    ctx.quad_points = quad_points;
    ctx.series_truncation = 2;
    while (ctx.tail_bound() > abs_tol && ctx.series_truncation < 100000)
        ++ctx.series_truncation;
    ctx.validate();
    return ctx;
}

double KernelContext::tail_bound() const {
    // 2 sum_{l>L} |g(x+l)| with |g(y)| <= exp(-y^2/2t)/(pi t) and x >= -1:
    // bounded by (2/(pi (L-1))) exp(-(L-1)^2/(2t)).
    if (series_truncation < 2) return 1.0 / t;  // no useful certificate below L=2
    const double c = series_truncation - 1.0;
    return 2.0 / (M_PI * c) * std::exp(-c * c / (2.0 * t));
}

void KernelContext::validate() const {
    if (!(t > 0.0)) throw std::domain_error("KernelContext: flow time must be > 0");
    if (series_truncation < 1) throw ConfigError("KernelContext: series_truncation must be >= 1");
    if (quad_points < 4) throw ConfigError("KernelContext: quad_points must be >= 4");
    if (tail_bound() > abs_tol)
        throw TruncationError("KernelContext: lattice-series tail exceeds abs_tol");
}

double intensity(const KernelContext& ctx) {
    if (!(ctx.t > 0.0)) throw std::domain_error("intensity: flow time must be > 0");
    return 1.0 / std::sqrt(M_PI * ctx.t);
}

double truncated_pair_density(const KernelContext& ctx, double x) {
    if (!(ctx.t > 0.0)) throw std::domain_error("truncated_pair_density: flow time must be > 0");
    const double t = ctx.t;
    const double z = std::abs(x);
    const double st = std::sqrt(t);
    // Int_{z/sqrt(t)}^inf exp(-v^2/4) dv = sqrt(pi) * erfc(z/(2 sqrt(t)))
    const double tail = kSqrtPi * std::erfc(z / (2.0 * st));
    const double a = (z / (2.0 * st)) * std::exp(-z * z / (4.0 * t)) * tail;
    const double b = std::exp(-z * z / (2.0 * t));
    return (a - b) / (M_PI * t);
}

double truncated_pair_envelope(const KernelContext& ctx, double x) {
    return std::exp(-x * x / (2.0 * ctx.t)) / (M_PI * ctx.t);
}

double pair_density_gap(const KernelContext& ctx, double z) {
    return 1.0 / (M_PI * ctx.t) + truncated_pair_density(ctx, z);
}

double pair_density(const KernelContext& ctx, double v1, double v2) {
    return pair_density_gap(ctx, std::abs(v2 - v1));
}

double covariance_kernel(const KernelContext& ctx, double v1, double v2) {
    ctx.validate();
    const double x = v1 - v2;
    double s = truncated_pair_density(ctx, x);
    for (int l = 1; l <= ctx.series_truncation; ++l)
        s += 2.0 * truncated_pair_density(ctx, x + l);
    return s;
}

double covariance_kernel_sym(const KernelContext& ctx, double u, double v) {
    return 0.5 * (covariance_kernel(ctx, u, v) + covariance_kernel(ctx, v, u));
}

double covariance_kernel_sym_gap(const KernelContext& ctx, double dx) {
    ctx.validate();
    double s = truncated_pair_density(ctx, dx);
    for (int l = 1; l <= ctx.series_truncation; ++l)
        s += truncated_pair_density(ctx, dx + l) + truncated_pair_density(ctx, dx - l);
    return s;
}

double integrate_against_kernel(const KernelContext& ctx,
                                const std::function<double(double, double)>& f2) {
    ctx.validate();
    const DiagSplitGrid grid(diag_panels(ctx), diag_order(ctx));
    return grid.integrate(
        [&](double u, double v) { return f2(u, v) * covariance_kernel(ctx, u, v); });
}

double integrate_unit(const KernelContext& ctx, const std::function<double(double)>& f) {
    const CompositeRule rule = unit_rule(ctx.quad_points);
    return rule.integrate(f);
}

double limit_variance(const KernelContext& ctx, const PeriodicFunction& f) {
    const double cross =
        integrate_against_kernel(ctx, [&](double u, double v) { return f(u) * f(v); });
    const double diag = intensity(ctx) * integrate_unit(ctx, [&](double x) {
        const double y = f(x);
        return y * y;
    });
    const double var = cross + diag;
    const double tol = ctx.abs_tol + 1e-12 * std::abs(diag);
    if (var < -tol)
        throw NumericError("limit_variance: negative variance beyond tolerance "
                           "(kernel or truncation inconsistency)");
    return var;
}

double limit_covariance(const KernelContext& ctx, const PeriodicFunction& f,
                        const PeriodicFunction& h) {
    const double cross = integrate_against_kernel(
        ctx, [&](double u, double v) { return 0.5 * (f(u) * h(v) + f(v) * h(u)); });
    const double diag = intensity(ctx) * integrate_unit(ctx, [&](double x) { return f(x) * h(x); });
    return cross + diag;
}

MixingBound mixing_coefficient_bound(const KernelContext& ctx, double h) {
    if (!(h > 0.0)) throw std::domain_error("mixing_coefficient_bound: distance must be > 0");
    if (!(ctx.t > 0.0)) throw std::domain_error("mixing_coefficient_bound: flow time must be > 0");
    MixingBound b;
    // 4/sqrt(t) * P(N(0,1) > h/3) = 2/sqrt(t) * erfc(h/(3 sqrt 2))
    b.integral_form = 2.0 / std::sqrt(ctx.t) * std::erfc(h / (3.0 * std::sqrt(2.0)));
    b.closed_form = 12.0 / (h * std::sqrt(2.0 * M_PI * ctx.t)) * std::exp(-h * h / 18.0);
    return b;
}

double density_bound(const KernelContext& ctx, int order) {
    if (order < 1) throw std::domain_error("density_bound: order must be >= 1");
    if (!(ctx.t > 0.0)) throw std::domain_error("density_bound: flow time must be > 0");
    return std::pow(M_PI * ctx.t, -0.5 * order);
}

double coalescence_mass(double s, double a, double b) {
    if (!(s > 0.0)) throw std::domain_error("coalescence_mass: elapsed time must be > 0");
    if (b < a) throw std::domain_error("coalescence_mass: requires b >= a");
    return std::erfc((b - a) / std::sqrt(4.0 * s));
}

double coalescence_density(double s, double a, double b, double u, int quad_nodes) {
    if (!(s > 0.0)) throw std::domain_error("coalescence_density: elapsed time must be > 0");
    if (b < a) throw std::domain_error("coalescence_density: requires b >= a");
    const double gap = b - a;
    const double mid = 0.5 * (a + b);
    const double du = u - mid;
    if (gap == 0.0) {
        // Already coalesced: plain Gaussian density with variance s.
        return std::exp(-(u - a) * (u - a) / (2.0 * s)) / std::sqrt(2.0 * M_PI * s);
    }
    // Hitting-time density of the rate-2 gap from `gap`:
    //   f(r) = gap/(2 sqrt(pi r^3)) exp(-gap^2/(4r)).
    // Substituting r = s w^2 tames the r^{-3/2} endpoint:
    //   q = Int_0^1 gap/(sqrt(pi s) w^2) exp(-gap^2/(4 s w^2)) * N(du; 0, s - s w^2/2) dw.
    const int panels = std::max(1, quad_nodes / 8);
    const CompositeRule rule(0.0, 1.0, panels, std::min(8, quad_nodes));
    const double c = gap / std::sqrt(M_PI * s);
    double q = rule.integrate([&](double w) {
        const double w2 = w * w;
        const double hit = c / w2 * std::exp(-gap * gap / (4.0 * s * w2));
        const double var = s - 0.5 * s * w2;
        const double gauss = std::exp(-du * du / (2.0 * var)) / std::sqrt(2.0 * M_PI * var);
        return hit * gauss;
    });
    if (!std::isfinite(q)) throw NumericError("coalescence_density: quadrature failure");
    return std::max(q, 0.0);
}

double block_mean(const KernelContext& ctx, const PeriodicFunction& f) {
    return intensity(ctx) * f.mean();
}

}  // namespace coalflow
