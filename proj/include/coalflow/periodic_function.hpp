#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "coalflow/errors.hpp"

namespace coalflow {

// 1-periodic test function.  Evaluation reduces the argument mod 1; the mean
// over one period is available in closed form for every representation.
class PeriodicFunction {
  public:
    enum class Kind { Zero, Cosine, Sine, Bump, OddBump, TaperedWave, Table };

    static PeriodicFunction zero() { return PeriodicFunction(Kind::Zero, 0, 0.0, 0.0, {}); }

    // cos(2 pi k x) / sin(2 pi k x), k >= 1.
    static PeriodicFunction cosine(int k, double amplitude = 1.0) {
        if (k < 1) throw ConfigError("PeriodicFunction::cosine: frequency must be >= 1");
        return PeriodicFunction(Kind::Cosine, k, 0.0, amplitude, {});
    }
    static PeriodicFunction sine(int k, double amplitude = 1.0) {
        if (k < 1) throw ConfigError("PeriodicFunction::sine: frequency must be >= 1");
        return PeriodicFunction(Kind::Sine, k, 0.0, amplitude, {});
    }

    // C^1 raised-cosine bump supported in [eps, 1-eps]; integral = amplitude*(1-2 eps)/2.
    static PeriodicFunction bump(double eps, double amplitude = 1.0) {
        check_margin(eps);
        return PeriodicFunction(Kind::Bump, 0, eps, amplitude, {});
    }

    // Zero-mean C^1 function supported in [eps, 1-eps] (odd about the support center).
    static PeriodicFunction odd_bump(double eps, double amplitude = 1.0) {
        check_margin(eps);
        return PeriodicFunction(Kind::OddBump, 0, eps, amplitude, {});
    }

    // sin(2 pi x) tapered to zero on [eps, eps+rolloff] and its mirror; zero-mean,
    // C^1, supported in [eps, 1-eps], with energy concentrated in the slowest mode.
    static PeriodicFunction tapered_wave(double eps, double rolloff, double amplitude = 1.0) {
        check_margin(eps);
        if (!(rolloff > 0.0) || eps + rolloff >= 0.5)
            throw ConfigError("PeriodicFunction: rolloff must satisfy 0 < eps+rolloff < 1/2");
        return PeriodicFunction(Kind::TaperedWave, 0, eps, amplitude, {rolloff});
    }

    // Piecewise-linear interpolation of `values` at j/m, wrapping periodically.
    static PeriodicFunction table(std::vector<double> values) {
        if (values.size() < 2) throw ConfigError("PeriodicFunction::table: need >= 2 values");
        return PeriodicFunction(Kind::Table, 0, 0.0, 1.0, std::move(values));
    }

    // Same function translated by `dx` (stays 1-periodic, mean unchanged).
    PeriodicFunction shifted(double dx) const {
        PeriodicFunction f = *this;
        f.shift_ += dx;
        return f;
    }
    double shift() const { return shift_; }

    double operator()(double x) const {
        const double xs = x - shift_;
        const double u = xs - std::floor(xs);
        switch (kind_) {
            case Kind::Zero:
                return 0.0;
            case Kind::Cosine:
                return amp_ * std::cos(2.0 * M_PI * freq_ * u);
            case Kind::Sine:
                return amp_ * std::sin(2.0 * M_PI * freq_ * u);
            case Kind::Bump: {
                if (u <= eps_ || u >= 1.0 - eps_) return 0.0;
                const double s = std::sin(M_PI * (u - eps_) / (1.0 - 2.0 * eps_));
                return amp_ * s * s;
            }
            case Kind::OddBump: {
                if (u <= eps_ || u >= 1.0 - eps_) return 0.0;
                const double w = (u - eps_) / (1.0 - 2.0 * eps_);
                const double s = std::sin(M_PI * w);
                return amp_ * s * s * std::sin(2.0 * M_PI * w);
            }
            case Kind::TaperedWave: {
                if (u <= eps_ || u >= 1.0 - eps_) return 0.0;
                const double r = values_[0];
                double window = 1.0;
                if (u < eps_ + r) {
                    const double s = std::sin(0.5 * M_PI * (u - eps_) / r);
                    window = s * s;
                } else if (u > 1.0 - eps_ - r) {
                    const double s = std::sin(0.5 * M_PI * (1.0 - eps_ - u) / r);
                    window = s * s;
                }
                return amp_ * window * std::sin(2.0 * M_PI * u);
            }
            case Kind::Table: {
                const double p = u * values_.size();
                const std::size_t i = std::min(static_cast<std::size_t>(p), values_.size() - 1);
                const double frac = p - i;
                const double next = values_[(i + 1) % values_.size()];
                return amp_ * (values_[i] * (1.0 - frac) + next * frac);
            }
        }
        return 0.0;
    }

    // Exact mean over one period.
    double mean() const {
        switch (kind_) {
            case Kind::Zero:
            case Kind::Cosine:
            case Kind::Sine:
            case Kind::OddBump:
            case Kind::TaperedWave:  // odd about the period midpoint
                return 0.0;
            case Kind::Bump:
                return amp_ * (1.0 - 2.0 * eps_) * 0.5;
            case Kind::Table: {
                double s = 0.0;
                for (double v : values_) s += v;
                return amp_ * s / values_.size();
            }
        }
        return 0.0;
    }

    bool zero_mean() const { return std::abs(mean()) <= 1e-12; }
    double support_margin() const {
        return (kind_ == Kind::Bump || kind_ == Kind::OddBump || kind_ == Kind::TaperedWave)
                   ? eps_
                   : 0.0;
    }
    Kind kind() const { return kind_; }

    PeriodicFunction scaled(double c) const {
        PeriodicFunction f = *this;
        f.amp_ *= c;
        return f;
    }

  private:
    PeriodicFunction(Kind kind, int freq, double eps, double amp, std::vector<double> values)
        : kind_(kind), freq_(freq), eps_(eps), amp_(amp), shift_(0.0),
          values_(std::move(values)) {}

    static void check_margin(double eps) {
        if (!(eps > 0.0) || !(eps < 0.5))
            throw ConfigError("PeriodicFunction: support margin must be in (0, 1/2)");
    }

    Kind kind_;
    int freq_;
    double eps_;
    double amp_;
    double shift_;
    std::vector<double> values_;
};

}  // namespace coalflow
