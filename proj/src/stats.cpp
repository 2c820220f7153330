#include "coalflow/stats.hpp"

#include <algorithm>
#include <cmath>

#include "coalflow/errors.hpp"

namespace coalflow {

SampleStats sample_stats(const std::vector<double>& xs) {
    SampleStats s;
    s.n = xs.size();
    if (xs.empty()) return s;
    double sum = 0.0;
    s.min = xs[0];
    s.max = xs[0];
    for (double x : xs) {
        sum += x;
        s.min = std::min(s.min, x);
        s.max = std::max(s.max, x);
    }
    const double n = static_cast<double>(xs.size());
    s.mean = sum / n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : xs) {
        const double d = x - s.mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    s.variance = xs.size() > 1 ? m2 * n / (n - 1.0) : 0.0;
    if (m2 > 0.0) {
        s.skewness = m3 / std::pow(m2, 1.5);
        s.excess_kurtosis = m4 / (m2 * m2) - 3.0;
        s.se_mean = std::sqrt(s.variance / n);
        s.se_variance = std::sqrt(std::max(0.0, m4 - m2 * m2) / n);
    }
    return s;
}

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double ks_distance_normal(std::vector<double> xs, double mu, double sigma) {
    if (xs.empty() || sigma <= 0.0) throw NumericError("ks_distance_normal: degenerate input");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = standard_normal_cdf((xs[i] - mu) / sigma);
        d = std::max(d, std::abs((i + 1.0) / n - f));
        d = std::max(d, std::abs(f - i / n));
    }
    return d;
}

double ks_distance_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw NumericError("ks_distance_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double t = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= t) ++i;
        while (j < b.size() && b[j] <= t) ++j;
        d = std::max(d, std::abs(i / na - j / nb));
    }
    return d;
}

double quantile(std::vector<double> xs, double p) {
    if (xs.empty()) throw NumericError("quantile: empty sample");
    std::sort(xs.begin(), xs.end());
    p = std::clamp(p, 0.0, 1.0);
    const double pos = p * (xs.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= xs.size()) return xs.back();
    const double frac = pos - lo;
    return xs[lo] * (1.0 - frac) + xs[lo + 1] * frac;
}

Covariance sample_covariance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw NumericError("sample_covariance: size mismatch");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double c = 0.0, m22 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        c += da * db;
        m22 += da * da * db * db;
    }
    const double cov = c / (n - 1.0);
    m22 /= n;
    Covariance out;
    out.value = cov;
    out.se = std::sqrt(std::max(0.0, m22 - cov * cov) / n);
    return out;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3) throw NumericError("fit_line: need >= 3 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (fit.intercept + fit.slope * x[i]);
        rss += r * r;
    }
    fit.slope_se = std::sqrt(rss / ((n - 2.0) * sxx));
    return fit;
}

}  // namespace coalflow
