#pragma once

#include <cstddef>
#include <vector>

namespace coalflow {

struct SampleStats {
    std::size_t n = 0;
    double mean = 0.0;
    double variance = 0.0;  // unbiased
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
    double min = 0.0, max = 0.0;
    double se_mean = 0.0;
    double se_variance = 0.0;  // moment-based, sqrt((m4 - m2^2)/n)
};

SampleStats sample_stats(const std::vector<double>& xs);

double standard_normal_cdf(double x);

// One-sample Kolmogorov-Smirnov distance to N(mu, sigma^2).
double ks_distance_normal(std::vector<double> xs, double mu, double sigma);

// Two-sample Kolmogorov-Smirnov distance.
double ks_distance_two_sample(std::vector<double> a, std::vector<double> b);

// Linear interpolation quantile of an unsorted sample, p in [0,1].
double quantile(std::vector<double> xs, double p);

struct Covariance {
    double value = 0.0;
    double se = 0.0;  // delta-method standard error
};

Covariance sample_covariance(const std::vector<double>& a, const std::vector<double>& b);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
};

// Ordinary least squares y ~ intercept + slope * x.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace coalflow
