#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "coalflow/gaussian_limit.hpp"
#include "coalflow/stats.hpp"

using namespace coalflow;

namespace {

BasisSpec trig(int m) { return BasisSpec{BasisFamily::Trigonometric, m, true}; }
BasisSpec haar(int m) { return BasisSpec{BasisFamily::Haar, m, true}; }

// Correlated test covariance with visible off-diagonal structure, including
// cross-frequency coupling.
CovarianceModel synthetic_cov(int m) {
    return covariance_from_kernel(
        [](double u, double v) {
            return 0.4 * std::cos(2.0 * M_PI * (u - v)) + 0.25 * std::cos(2.0 * M_PI * (u + v)) +
                   0.2 * (std::cos(2.0 * M_PI * u) * std::cos(4.0 * M_PI * v) +
                          std::cos(4.0 * M_PI * u) * std::cos(2.0 * M_PI * v)) +
                   0.15 * (std::sin(2.0 * M_PI * u) * std::sin(4.0 * M_PI * v) +
                           std::sin(4.0 * M_PI * u) * std::sin(2.0 * M_PI * v));
        },
        trig(m), 1.0);
}

}  // namespace

TEST_CASE("bases are orthonormal under the module quadrature") {
    for (int m : {8, 16, 64}) {
        const BasisSpec tb = trig(m);
        const BasisSpec hb = haar(m);
        const CompositeRule rule = tb.quadrature();
        for (const BasisSpec& b : {tb, hb}) {
            for (int i = 0; i < m; i += m / 4) {
                for (int j = 0; j < m; j += m / 4) {
                    double dot = 0.0;
                    for (std::size_t q = 0; q < rule.x.size(); ++q)
                        dot += rule.w[q] * b.eval(i, rule.x[q]) * b.eval(j, rule.x[q]);
                    CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10));
                }
            }
        }
    }
}

TEST_CASE("zero kernel at unit intensity gives the identity covariance") {
    // intensity(t) = 1 at t = 1/pi, so the flow covariance with a null kernel
    // injected reduces to the identity.
    const CovarianceModel cov = covariance_from_kernel(
        [](double, double) { return 0.0; }, trig(8), intensity(KernelContext::make(1.0 / M_PI)));
    CHECK((cov.matrix - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(cov.floored_count == 0);
}

TEST_CASE("covariance assembly") {
    const KernelContext ctx = KernelContext::make(1.0);
    const CovarianceModel cov = build_covariance(1.0, trig(16), ctx);
    CHECK((cov.matrix - cov.matrix.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(cov.min_eigenvalue > 0.0);

    // two-resolution oracle for the (1,1) entry: independent deep-truncation
    // context and a fine trapezoid grid with the diagonal split by symmetry
    const double entry = cov.matrix(1, 1);
    const KernelContext deep = KernelContext::make(1.0, 1e-14, 256);
    const int n = 1200;
    double quad = 0.0;
    // integrate over the lower triangle u > v and double (kernel symmetric,
    // basis factor symmetrized)
    for (int i = 0; i < n; ++i) {
        const double u = (i + 0.5) / n;
        for (int j = 0; j < i; ++j) {
            const double v = (j + 0.5) / n;
            quad += 2.0 * std::cos(2.0 * M_PI * u) * 2.0 * std::cos(2.0 * M_PI * v) *
                    covariance_kernel_sym_gap(deep, u - v) * 2.0 / (n * n);
        }
        quad += 2.0 * std::cos(2.0 * M_PI * u) * std::cos(2.0 * M_PI * u) *
                covariance_kernel_sym_gap(deep, 0.0) / (n * n);
    }
    const double oracle = intensity(deep) + quad;
    // midpoint grid converges O(n^-2) on each smooth triangle
    CHECK(entry == doctest::Approx(oracle).epsilon(2e-6));

    // eigenvalue guard trips on a kernel that is not a covariance
    CHECK_THROWS_AS(
        covariance_from_kernel([](double, double) { return -2.0; }, trig(4), 1.0),
        NumericError);
}

TEST_CASE("covariance entry agrees with the kernel module at high resolution") {
    // same entry, module quadrature vs a second module context at 4x panels
    const KernelContext base = KernelContext::make(1.0);
    const CovarianceModel cov = build_covariance(1.0, trig(8), base);
    const KernelContext fine = KernelContext::make(1.0, 1e-13, 256);
    const double direct =
        intensity(fine) + integrate_against_kernel(fine, [](double u, double v) {
            return 2.0 * std::cos(2.0 * M_PI * u) * std::cos(2.0 * M_PI * v);
        });
    CHECK(cov.matrix(1, 1) == doctest::Approx(direct).epsilon(1e-9));
}

TEST_CASE("field sampling reproduces the covariance") {
    // identity covariance: iid standard normals
    const CovarianceModel id = covariance_from_kernel(
        [](double, double) { return 0.0; }, trig(6), 1.0);
    const int draws = 100000;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(6, 6);
    for (int d = 0; d < draws; ++d) {
        const GaussianFieldSample s = sample_field(id, 8675309, d);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) acc(i, j) += s.coeff[i] * s.coeff[j];
    }
    acc /= draws;
    CHECK((acc - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 0.02);

    // zero covariance: zero vector
    const CovarianceModel zero = covariance_from_kernel(
        [](double, double) { return 0.0; }, trig(4), 0.0);
    const GaussianFieldSample z = sample_field(zero, 1, 0);
    for (double c : z.coeff) CHECK(c == 0.0);

    // flow covariance at t = 1: sample covariance within 3 standard errors
    const KernelContext ctx = KernelContext::make(1.0);
    const CovarianceModel cov = build_covariance(1.0, trig(8), ctx);
    Eigen::MatrixXd acc2 = Eigen::MatrixXd::Zero(8, 8);
    for (int d = 0; d < draws; ++d) {
        const GaussianFieldSample s = sample_field(cov, 424242, d);
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) acc2(i, j) += s.coeff[i] * s.coeff[j];
    }
    acc2 /= draws;
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
            const double se = std::sqrt((cov.matrix(i, i) * cov.matrix(j, j) +
                                         cov.matrix(i, j) * cov.matrix(i, j)) /
                                        draws);
            CHECK(std::abs(acc2(i, j) - cov.matrix(i, j)) < 3.5 * se);
        }
    }
}

TEST_CASE("wick products") {
    const CovarianceModel cov = synthetic_cov(6);
    const int draws = 100000;
    const std::array<int, 2> ij{1, 2};
    const std::array<int, 2> kl{3, 4};
    double mean2 = 0.0, prod = 0.0;
    std::vector<double> w3(draws);
    for (int d = 0; d < draws; ++d) {
        const GaussianFieldSample s = sample_field(cov, 777, d);
        const double wij = wick_product(s, cov, ij);
        const double wkl = wick_product(s, cov, kl);
        mean2 += wij;
        prod += wij * wkl;
        const std::array<int, 3> ijk{1, 2, 3};
        w3[d] = wick_product(s, cov, ijk);
    }
    mean2 /= draws;
    prod /= draws;
    // centered by construction
    CHECK(std::abs(mean2) < 0.02);
    // Isserlis pairing: E[(zi*zj)(zk*zl)] = c_ik c_jl + c_il c_jk
    const double expect = cov.matrix(1, 3) * cov.matrix(2, 4) +
                          cov.matrix(1, 4) * cov.matrix(2, 3);
    CHECK(std::abs(expect) > 0.005);  // coupling actually present
    CHECK(std::abs(prod - expect) < 0.03);
    // third-order product is centered too
    const SampleStats s3 = sample_stats(w3);
    CHECK(std::abs(s3.mean) < 3.5 * s3.se_mean);

    // H2 identity under identity covariance
    const CovarianceModel id = covariance_from_kernel(
        [](double, double) { return 0.0; }, trig(4), 1.0);
    const GaussianFieldSample s = sample_field(id, 5, 0);
    const std::array<int, 2> ii{2, 2};
    CHECK(wick_product(s, id, ii) == s.coeff[2] * s.coeff[2] - 1.0);

    const std::array<int, 4> too_many{0, 1, 2, 3};
    CHECK_THROWS_AS(wick_product(s, id, too_many), ConfigError);
}

TEST_CASE("hilbert-schmidt forms") {
    const CovarianceModel id = covariance_from_kernel(
        [](double, double) { return 0.0; }, trig(4), 1.0);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4, 4);
    a(1, 1) = 1.0;
    const HSForm form = HSForm::from_matrix(a);
    const GaussianFieldSample s = sample_field(id, 5, 1);
    CHECK(hs_form_apply(form, s, id) ==
          doctest::Approx(s.coeff[1] * s.coeff[1] - 1.0).epsilon(1e-14));
    const HSForm zero2 = HSForm::zeros(2, 4);
    CHECK(hs_form_apply(zero2, s, id) == 0.0);

    // empirical variance vs the 2 tr(ACAC) contraction
    const CovarianceModel cov = synthetic_cov(6);
    Eigen::MatrixXd b(6, 6);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) b(i, j) = 0.1 * (i + 1) * (j + 1) / 36.0 + (i == j ? 0.3 : 0.0);
    const HSForm fb = HSForm::from_matrix(b);
    const double predicted = hs_form_variance(fb, cov);
    const int draws = 100000;
    std::vector<double> vals(draws);
    for (int d = 0; d < draws; ++d)
        vals[d] = hs_form_apply(fb, sample_field(cov, 31337, d), cov);
    const SampleStats st = sample_stats(vals);
    CHECK(st.variance == doctest::Approx(predicted).epsilon(0.05));
    CHECK(std::abs(st.mean) < 3.5 * st.se_mean);
}

TEST_CASE("third-order form variance matches the pairing contraction") {
    const CovarianceModel cov = synthetic_cov(4);
    HSForm a3 = HSForm::zeros(3, 4);
    // symmetric coefficients on a few index triples
    auto set_sym = [&](int i, int j, int k, double v) {
        const int idx[3] = {i, j, k};
        int perm[3] = {0, 1, 2};
        std::sort(perm, perm + 3);
        do {
            a3.at(idx[perm[0]], idx[perm[1]], idx[perm[2]]) = v;
        } while (std::next_permutation(perm, perm + 3));
    };
    set_sym(0, 1, 2, 0.2);
    set_sym(1, 1, 3, 0.1);
    set_sym(2, 2, 2, 0.15);
    const double predicted = hs_form_variance(a3, cov);
    const int draws = 120000;
    std::vector<double> vals(draws);
    for (int d = 0; d < draws; ++d)
        vals[d] = hs_form_apply(a3, sample_field(cov, 999, d), cov);
    const SampleStats st = sample_stats(vals);
    CHECK(st.variance == doctest::Approx(predicted).epsilon(0.06));
}

TEST_CASE("pair limit functional") {
    const KernelContext ctx = KernelContext::make(1.0);
    const CovarianceModel cov = build_covariance(1.0, trig(8), ctx);

    // zero function: identically zero
    const PairFunctional zero = build_pair_functional(
        [](double, double) { return 0.0; }, cov, ctx);
    CHECK(pair_limit_functional(zero, sample_field(cov, 1, 0), cov) == 0.0);

    // mean equals the kernel integral (wick part is centered)
    const auto f2 = [](double x, double y) {
        return std::cos(2.0 * M_PI * x) * std::cos(2.0 * M_PI * y);
    };
    const PairFunctional pf = build_pair_functional(f2, cov, ctx);
    CHECK(pf.residual < 1e-10);
    const int draws = 20000;
    std::vector<double> vals(draws);
    for (int d = 0; d < draws; ++d)
        vals[d] = pair_limit_functional(pf, sample_field(cov, 2024, d), cov);
    const SampleStats st = sample_stats(vals);
    CHECK(std::abs(st.mean - pf.kernel_term) < 3.5 * st.se_mean);

    // unresolvable frequency: basis-resolution error
    CHECK_THROWS_AS(build_pair_functional(
                        [](double x, double y) {
                            return std::cos(2.0 * M_PI * 7.0 * x) * std::cos(2.0 * M_PI * 7.0 * y);
                        },
                        cov, ctx),
                    NumericError);

    // nonzero marginal mean: precondition failure
    CHECK_THROWS_AS(build_pair_functional(
                        [](double x, double y) {
                            return (1.0 + std::cos(2.0 * M_PI * x)) * std::cos(2.0 * M_PI * y);
                        },
                        cov, ctx),
                    ConfigError);
}

TEST_CASE("form variance is basis independent") {
    const KernelContext ctx = KernelContext::make(1.0);
    const auto f2 = [](double x, double y) {
        return std::cos(2.0 * M_PI * x) * std::cos(2.0 * M_PI * y);
    };
    const CovarianceModel trig_cov = build_covariance(1.0, trig(64), ctx);
    const CovarianceModel haar_cov = build_covariance(1.0, haar(64), ctx);
    const HSForm at = HSForm::from_matrix(project2(f2, trig_cov.basis));
    const HSForm ah = HSForm::from_matrix(project2(f2, haar_cov.basis));
    const double vt = hs_form_variance(at, trig_cov);
    const double vh = hs_form_variance(ah, haar_cov);
    CHECK(std::abs(vt / vh - 1.0) < 0.02);
}

TEST_CASE("limit covariance factors through the basis expansion") {
    const KernelContext ctx = KernelContext::make(1.0);
    const CovarianceModel cov = build_covariance(1.0, trig(16), ctx);
    const PeriodicFunction f = PeriodicFunction::cosine(1);
    const PeriodicFunction h = PeriodicFunction::cosine(2);
    const Eigen::VectorXd fh = project1([&](double x) { return f(x); }, cov.basis);
    const Eigen::VectorXd hh = project1([&](double x) { return h(x); }, cov.basis);
    CHECK(fh.transpose() * cov.matrix * hh ==
          doctest::Approx(limit_covariance(ctx, f, h)).epsilon(1e-8));
    CHECK(fh.transpose() * cov.matrix * fh ==
          doctest::Approx(limit_variance(ctx, f)).epsilon(1e-8));
}
