#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "coalflow/kernels.hpp"

// Finite-dimensional marginals of the limiting Gaussian field: covariance
// assembly on an orthonormal basis, exact-covariance sampling, Wick products,
// and symmetric Hilbert-Schmidt forms.

namespace coalflow {

enum class BasisFamily { Trigonometric, Haar };

struct BasisSpec {
    BasisFamily family = BasisFamily::Trigonometric;
    int size = 16;
    bool includes_constant = true;

    double eval(int j, double x) const;
    bool zero_mean(int j) const;
    void validate() const;

    // Composite quadrature resolving this basis (panel-aligned for Haar).
    CompositeRule quadrature() const;
};

struct CovarianceModel {
    double t = 1.0;
    BasisSpec basis;
    Eigen::MatrixXd matrix;       // intensity(t) * I + (e_i, G~ e_j)
    double eigen_floor = 0.0;
    Eigen::MatrixXd sqrt_factor;  // V * sqrt(max(lambda, floor))
    double min_eigenvalue = 0.0;
    int floored_count = 0;

    int dim() const { return static_cast<int>(matrix.rows()); }
};

// Covariance of the field coefficients on the given basis at flow time t.
CovarianceModel build_covariance(double t, const BasisSpec& basis, const KernelContext& ctx);

// Test seam: same assembly against an arbitrary symmetric kernel and diagonal weight.
CovarianceModel covariance_from_kernel(const std::function<double(double, double)>& kernel,
                                       const BasisSpec& basis, double diag_weight);

struct GaussianFieldSample {
    std::vector<double> coeff;
};

// Draw `draw` of the field under `cov`; each draw is an independent stream.
GaussianFieldSample sample_field(const CovarianceModel& cov, std::uint64_t seed,
                                 std::uint64_t draw);

// Wick (Hermite-centered) product of up to three coefficients.
double wick_product(const GaussianFieldSample& s, const CovarianceModel& cov,
                    std::span<const int> indices);

// Symmetric k-linear form with dense coefficients on the basis (k = 2 or 3).
struct HSForm {
    int order = 2;
    int dim = 0;
    std::vector<double> coeff;  // dim^order entries, symmetric under index permutation

    static HSForm from_matrix(const Eigen::MatrixXd& a);
    static HSForm zeros(int order, int dim);
    double& at(int i, int j);
    double at(int i, int j) const;
    double& at(int i, int j, int k);
    double at(int i, int j, int k) const;
};

// Sum over indices of coeff * wick_product.
double hs_form_apply(const HSForm& a, const GaussianFieldSample& s, const CovarianceModel& cov);

// Exact Gaussian variance of hs_form_apply: 2 tr(ACAC) for k=2, the
// six-pairing contraction for k=3.
double hs_form_variance(const HSForm& a, const CovarianceModel& cov);

// L2 projections onto the basis.
Eigen::VectorXd project1(const std::function<double(double)>& f, const BasisSpec& basis);
Eigen::MatrixXd project2(const std::function<double(double, double)>& f, const BasisSpec& basis);

// Limit of the normalized off-diagonal pair integral: Wick form of the
// expanded f plus the deterministic kernel integral of f against G.
struct PairFunctional {
    HSForm form;
    double kernel_term = 0.0;
    double residual = 0.0;  // L2 norm of the unexpanded remainder
};

PairFunctional build_pair_functional(const std::function<double(double, double)>& f,
                                     const CovarianceModel& cov, const KernelContext& ctx,
                                     double residual_tol = 1e-6);

double pair_limit_functional(const PairFunctional& pf, const GaussianFieldSample& s,
                             const CovarianceModel& cov);

}  // namespace coalflow
