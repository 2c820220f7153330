#include "coalflow/gaussian_limit.hpp"

#include <algorithm>
#include <cmath>

#include "coalflow/rng.hpp"

namespace coalflow {

namespace {

constexpr double kOrthoTol = 1e-10;

int quad_panels(const BasisSpec& basis) {
    int p = 64;
    while (p < basis.size) p *= 2;
    return p;
}

// Assembles E_ij = Int e_i(u) K(u,v) e_j(v) du dv with the diagonal-kink split;
// `kernel` must be symmetric.
Eigen::MatrixXd assemble_quadratic(const std::function<double(double, double)>& kernel,
                                   const BasisSpec& basis) {
    const int m = basis.size;
    const DiagSplitGrid grid(quad_panels(basis), 10);
    const auto& x = grid.line.x;
    const auto& w = grid.line.w;
    const int n = static_cast<int>(x.size());

    Eigen::MatrixXd b(m, n);
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < n; ++i) b(j, i) = basis.eval(j, x[i]);

    // Off-diagonal panels: weighted kernel grid, zeroed on same-panel pairs.
    Eigen::MatrixXd kmat = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const int pi = grid.line.panel_of(i);
        for (int j = i + 1; j < n; ++j) {
            if (grid.line.panel_of(j) == pi) continue;
            const double v = w[i] * w[j] * kernel(x[i], x[j]);
            kmat(i, j) = v;
            kmat(j, i) = v;
        }
    }
    Eigen::MatrixXd e = b * kmat * b.transpose();

    // Diagonal panels: triangle nodes.
    const int nt = static_cast<int>(grid.tri_u.size());
    Eigen::MatrixXd bu(m, nt), bv(m, nt);
    for (int p = 0; p < nt; ++p) {
        const double kw = grid.tri_w[p] * kernel(grid.tri_u[p], grid.tri_v[p]);
        for (int j = 0; j < m; ++j) {
            bu(j, p) = basis.eval(j, grid.tri_u[p]) * kw;
            bv(j, p) = basis.eval(j, grid.tri_v[p]);
        }
    }
    e += bu * bv.transpose();
    return 0.5 * (e + e.transpose());
}

void check_orthonormal(const BasisSpec& basis) {
    const CompositeRule rule = basis.quadrature();
    const int m = basis.size;
    const int n = static_cast<int>(rule.x.size());
    Eigen::MatrixXd b(m, n);
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < n; ++i) b(j, i) = basis.eval(j, rule.x[i]) * std::sqrt(rule.w[i]);
    const Eigen::MatrixXd gram = b * b.transpose();
    const double err = (gram - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff();
    if (err > kOrthoTol)
        throw NumericError("BasisSpec: family is not orthonormal under the module quadrature");
}

CovarianceModel finalize_model(double t, const BasisSpec& basis, Eigen::MatrixXd mat,
                               double eigen_floor) {
    CovarianceModel cov;
    cov.t = t;
    cov.basis = basis;
    cov.eigen_floor = eigen_floor;
    cov.matrix = std::move(mat);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov.matrix);
    if (es.info() != Eigen::Success)
        throw NumericError("CovarianceModel: eigendecomposition failed");
    cov.min_eigenvalue = es.eigenvalues().minCoeff();
    if (cov.min_eigenvalue < -1e-8)
        throw NumericError("CovarianceModel: eigenvalue below -1e-8 (kernel inconsistency)");
    Eigen::VectorXd lam = es.eigenvalues();
    cov.floored_count = 0;
    for (int i = 0; i < lam.size(); ++i) {
        if (lam[i] < cov.eigen_floor) {
            lam[i] = cov.eigen_floor;
            ++cov.floored_count;
        }
    }
    cov.sqrt_factor = es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
    return cov;
}

}  // namespace

void BasisSpec::validate() const {
    if (size < 1) throw ConfigError("BasisSpec: size must be >= 1");
    if (family == BasisFamily::Haar) {
        const int n_wavelets = size - (includes_constant ? 1 : 0);
        if (n_wavelets > 1023) throw ConfigError("BasisSpec: Haar basis too large");
    } else if (size > 1024) {
        throw ConfigError("BasisSpec: trigonometric basis too large");
    }
}

double BasisSpec::eval(int j, double x) const {
    if (!includes_constant) ++j;
    const double u = x - std::floor(x);
    if (family == BasisFamily::Trigonometric) {
        if (j == 0) return 1.0;
        const int m = (j + 1) / 2;
        const double arg = 2.0 * M_PI * m * u;
        return std::sqrt(2.0) * (j % 2 == 1 ? std::cos(arg) : std::sin(arg));
    }
    if (j == 0) return 1.0;
    const int level = static_cast<int>(std::floor(std::log2(static_cast<double>(j))));
    const int k = j - (1 << level);
    const double scaled = u * (1 << level) - k;
    if (scaled < 0.0 || scaled >= 1.0) return 0.0;
    return std::pow(2.0, 0.5 * level) * (scaled < 0.5 ? 1.0 : -1.0);
}

bool BasisSpec::zero_mean(int j) const { return !(includes_constant && j == 0); }

CompositeRule BasisSpec::quadrature() const { return CompositeRule(0.0, 1.0, quad_panels(*this), 10); }

CovarianceModel build_covariance(double t, const BasisSpec& basis, const KernelContext& ctx) {
    basis.validate();
    ctx.validate();
    check_orthonormal(basis);
    Eigen::MatrixXd mat = assemble_quadratic(
        [&](double u, double v) { return covariance_kernel_sym_gap(ctx, u - v); }, basis);
    mat += intensity(ctx) * Eigen::MatrixXd::Identity(basis.size, basis.size);
    return finalize_model(t, basis, std::move(mat), 0.0);
}

CovarianceModel covariance_from_kernel(const std::function<double(double, double)>& kernel,
                                       const BasisSpec& basis, double diag_weight) {
    basis.validate();
    check_orthonormal(basis);
    Eigen::MatrixXd mat = assemble_quadratic(kernel, basis);
    mat += diag_weight * Eigen::MatrixXd::Identity(basis.size, basis.size);
    return finalize_model(0.0, basis, std::move(mat), 0.0);
}

GaussianFieldSample sample_field(const CovarianceModel& cov, std::uint64_t seed,
                                 std::uint64_t draw) {
    const RngStream rng = RngStream::for_replica(seed, draw);
    const int m = cov.dim();
    Eigen::VectorXd z(m);
    for (int i = 0; i < m; ++i) z[i] = rng.normal(0, static_cast<std::uint32_t>(i), kStreamField);
    const Eigen::VectorXd c = cov.sqrt_factor * z;
    GaussianFieldSample s;
    s.coeff.assign(c.data(), c.data() + m);
    return s;
}

double wick_product(const GaussianFieldSample& s, const CovarianceModel& cov,
                    std::span<const int> idx) {
    for (int i : idx)
        if (i < 0 || i >= cov.dim()) throw ConfigError("wick_product: index outside basis");
    const auto& z = s.coeff;
    const auto& c = cov.matrix;
    switch (idx.size()) {
        case 1:
            return z[idx[0]];
        case 2:
            return z[idx[0]] * z[idx[1]] - c(idx[0], idx[1]);
        case 3: {
            const int i = idx[0], j = idx[1], k = idx[2];
            return z[i] * z[j] * z[k] - c(i, j) * z[k] - c(i, k) * z[j] - c(j, k) * z[i];
        }
        default:
            throw ConfigError("wick_product: order must be 1, 2 or 3");
    }
}

HSForm HSForm::from_matrix(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols()) throw ConfigError("HSForm: matrix must be square");
    HSForm f;
    f.order = 2;
    f.dim = static_cast<int>(a.rows());
    f.coeff.resize(static_cast<std::size_t>(f.dim) * f.dim);
    for (int i = 0; i < f.dim; ++i)
        for (int j = 0; j < f.dim; ++j) f.at(i, j) = 0.5 * (a(i, j) + a(j, i));
    return f;
}

HSForm HSForm::zeros(int order, int dim) {
    if (order != 2 && order != 3) throw ConfigError("HSForm: order must be 2 or 3");
    HSForm f;
    f.order = order;
    f.dim = dim;
    f.coeff.assign(static_cast<std::size_t>(std::pow(dim, order)), 0.0);
    return f;
}

double& HSForm::at(int i, int j) { return coeff[static_cast<std::size_t>(i) * dim + j]; }
double HSForm::at(int i, int j) const { return coeff[static_cast<std::size_t>(i) * dim + j]; }
double& HSForm::at(int i, int j, int k) {
    return coeff[(static_cast<std::size_t>(i) * dim + j) * dim + k];
}
double HSForm::at(int i, int j, int k) const {
    return coeff[(static_cast<std::size_t>(i) * dim + j) * dim + k];
}

double hs_form_apply(const HSForm& a, const GaussianFieldSample& s, const CovarianceModel& cov) {
    if (a.dim > cov.dim()) throw ConfigError("hs_form_apply: form exceeds basis");
    const auto& z = s.coeff;
    const auto& c = cov.matrix;
    double out = 0.0;
    if (a.order == 2) {
        for (int i = 0; i < a.dim; ++i)
            for (int j = 0; j < a.dim; ++j)
                out += a.at(i, j) * (z[i] * z[j] - c(i, j));
        return out;
    }
    for (int i = 0; i < a.dim; ++i)
        for (int j = 0; j < a.dim; ++j)
            for (int k = 0; k < a.dim; ++k)
                out += a.at(i, j, k) * (z[i] * z[j] * z[k] - c(i, j) * z[k] - c(i, k) * z[j] -
                                        c(j, k) * z[i]);
    return out;
}

double hs_form_variance(const HSForm& a, const CovarianceModel& cov) {
    const int m = a.dim;
    if (m > cov.dim()) throw ConfigError("hs_form_variance: form exceeds basis");
    const Eigen::MatrixXd c = cov.matrix.topLeftCorner(m, m);
    if (a.order == 2) {
        Eigen::MatrixXd amat(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) amat(i, j) = a.at(i, j);
        const Eigen::MatrixXd ac = amat * c;
        return 2.0 * (ac * ac).trace();
    }
    if (m > 24) throw SizeError("hs_form_variance: order-3 contraction guard (dim > 24)");
    // Sum over the 3! pairings: <a, a with all slots transformed by C>.
    double out = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            for (int k = 0; k < m; ++k) {
                double tr = 0.0;
                for (int l = 0; l < m; ++l)
                    for (int p = 0; p < m; ++p)
                        for (int q = 0; q < m; ++q)
                            tr += a.at(l, p, q) * c(i, l) * c(j, p) * c(k, q);
                out += 6.0 * a.at(i, j, k) * tr;
            }
    return out;
}

Eigen::VectorXd project1(const std::function<double(double)>& f, const BasisSpec& basis) {
    const CompositeRule rule = basis.quadrature();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(basis.size);
    for (std::size_t i = 0; i < rule.x.size(); ++i) {
        const double fw = f(rule.x[i]) * rule.w[i];
        for (int j = 0; j < basis.size; ++j) out[j] += fw * basis.eval(j, rule.x[i]);
    }
    return out;
}

Eigen::MatrixXd project2(const std::function<double(double, double)>& f, const BasisSpec& basis) {
    const CompositeRule rule = basis.quadrature();
    const int n = static_cast<int>(rule.x.size());
    const int m = basis.size;
    Eigen::MatrixXd b(m, n);
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < n; ++i) b(j, i) = basis.eval(j, rule.x[i]) * rule.w[i];
    Eigen::MatrixXd fgrid(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) fgrid(i, j) = f(rule.x[i], rule.x[j]);
    return b * fgrid * b.transpose();
}

PairFunctional build_pair_functional(const std::function<double(double, double)>& f,
                                     const CovarianceModel& cov, const KernelContext& ctx,
                                     double residual_tol) {
    const BasisSpec& basis = cov.basis;
    const Eigen::MatrixXd a = project2(f, basis);
    const CompositeRule rule = basis.quadrature();
    double norm2 = 0.0;
    for (std::size_t i = 0; i < rule.x.size(); ++i)
        for (std::size_t j = 0; j < rule.x.size(); ++j) {
            const double v = f(rule.x[i], rule.x[j]);
            norm2 += rule.w[i] * rule.w[j] * v * v;
        }
    const double fnorm = std::sqrt(std::max(norm2, 0.0));
    if (basis.includes_constant) {
        const double marginal = std::max(a.row(0).cwiseAbs().maxCoeff(),
                                         a.col(0).cwiseAbs().maxCoeff());
        if (marginal > 1e-8 * std::max(1.0, fnorm))
            throw ConfigError("build_pair_functional: f must have zero marginal means");
    }
    PairFunctional pf;
    pf.form = HSForm::from_matrix(a);
    pf.residual = std::sqrt(std::max(0.0, norm2 - a.squaredNorm()));
    if (pf.residual > residual_tol * std::max(1.0, fnorm))
        throw NumericError("build_pair_functional: basis cannot resolve f (residual too large)");
    pf.kernel_term = integrate_against_kernel(ctx, f);
    return pf;
}

double pair_limit_functional(const PairFunctional& pf, const GaussianFieldSample& s,
                             const CovarianceModel& cov) {
    return hs_form_apply(pf.form, s, cov) + pf.kernel_term;
}

}  // namespace coalflow
