#include "coalflow/measure_calculus.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "coalflow/rng.hpp"

namespace coalflow {

namespace {

void check_tuple_guard(std::size_t atoms, int k) {
    if (k < 1) throw ConfigError("tuple integral: order must be >= 1");
    if (std::pow(static_cast<double>(atoms), k) > kTupleGuard)
        throw SizeError("tuple integral: |atoms|^k exceeds enumeration guard");
}

// Enumerates ordered k-tuples; `distinct` skips tuples with repeated indices.
double tuple_sum(const PointMeasure& N, int k, const TupleFn& F, bool distinct) {
    check_tuple_guard(N.size(), k);
    if (N.empty()) return 0.0;
    const auto& u = N.atoms;
    std::array<std::size_t, 8> idx{};
    std::array<double, 8> args{};
    double total = 0.0;
    const std::size_t n = u.size();
    auto rec = [&](auto&& self, int pos) -> void {
        if (pos == k) {
            total += F(std::span<const double>(args.data(), static_cast<std::size_t>(k)));
            return;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (distinct) {
                bool used = false;
                for (int p = 0; p < pos; ++p) used |= (idx[p] == i);
                if (used) continue;
            }
            idx[pos] = i;
            args[pos] = u[i];
            self(self, pos + 1);
        }
    };
    rec(rec, 0);
    return total;
}

TupleFn collapse(const std::vector<int>& partition, const TupleFn& F) {
    return [&partition, &F](std::span<const double> xs) {
        std::array<double, 8> full{};
        std::size_t pos = 0;
        for (std::size_t j = 0; j < partition.size(); ++j)
            for (int r = 0; r < partition[j]; ++r) full[pos++] = xs[j];
        return F(std::span<const double>(full.data(), pos));
    };
}

std::vector<std::vector<int>> ascending_partitions(int n) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur;
    auto rec = [&](auto&& self, int rest, int min_part) -> void {
        if (rest == 0) {
            out.push_back(cur);
            return;
        }
        for (int p = min_part; p <= rest; ++p) {
            cur.push_back(p);
            self(self, rest - p, p);
            cur.pop_back();
        }
    };
    rec(rec, n, 1);
    return out;
}

// Least squares through the normal equations; tiny systems only.
std::vector<double> solve_least_squares(const std::vector<std::vector<double>>& X,
                                        const std::vector<double>& y) {
    const std::size_t m = X.size(), p = X[0].size();
    std::vector<std::vector<double>> A(p, std::vector<double>(p + 1, 0.0));
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < p; ++j)
            for (std::size_t r = 0; r < m; ++r) A[i][j] += X[r][i] * X[r][j];
        for (std::size_t r = 0; r < m; ++r) A[i][p] += X[r][i] * y[r];
    }
    for (std::size_t c = 0; c < p; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < p; ++r)
            if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
        std::swap(A[c], A[piv]);
        if (std::abs(A[c][c]) < 1e-12)
            throw NumericError("conversion_coefficients: singular enumeration system");
        for (std::size_t r = 0; r < p; ++r) {
            if (r == c) continue;
            const double f = A[r][c] / A[c][c];
            for (std::size_t k = c; k <= p; ++k) A[r][k] -= f * A[c][k];
        }
    }
    std::vector<double> beta(p);
    for (std::size_t i = 0; i < p; ++i) beta[i] = A[i][p] / A[i][i];
    return beta;
}

struct ProbeConfig {
    PointMeasure N;
    std::array<double, 4> poly;
    double eval(double x) const { return poly[0] + x * (poly[1] + x * (poly[2] + x * poly[3])); }
};

std::vector<ProbeConfig> probe_configs(int count) {
    std::vector<ProbeConfig> out;
    const RngStream rng = RngStream::for_replica(0x636f6e76ull, 0);  // fixed internal seed
    for (int j = 0; j < count; ++j) {
        ProbeConfig cfg;
        const int atoms = 4 + static_cast<int>(rng.uniform(j, 0, kStreamMisc) * 4.0);
        std::vector<double> u(atoms);
        for (int i = 0; i < atoms; ++i) u[i] = 2.0 * rng.uniform(j, 100 + i, kStreamMisc);
        std::sort(u.begin(), u.end());
        u.erase(std::unique(u.begin(), u.end()), u.end());
        cfg.N.atoms = u;
        cfg.N.window_lo = -1.0;
        cfg.N.window_hi = 3.0;
        for (int i = 0; i < 4; ++i) cfg.poly[i] = 2.0 * rng.uniform(j, 200 + i, kStreamMisc) - 1.0;
        out.push_back(std::move(cfg));
    }
    return out;
}

double binomial(int m, int k) {
    double c = 1.0;
    for (int i = 1; i <= k; ++i) c = c * (m - k + i) / i;
    return std::round(c);
}

}  // namespace

double integrate(const PointMeasure& N, const std::function<double(double)>& f) {
    double s = 0.0;
    for (double u : N.atoms) s += f(u);
    return s;
}

double integrate(const PointMeasure& N, const PeriodicFunction& f) {
    double s = 0.0;
    for (double u : N.atoms) s += f(u);
    return s;
}

double factorial_integral(const PointMeasure& N, int k, const TupleFn& F) {
    return tuple_sum(N, k, F, /*distinct=*/true);
}

double tensor_integral(const PointMeasure& N, int k, const TupleFn& F) {
    return tuple_sum(N, k, F, /*distinct=*/false);
}

double collapsed_factorial_integral(const PointMeasure& N, const std::vector<int>& partition,
                                    const TupleFn& F) {
    return factorial_integral(N, static_cast<int>(partition.size()), collapse(partition, F));
}

double collapsed_tensor_integral(const PointMeasure& N, const std::vector<int>& partition,
                                 const TupleFn& F) {
    return tensor_integral(N, static_cast<int>(partition.size()), collapse(partition, F));
}

ConversionTable conversion_coefficients(int n) {
    if (n < 1 || n > 4) throw ConfigError("conversion_coefficients: order must be in 1..4");
    ConversionTable table;
    table.n = n;
    const auto partitions = ascending_partitions(n);
    const std::size_t p = partitions.size();
    const auto probes = probe_configs(static_cast<int>(3 * p));

    // Symmetric product probe f(x1..xn) = prod poly(x_i).
    auto make_f = [](const ProbeConfig& cfg) {
        return TupleFn([&cfg](std::span<const double> xs) {
            double v = 1.0;
            for (double x : xs) v *= cfg.eval(x);
            return v;
        });
    };

    for (int side = 0; side < 2; ++side) {
        std::vector<std::vector<double>> X;
        std::vector<double> y;
        for (const auto& cfg : probes) {
            const TupleFn F = make_f(cfg);
            std::vector<double> row(p);
            for (std::size_t c = 0; c < p; ++c)
                row[c] = side == 0 ? collapsed_factorial_integral(cfg.N, partitions[c], F)
                                   : collapsed_tensor_integral(cfg.N, partitions[c], F);
            X.push_back(std::move(row));
            y.push_back(side == 0 ? tensor_integral(cfg.N, n, F)
                                  : factorial_integral(cfg.N, n, F));
        }
        const auto beta = solve_least_squares(X, y);
        for (std::size_t r = 0; r < X.size(); ++r) {
            double fit = 0.0;
            for (std::size_t c = 0; c < p; ++c) fit += X[r][c] * beta[c];
            if (std::abs(fit - y[r]) > 1e-6 * std::max(1.0, std::abs(y[r])))
                throw NumericError("conversion_coefficients: enumeration fit residual too large");
        }
        if (side == 0) {
            table.entries.resize(p);
            for (std::size_t c = 0; c < p; ++c) {
                table.entries[c].partition = partitions[c];
                table.entries[c].to_tensor =
                    std::abs(beta[c] - std::round(beta[c])) < 1e-6 ? std::round(beta[c]) : beta[c];
            }
        } else {
            for (std::size_t c = 0; c < p; ++c)
                table.entries[c].to_factorial =
                    std::abs(beta[c] - std::round(beta[c])) < 1e-6 ? std::round(beta[c]) : beta[c];
        }
    }
    return table;
}

double block_integral(const PointMeasure& N, const PeriodicFunction& f, int k) {
    if (k < N.window_lo || k + 1.0 > N.window_hi)
        throw WindowError("block_integral: block outside window");
    auto first = std::lower_bound(N.atoms.begin(), N.atoms.end(), static_cast<double>(k));
    auto last = std::lower_bound(N.atoms.begin(), N.atoms.end(), k + 1.0);
    double s = 0.0;
    for (auto it = first; it != last; ++it) s += f(*it);
    return s;
}

double normalized_block_sum(const PointMeasure& N, const PeriodicFunction& f, int n,
                            const KernelContext& ctx) {
    if (n < 1) throw ConfigError("normalized_block_sum: need at least one block");
    if (N.window_lo > 0.0 || N.window_hi < static_cast<double>(n))
        throw WindowError("normalized_block_sum: window does not cover [0, n]");
    const double mean = block_mean(ctx, f);
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += block_integral(N, f, k) - mean;
    return s / std::sqrt(static_cast<double>(n));
}

PointMeasure image_count_measure(const PointMeasure& N, const MonotoneAtomMap& phi) {
    phi.validate(N);
    PointMeasure nu;
    for (std::size_t i = 0; i < phi.values.size(); ++i)
        if (i == 0 || phi.values[i] != phi.values[i - 1]) nu.atoms.push_back(phi.values[i]);
    if (nu.atoms.empty()) {
        nu.window_lo = N.window_lo;
        nu.window_hi = N.window_hi;
    } else {
        nu.window_lo = nu.atoms.front();
        nu.window_hi = std::nextafter(nu.atoms.back(), nu.atoms.back() + 1.0);
    }
    return nu;
}

WeightedAtoms collision_tuple_masses(const PointMeasure& N, const MonotoneAtomMap& phi, int k) {
    phi.validate(N);
    check_tuple_guard(N.size(), std::min(k, 4));
    if (k < 1) throw ConfigError("collision_tuple_masses: order must be >= 1");
    WeightedAtoms out;
    // phi is monotone, so phi(min) == phi(max) forces the whole tuple into one
    // level set; a level set of size m contributes m!/(m-k)! ordered tuples.
    std::size_t i = 0;
    while (i < phi.values.size()) {
        std::size_t j = i;
        while (j + 1 < phi.values.size() && phi.values[j + 1] == phi.values[i]) ++j;
        const int m = static_cast<int>(j - i + 1);
        if (m >= k) {
            if (m > 52) throw SizeError("collision_tuple_masses: level set too large");
            double mass = 1.0;
            for (int r = 0; r < k; ++r) mass *= (m - r);
            out.atoms.push_back(phi.values[i]);
            out.masses.push_back(mass);
        }
        i = j + 1;
    }
    return out;
}

std::pair<double, double> inclusion_exclusion_sides(const PointMeasure& N,
                                                    const MonotoneAtomMap& phi,
                                                    const std::function<double(double)>& f) {
    phi.validate(N);
    double lhs = 0.0, rhs = 0.0;
    std::size_t i = 0;
    while (i < phi.values.size()) {
        std::size_t j = i;
        while (j + 1 < phi.values.size() && phi.values[j + 1] == phi.values[i]) ++j;
        const int m = static_cast<int>(j - i + 1);
        if (m > 52) throw SizeError("inclusion_exclusion_sides: level set too large");
        const double fy = f(phi.values[i]);
        lhs += fy;
        // (1/k!) * m!/(m-k)! = C(m,k); the alternating sum telescopes to 1.
        double series = 0.0;
        for (int k = 1; k <= m; ++k) series += (k % 2 == 1 ? 1.0 : -1.0) * binomial(m, k);
        rhs += series * fy;
        i = j + 1;
    }
    return {lhs, rhs};
}

double coalescence_field(const PointMeasure& N, int k, double s, double v, double cutoff) {
    if (k != 1 && k != 2) throw ConfigError("coalescence_field: order must be 1 or 2");
    if (!(s > 0.0)) throw std::domain_error("coalescence_field: elapsed time must be > 0");
    if (cutoff < 8.0 * std::sqrt(s))
        throw ConfigError("coalescence_field: cutoff below 8*sqrt(s)");
    auto first = std::lower_bound(N.atoms.begin(), N.atoms.end(), v - cutoff);
    auto last = std::upper_bound(N.atoms.begin(), N.atoms.end(), v + cutoff);
    if (k == 1) {
        const double norm = 1.0 / std::sqrt(2.0 * M_PI * s);
        double out = 0.0;
        for (auto it = first; it != last; ++it)
            out += norm * std::exp(-(v - *it) * (v - *it) / (2.0 * s));
        return out;
    }
    double out = 0.0;
    for (auto it = first; it != last; ++it)
        for (auto jt = std::next(it); jt != last; ++jt)
            out += 2.0 * coalescence_density(s, *it, *jt, v);
    return out;
}

}  // namespace coalflow
