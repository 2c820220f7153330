#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "coalflow/measure_calculus.hpp"
#include "coalflow/rng.hpp"

using namespace coalflow;

namespace {

PointMeasure measure(std::vector<double> atoms, double lo = -100.0, double hi = 100.0) {
    PointMeasure N;
    N.atoms = std::move(atoms);
    N.window_lo = lo;
    N.window_hi = hi;
    N.validate();
    return N;
}

// Random measure + monotone map with controllable cluster sizes.
struct RandomCase {
    PointMeasure N;
    MonotoneAtomMap phi;
};

RandomCase random_case(const RngStream& rng, int id, int max_cluster) {
    RandomCase rc;
    std::vector<double> atoms;
    const int n_atoms = 3 + static_cast<int>(rng.uniform(id, 0, kStreamMisc) * 10.0);
    for (int i = 0; i < n_atoms; ++i)
        atoms.push_back(20.0 * rng.uniform(id, 10 + i, kStreamMisc));
    std::sort(atoms.begin(), atoms.end());
    atoms.erase(std::unique(atoms.begin(), atoms.end()), atoms.end());
    rc.N = measure(atoms);
    double level = atoms.front() - 1.0;
    int remaining = 0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        if (remaining == 0) {
            remaining = 1 + static_cast<int>(rng.uniform(id, 100 + static_cast<int>(i),
                                                         kStreamMisc) *
                                             max_cluster);
            level += 0.5 + rng.uniform(id, 200 + static_cast<int>(i), kStreamMisc);
        }
        rc.phi.values.push_back(level);
        --remaining;
    }
    return rc;
}

}  // namespace

TEST_CASE("integrate") {
    CHECK(integrate(measure({0.3, 0.7}), [](double) { return 1.0; }) == 2.0);
    CHECK(integrate(measure({}), [](double) { return 5.0; }) == 0.0);
    CHECK(std::abs(integrate(measure({0.25}), PeriodicFunction::cosine(1))) < 1e-15);
}

TEST_CASE("factorial and tensor integrals") {
    const PointMeasure N3 = measure({0.1, 0.4, 0.9});
    const TupleFn one = [](std::span<const double>) { return 1.0; };
    CHECK(factorial_integral(N3, 2, one) == 6.0);   // 3*2 ordered pairs
    CHECK(tensor_integral(N3, 2, one) == 9.0);      // 3^2
    CHECK(factorial_integral(N3, 1, one) == 3.0);
    const PointMeasure N2 = measure({0.0, 1.0});
    CHECK(factorial_integral(N2, 2, [](std::span<const double> x) { return x[0] + x[1]; }) ==
          2.0);
    const PointMeasure N1 = measure({0.6});
    CHECK(tensor_integral(N1, 3, [](std::span<const double> x) {
              return x[0] * 10.0 + x[1] * 1.0 + x[2] * 0.1;
          }) == doctest::Approx(0.6 * 11.1));

    // tensor - factorial at k=2 equals the diagonal sum
    const PointMeasure N = measure({0.2, 0.5, 0.8, 1.5});
    const TupleFn F = [](std::span<const double> x) {
        return std::sin(x[0]) * std::cos(x[1]) + x[0] * x[1];
    };
    double diag = 0.0;
    for (double u : N.atoms) diag += std::sin(u) * std::cos(u) + u * u;
    CHECK(tensor_integral(N, 2, F) - factorial_integral(N, 2, F) ==
          doctest::Approx(diag).epsilon(1e-13));

    // enumeration guard
    std::vector<double> big(200);
    for (int i = 0; i < 200; ++i) big[i] = i;
    CHECK_THROWS_AS(factorial_integral(measure(big, -1.0, 300.0), 4, one), SizeError);
}

TEST_CASE("factorial integral is symmetric for symmetric integrands") {
    const PointMeasure N = measure({0.1, 0.7, 1.3, 2.9});
    const TupleFn sym = [](std::span<const double> x) { return (x[0] + x[1]) * (x[0] + x[1]); };
    const TupleFn swapped = [](std::span<const double> x) {
        return (x[1] + x[0]) * (x[1] + x[0]);
    };
    CHECK(factorial_integral(N, 2, sym) == factorial_integral(N, 2, swapped));
}

TEST_CASE("conversion coefficients") {
    const ConversionTable t2 = conversion_coefficients(2);
    REQUIRE(t2.entries.size() == 2);  // (1,1), (2)
    CHECK(t2.entries[0].to_tensor == 1.0);
    CHECK(t2.entries[1].to_tensor == 1.0);
    CHECK(t2.entries[0].to_factorial == 1.0);
    CHECK(t2.entries[1].to_factorial == -1.0);

    const ConversionTable t3 = conversion_coefficients(3);
    REQUIRE(t3.entries.size() == 3);  // (1,1,1), (1,2), (3)
    CHECK(t3.entries[0].partition == std::vector<int>{1, 1, 1});
    CHECK(t3.entries[1].partition == std::vector<int>{1, 2});
    CHECK(t3.entries[2].partition == std::vector<int>{3});
    CHECK(t3.entries[0].to_tensor == 1.0);
    CHECK(t3.entries[1].to_tensor == 3.0);
    CHECK(t3.entries[2].to_tensor == 1.0);

    const ConversionTable t4 = conversion_coefficients(4);
    REQUIRE(t4.entries.size() == 5);
    for (const auto& e : t4.entries)
        CHECK(e.to_tensor == std::round(e.to_tensor));  // set-partition counts

    CHECK_THROWS_AS(conversion_coefficients(5), ConfigError);
    CHECK_THROWS_AS(conversion_coefficients(0), ConfigError);
}

TEST_CASE("conversion identities round-trip on random configurations") {
    const RngStream rng = RngStream::for_replica(0xabc, 0);
    int checked = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const int n = 2 + rep % 3;
        const ConversionTable table = conversion_coefficients(n);
        std::vector<double> atoms;
        const int n_atoms = 3 + static_cast<int>(rng.uniform(rep, 0, kStreamMisc) * 5.0);
        for (int i = 0; i < n_atoms; ++i)
            atoms.push_back(3.0 * rng.uniform(rep, 1 + i, kStreamMisc));
        std::sort(atoms.begin(), atoms.end());
        atoms.erase(std::unique(atoms.begin(), atoms.end()), atoms.end());
        const PointMeasure N = measure(atoms);
        const double c0 = rng.uniform(rep, 50, kStreamMisc);
        const double c1 = 2.0 * rng.uniform(rep, 51, kStreamMisc) - 1.0;
        const double c2 = 2.0 * rng.uniform(rep, 52, kStreamMisc) - 1.0;
        const TupleFn F = [&](std::span<const double> xs) {
            double v = 1.0;
            for (double x : xs) v *= c0 + c1 * x + c2 * x * x;
            return v;
        };
        double tensor_via_factorial = 0.0, factorial_via_tensor = 0.0;
        for (const auto& e : table.entries) {
            tensor_via_factorial += e.to_tensor * collapsed_factorial_integral(N, e.partition, F);
            factorial_via_tensor += e.to_factorial * collapsed_tensor_integral(N, e.partition, F);
        }
        const double tensor = tensor_integral(N, n, F);
        const double factorial = factorial_integral(N, n, F);
        CHECK(tensor_via_factorial ==
              doctest::Approx(tensor).epsilon(1e-9).scale(std::max(1.0, std::abs(tensor))));
        CHECK(factorial_via_tensor ==
              doctest::Approx(factorial).epsilon(1e-9).scale(std::max(1.0, std::abs(factorial))));
        ++checked;
    }
    CHECK(checked == 100);
}

TEST_CASE("block integrals") {
    const PointMeasure N = measure({0.2, 0.7, 1.1, 3.5}, 0.0, 4.0);
    const PeriodicFunction one = PeriodicFunction::table({1.0, 1.0});
    CHECK(block_integral(N, one, 0) == 2.0);
    CHECK(block_integral(N, one, 1) == 1.0);
    CHECK(block_integral(N, PeriodicFunction::cosine(1), 2) == 0.0);  // empty block
    double total = 0.0;
    for (int k = 0; k < 4; ++k) total += block_integral(N, PeriodicFunction::cosine(1), k);
    CHECK(total == doctest::Approx(integrate(N, PeriodicFunction::cosine(1))).epsilon(1e-13));
    CHECK_THROWS_AS(block_integral(N, one, 4), WindowError);
    CHECK_THROWS_AS(block_integral(N, one, -1), WindowError);
}

TEST_CASE("normalized block sum") {
    const KernelContext ctx = KernelContext::make(1.0);
    const PeriodicFunction f = PeriodicFunction::cosine(1);
    const PointMeasure empty = measure({}, 0.0, 8.0);
    CHECK(normalized_block_sum(empty, f, 8, ctx) == 0.0);
    const PointMeasure single = measure({0.25}, 0.0, 1.0);
    CHECK(normalized_block_sum(single, f, 1, ctx) ==
          doctest::Approx(std::cos(M_PI / 2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(normalized_block_sum(single, f, 4, ctx), WindowError);
}

TEST_CASE("image count measure") {
    const PointMeasure N = measure({0.0, 1.0, 2.0});
    MonotoneAtomMap inj{{0.5, 1.5, 2.5}};
    CHECK(image_count_measure(N, inj).size() == 3);
    MonotoneAtomMap constant{{1.0, 1.0, 1.0}};
    const PointMeasure nu = image_count_measure(N, constant);
    REQUIRE(nu.size() == 1);
    CHECK(nu.atoms[0] == 1.0);
    MonotoneAtomMap bad{{1.0, 0.5, 2.0}};
    CHECK_THROWS_AS(image_count_measure(N, bad), NumericError);
}

TEST_CASE("collision tuple masses") {
    const PointMeasure N = measure({0.0, 1.0});
    MonotoneAtomMap both{{3.0, 3.0}};
    const WeightedAtoms m2 = collision_tuple_masses(N, both, 2);
    REQUIRE(m2.atoms.size() == 1);
    CHECK(m2.atoms[0] == 3.0);
    CHECK(m2.masses[0] == 2.0);

    MonotoneAtomMap inj{{3.0, 4.0}};
    CHECK(collision_tuple_masses(N, inj, 2).atoms.empty());

    // level set of size m contributes m!/(m-k)! ordered tuples
    const PointMeasure N5 = measure({0.0, 1.0, 2.0, 3.0, 4.0});
    MonotoneAtomMap all5{{7.0, 7.0, 7.0, 7.0, 7.0}};
    CHECK(collision_tuple_masses(N5, all5, 1).masses[0] == 5.0);
    CHECK(collision_tuple_masses(N5, all5, 2).masses[0] == 20.0);
    CHECK(collision_tuple_masses(N5, all5, 3).masses[0] == 60.0);
    CHECK(collision_tuple_masses(N5, all5, 5).masses[0] == 120.0);
    CHECK(collision_tuple_masses(N5, all5, 6).atoms.empty());
}

TEST_CASE("collision tuple masses agree with brute-force tuple enumeration") {
    const RngStream rng = RngStream::for_replica(0xdef, 1);
    for (int rep = 0; rep < 40; ++rep) {
        const RandomCase rc = random_case(rng, rep, 4);
        for (int k = 1; k <= 3; ++k) {
            const WeightedAtoms fast = collision_tuple_masses(rc.N, rc.phi, k);
            // enumeration over ordered distinct tuples with equal extreme images
            double total_fast = 0.0;
            for (double m : fast.masses) total_fast += m;
            const auto& phi = rc.phi.values;
            const auto& atoms = rc.N.atoms;
            auto image_of = [&](double atom) {
                const auto it = std::lower_bound(atoms.begin(), atoms.end(), atom);
                return phi[it - atoms.begin()];
            };
            const double total_slow = factorial_integral(
                rc.N, k, [&](std::span<const double> xs) {
                    const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
                    return image_of(*mn) == image_of(*mx) ? 1.0 : 0.0;
                });
            CHECK(total_fast == doctest::Approx(total_slow).epsilon(1e-12));
        }
    }
}

TEST_CASE("inclusion-exclusion identity") {
    // single cluster of two atoms mapped to one point
    const PointMeasure N2 = measure({0.0, 1.0});
    MonotoneAtomMap both{{3.0, 3.0}};
    const auto [lhs2, rhs2] =
        inclusion_exclusion_sides(N2, both, [](double y) { return y * y; });
    CHECK(lhs2 == 9.0);
    CHECK(rhs2 == doctest::Approx(9.0).epsilon(1e-14));

    // injective map: both sides reduce to a plain sum over images
    const PointMeasure N3 = measure({0.0, 1.0, 2.0});
    MonotoneAtomMap inj{{0.5, 1.5, 2.5}};
    const auto [lhsi, rhsi] = inclusion_exclusion_sides(N3, inj, [](double y) { return y; });
    CHECK(lhsi == doctest::Approx(4.5).epsilon(1e-14));
    CHECK(rhsi == doctest::Approx(4.5).epsilon(1e-14));
}

TEST_CASE("inclusion-exclusion identity holds on 200 random configurations") {
    const RngStream rng = RngStream::for_replica(0x1ee7, 2);
    for (int rep = 0; rep < 200; ++rep) {
        const RandomCase rc = random_case(rng, rep, 5);
        const auto [lhs, rhs] = inclusion_exclusion_sides(
            rc.N, rc.phi, [](double y) { return std::sin(y) + 0.3 * y; });
        CHECK(std::abs(lhs - rhs) <= 1e-9 * std::max(1.0, std::abs(lhs)));
    }
}

TEST_CASE("coalescence field") {
    const double s = 0.5;
    const double cutoff = 8.0 * std::sqrt(s);
    const PointMeasure empty = measure({});
    CHECK(coalescence_field(empty, 1, s, 0.0, cutoff) == 0.0);
    CHECK(coalescence_field(empty, 2, s, 0.0, cutoff) == 0.0);
    const PointMeasure atv = measure({2.0});
    CHECK(coalescence_field(atv, 1, s, 2.0, cutoff) ==
          doctest::Approx(1.0 / std::sqrt(2.0 * M_PI * s)).epsilon(1e-13));
    CHECK_THROWS_AS(coalescence_field(atv, 1, s, 2.0, 0.5), ConfigError);
    CHECK_THROWS_AS(coalescence_field(atv, 3, s, 2.0, cutoff), ConfigError);
    // ordered pairs: both orders contribute the same q value
    const PointMeasure pair = measure({1.0, 1.6});
    const double xi2 = coalescence_field(pair, 2, s, 1.3, cutoff);
    CHECK(xi2 == doctest::Approx(2.0 * coalescence_density(s, 1.0, 1.6, 1.3)).epsilon(1e-13));
}
