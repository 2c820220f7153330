#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "coalflow/kernels.hpp"
#include "coalflow/periodic_function.hpp"
#include "coalflow/point_measure.hpp"

// Integrals against point measures, factorial powers, the tensor/factorial
// conversion table, and the inclusion-exclusion calculus for monotone atom maps.

namespace coalflow {

inline constexpr double kTupleGuard = 1e7;  // |atoms|^k cap for tuple enumeration

using TupleFn = std::function<double(std::span<const double>)>;

double integrate(const PointMeasure& N, const std::function<double(double)>& f);
double integrate(const PointMeasure& N, const PeriodicFunction& f);

// Sum of F over ordered k-tuples of distinct atoms (k-th factorial power).
double factorial_integral(const PointMeasure& N, int k, const TupleFn& F);

// Sum of F over all ordered k-tuples (usual k-th tensor power).
double tensor_integral(const PointMeasure& N, int k, const TupleFn& F);

// Conversion coefficients between tensor and factorial integrals.  For each
// partition (l1 <= ... <= lk) of n:
//   tensor_n(f)    = sum_partitions to_tensor    * factorial_k(f collapsed),
//   factorial_n(f) = sum_partitions to_factorial * tensor_k(f collapsed),
// where "collapsed" repeats argument j of the k-argument diagonal l_j times.
// The coefficients are recovered by enumeration on generic configurations.
struct ConversionTable {
    struct Entry {
        std::vector<int> partition;  // ascending parts summing to n
        double to_tensor = 0.0;      // A-coefficient
        double to_factorial = 0.0;   // a-coefficient
    };
    int n = 0;
    std::vector<Entry> entries;
};
ConversionTable conversion_coefficients(int n);

// Evaluates f with arguments repeated according to `partition` on distinct
// (factorial) or arbitrary (tensor) atom tuples of the collapsed dimension.
double collapsed_factorial_integral(const PointMeasure& N, const std::vector<int>& partition,
                                    const TupleFn& F);
double collapsed_tensor_integral(const PointMeasure& N, const std::vector<int>& partition,
                                 const TupleFn& F);

// Integral of a periodic f over the block [k, k+1) (half-open).
double block_integral(const PointMeasure& N, const PeriodicFunction& f, int k);

// Centered, normalized block sum (sum_{k<n} (block_k - expected)) / sqrt(n).
double normalized_block_sum(const PointMeasure& N, const PeriodicFunction& f, int n,
                            const KernelContext& ctx);

// Counting measure of distinct map images (unit mass each).
PointMeasure image_count_measure(const PointMeasure& N, const MonotoneAtomMap& phi);

// Mass deposited at each image value by ordered k-tuples of distinct atoms
// whose extremes share that image; masses are integers.
struct WeightedAtoms {
    std::vector<double> atoms;
    std::vector<double> masses;
};
WeightedAtoms collision_tuple_masses(const PointMeasure& N, const MonotoneAtomMap& phi, int k);

// Left side: integral of f against the image-count measure.  Right side: the
// alternating tuple-measure series.  The two agree exactly.
std::pair<double, double> inclusion_exclusion_sides(const PointMeasure& N,
                                                    const MonotoneAtomMap& phi,
                                                    const std::function<double(double)>& f);

// Coalescence field xi_k(v): sum of pair-coalescence densities over ordered
// distinct k-tuples of atoms within `cutoff` of v (k = 1 or 2).
double coalescence_field(const PointMeasure& N, int k, double s, double v, double cutoff);

}  // namespace coalflow
