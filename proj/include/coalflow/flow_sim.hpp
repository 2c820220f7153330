#pragma once

#include <cstdint>
#include <vector>

#include "coalflow/point_measure.hpp"
#include "coalflow/rng.hpp"

// Coalescing Brownian motions started from a fine grid.  Each particle keeps
// an exact Brownian trajectory; adjacent pairs merge according to the exact
// zero-crossing probability of the Brownian bridge of their gap, so pairwise
// meeting times are simulated without time-step bias.

namespace coalflow {

enum class CoalescenceMode { Bridge, OrderMerge };

struct SimConfig {
    double window_lo = 0.0;
    double window_hi = 1.0;
    double margin = 6.0;
    double grid_spacing = 0.01;
    double dt = 1e-3;
    std::vector<double> checkpoints;  // sorted, > 0
    std::uint64_t seed = 0;
    CoalescenceMode mode = CoalescenceMode::Bridge;

    double t_min() const { return checkpoints.empty() ? 0.0 : checkpoints.front(); }
    double t_max() const { return checkpoints.empty() ? 0.0 : checkpoints.back(); }

    void validate() const;  // throws ConfigError naming the violated constraint

    // Fills spacing/dt/margin defaults from the checkpoint list.
    static SimConfig standard(double window_lo, double window_hi,
                              std::vector<double> checkpoints, std::uint64_t seed,
                              double grid_spacing = 0.01);
};

// Inclusive range of initial grid indices a live particle has absorbed.
struct AncestrySpan {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
};

struct ParticleSystem {
    std::vector<double> pos;        // strictly increasing
    std::vector<AncestrySpan> anc;  // aligned with pos; spans partition the grid
    double time = 0.0;
    std::uint64_t steps_taken = 0;

    std::size_t size() const { return pos.size(); }
    void check_invariants() const;  // order, ancestry partition
};

ParticleSystem make_grid(const SimConfig& cfg);

// Exact probability that the gap bridge (variance rate 2) from d0 to d1 over
// one step of length dt touches zero: exp(-d0*d1/dt); 1 when d1 <= 0.
double merge_probability(double d0, double d1, double dt);

void step(ParticleSystem& ps, const SimConfig& cfg, double dt, const RngStream& rng);

// Repeated steps of cfg.dt with a shortened final step; snaps time to t.
void run_to(ParticleSystem& ps, const SimConfig& cfg, double t, const RngStream& rng);

// Atoms in [lo, hi) at the current time, which must be one of the checkpoints.
PointMeasure extract_point_measure(const ParticleSystem& ps, const SimConfig& cfg, double lo,
                                   double hi);

// Monotone image of a checkpoint measure under the flow to a later time.
struct WebMap {
    PointMeasure source;
    std::vector<double> image;  // aligned with source atoms, non-decreasing

    void validate() const;
    MonotoneAtomMap atom_map() const { return MonotoneAtomMap{image}; }
};

// Continues the realization to t2 and maps each source atom to the position of
// its carrier particle at t2.
WebMap advance_with_map(ParticleSystem& ps, const SimConfig& cfg, double t2,
                        const RngStream& rng, double lo, double hi);

}  // namespace coalflow
