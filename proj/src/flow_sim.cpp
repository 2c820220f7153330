#include "coalflow/flow_sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace coalflow {

namespace {
constexpr double kTimeEps = 1e-12;
}

void SimConfig::validate() const {
    if (!(window_hi > window_lo)) throw ConfigError("SimConfig: window_hi must exceed window_lo");
    if (!(grid_spacing > 0.0)) throw ConfigError("SimConfig: grid_spacing must be > 0");
    if (!(dt > 0.0)) throw ConfigError("SimConfig: dt must be > 0");
    if (checkpoints.empty()) throw ConfigError("SimConfig: need at least one checkpoint");
    double prev = 0.0;
    for (double t : checkpoints) {
        if (!(t > prev)) throw ConfigError("SimConfig: checkpoints must be sorted and > 0");
        prev = t;
    }
    const double tmin = t_min(), tmax = t_max();
    if (grid_spacing > std::sqrt(tmin) / 20.0 + kTimeEps)
        throw ConfigError("SimConfig: grid_spacing exceeds sqrt(t_min)/20 (violates "
                          "continuum-start fidelity)");
    if (margin < 6.0 * std::sqrt(tmax) - kTimeEps)
        throw ConfigError("SimConfig: margin below 6*sqrt(t_max) (boundary influence)");
    if (dt > tmin / 100.0 + kTimeEps)
        throw ConfigError("SimConfig: dt exceeds t_min/100");
}

SimConfig SimConfig::standard(double window_lo, double window_hi,
                              std::vector<double> checkpoints, std::uint64_t seed,
                              double grid_spacing) {
    SimConfig cfg;
    cfg.window_lo = window_lo;
    cfg.window_hi = window_hi;
    cfg.checkpoints = std::move(checkpoints);
    cfg.seed = seed;
    const double tmin = cfg.t_min(), tmax = cfg.t_max();
    cfg.grid_spacing = std::min(grid_spacing, std::sqrt(tmin) / 20.0);
    cfg.dt = 1e-3 * tmin;
    cfg.margin = 6.0 * std::sqrt(tmax);
    cfg.validate();
    return cfg;
}

void ParticleSystem::check_invariants() const {
    for (std::size_t i = 0; i + 1 < pos.size(); ++i) {
        if (!(pos[i] < pos[i + 1]))
            throw NumericError("ParticleSystem: positions not strictly increasing");
        if (anc[i].hi + 1 != anc[i + 1].lo)
            throw NumericError("ParticleSystem: ancestry spans do not partition the grid");
    }
    for (std::size_t i = 0; i < pos.size(); ++i)
        if (anc[i].lo > anc[i].hi) throw NumericError("ParticleSystem: empty ancestry span");
}

ParticleSystem make_grid(const SimConfig& cfg) {
    cfg.validate();
    const double lo = cfg.window_lo - cfg.margin;
    const double hi = cfg.window_hi + cfg.margin;
    const auto n_steps = static_cast<std::int64_t>(std::llround((hi - lo) / cfg.grid_spacing));
    ParticleSystem ps;
    ps.pos.reserve(n_steps + 1);
    ps.anc.reserve(n_steps + 1);
    for (std::int64_t i = 0; i <= n_steps; ++i) {
        ps.pos.push_back(lo + i * cfg.grid_spacing);
        ps.anc.push_back({i, i});
    }
    return ps;
}

double merge_probability(double d0, double d1, double dt) {
    if (d1 <= 0.0) return 1.0;
    // Bridge of the gap process: variance rate 2, so P(hit 0) = exp(-2*d0*d1/(2*dt)).
    return std::exp(-d0 * d1 / dt);
}

void step(ParticleSystem& ps, const SimConfig& cfg, double dt, const RngStream& rng) {
    if (!(dt > 0.0)) throw ConfigError("step: dt must be > 0");
    const std::size_t n = ps.pos.size();
    if (n == 0) {
        ++ps.steps_taken;
        ps.time += dt;
        return;
    }
    const double sd = std::sqrt(dt);
    static thread_local std::vector<double> moved;
    static thread_local std::vector<char> link;
    moved.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        moved[i] = ps.pos[i] + sd * rng.normal(ps.steps_taken,
                                               static_cast<std::uint32_t>(ps.anc[i].lo),
                                               kStreamMove);
    // Merge decisions per adjacent pair; link[i] joins particles i-1 and i.
    link.assign(n, 0);
    for (std::size_t i = 1; i < n; ++i) {
        const double d1 = moved[i] - moved[i - 1];
        if (d1 <= 0.0) {
            link[i] = 1;
            continue;
        }
        if (cfg.mode == CoalescenceMode::Bridge) {
            const double d0 = ps.pos[i] - ps.pos[i - 1];
            const double ex = d0 * d1 / dt;
            if (ex < 40.0 &&
                rng.uniform(ps.steps_taken, static_cast<std::uint32_t>(ps.anc[i].lo),
                            kStreamMerge) < std::exp(-ex))
                link[i] = 1;
        }
    }
    // Collapse linked runs; the left survivor keeps its post-increment position.
    std::size_t out = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && link[j + 1]) ++j;
        ps.pos[out] = moved[i];
        ps.anc[out] = {ps.anc[i].lo, ps.anc[j].hi};
        ++out;
        i = j + 1;
    }
    ps.pos.resize(out);
    ps.anc.resize(out);
    // Survivors of different runs can still have crossed; merge until sorted.
    bool again = true;
    while (again) {
        again = false;
        std::size_t w = 0;
        for (std::size_t r = 1; r < ps.pos.size(); ++r) {
            if (ps.pos[r] <= ps.pos[w]) {
                ps.anc[w].hi = ps.anc[r].hi;
                again = true;
            } else {
                ++w;
                ps.pos[w] = ps.pos[r];
                ps.anc[w] = ps.anc[r];
            }
        }
        ps.pos.resize(w + 1);
        ps.anc.resize(w + 1);
    }
    ++ps.steps_taken;
    ps.time += dt;
}

void run_to(ParticleSystem& ps, const SimConfig& cfg, double t, const RngStream& rng) {
    if (t < ps.time - kTimeEps) throw ConfigError("run_to: target time is in the past");
    while (ps.time < t - kTimeEps * std::max(1.0, t)) {
        const double h = std::min(cfg.dt, t - ps.time);
        step(ps, cfg, h, rng);
    }
    ps.time = t;
}

PointMeasure extract_point_measure(const ParticleSystem& ps, const SimConfig& cfg, double lo,
                                   double hi) {
    bool at_checkpoint = false;
    for (double t : cfg.checkpoints) at_checkpoint |= std::abs(ps.time - t) <= 1e-9;
    if (!at_checkpoint)
        throw ConfigError("extract_point_measure: current time is not a checkpoint");
    PointMeasure N;
    N.window_lo = lo;
    N.window_hi = hi;
    auto first = std::lower_bound(ps.pos.begin(), ps.pos.end(), lo);
    auto last = std::lower_bound(ps.pos.begin(), ps.pos.end(), hi);
    N.atoms.assign(first, last);
    return N;
}

void WebMap::validate() const {
    if (image.size() != source.atoms.size())
        throw ConfigError("WebMap: image size does not match source atoms");
    for (std::size_t i = 0; i + 1 < image.size(); ++i)
        if (image[i] > image[i + 1]) throw NumericError("WebMap: image not monotone");
}

WebMap advance_with_map(ParticleSystem& ps, const SimConfig& cfg, double t2,
                        const RngStream& rng, double lo, double hi) {
    WebMap map;
    map.source = extract_point_measure(ps, cfg, lo, hi);
    // Remember the leftmost ancestor of each source atom; after further
    // coalescence the carrier at t2 is the particle whose span contains it.
    std::vector<std::int64_t> marks;
    marks.reserve(map.source.size());
    {
        std::size_t k = 0;
        for (double a : map.source.atoms) {
            while (k < ps.pos.size() && ps.pos[k] < a) ++k;
            marks.push_back(ps.anc[k].lo);
        }
    }
    if (t2 > ps.time) run_to(ps, cfg, t2, rng);
    map.image.reserve(marks.size());
    std::size_t k = 0;
    for (std::int64_t m : marks) {
        while (k + 1 < ps.anc.size() && ps.anc[k].hi < m) ++k;
        map.image.push_back(ps.pos[k]);
    }
    map.validate();
    return map;
}

}  // namespace coalflow
