#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coalflow/flow_sim.hpp"
#include "coalflow/gaussian_limit.hpp"
#include "coalflow/kernels.hpp"
#include "coalflow/measure_calculus.hpp"
#include "coalflow/periodic_function.hpp"

// Replica ensembles and the statistical screens that compare simulated flow
// statistics against the analytic kernels.  Every result is reproducible
// bit-for-bit from (config, seed) at any thread count: replicas use
// counter-based streams and aggregation is an ordered reduction.

namespace coalflow {

// JSON-serializable description of a periodic test function.
struct FSpec {
    std::string type = "cos";  // cos | sin | bump | odd_bump | table | zero
    int k = 1;
    double eps = 0.2;
    double amplitude = 1.0;
    double shift = 0.0;
    std::vector<double> values;

    PeriodicFunction make() const;
    static FSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// Symmetric two-variable test function for pair-integral experiments.
struct F2Spec {
    std::string type = "sym_product";  // sym_product | disjoint_pair
    FSpec g;        // sym_product: f(x,y) = g(x) g(y)
    FSpec h1, h2;   // disjoint_pair: f(x,y) = h1(x)h2(y) + h2(x)h1(y)

    std::function<double(double, double)> make() const;
    bool vanishes_on_diagonal() const { return type == "disjoint_pair"; }
    static F2Spec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct ExperimentConfig {
    std::string kind;  // intensity | pair_density | clt_single | clt_multi_time |
                       // clt_multi_function | mixing | continuity | double_integral |
                       // xi_stationarity | web_coalescence
    double t = 1.0;
    std::vector<double> times;      // multi-time kinds; (t1, t2) for web/xi
    int n = 64;                     // block count / base length
    int R = 200;                    // replica count
    std::uint64_t seed = 1;
    FSpec f;
    std::vector<FSpec> functions;   // clt_multi_function
    F2Spec f2;                      // double_integral
    std::vector<double> h_list{2.0, 3.0, 4.0};          // mixing distances
    std::vector<double> gaps{0.0125, 0.025, 0.05, 0.1, 0.2};  // continuity
    double t_base = 0.4;                                 // continuity base time
    std::vector<double> positions{10.0, 20.0, 30.0};     // xi probes
    double pair_bin_center = 1.0, pair_bin_halfwidth = 0.2;  // web pair bin
    std::vector<double> z_list{0.25, 0.5, 1.0, 2.0};     // pair_density gaps
    double bin_width = 0.1;                              // pair_density bin
    double window_length = 64.0;                         // intensity / pair_density
    int basis_size = 8;                                  // gaussian side basis

    double grid_spacing = 0.01;
    double dt = 0.0;      // 0 = 1e-3 * t_min
    double margin = 0.0;  // 0 = 6 * sqrt(t_max)
    CoalescenceMode mode = CoalescenceMode::Bridge;
    double kernel_abs_tol = 1e-10;
    int quad_points = 64;
    nlohmann::json tolerances;  // per-check threshold overrides

    KernelContext kernel_context(double at_t) const;
    double tolerance(const std::string& name, double fallback) const;

    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct CheckResult {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    std::string relation = "<=";
    bool pass = false;
};

struct ExperimentResult {
    std::string kind;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;  // one row per replica
    nlohmann::json summary;
    std::vector<CheckResult> checks;
    double runtime_seconds = 0.0;
    int threads = 1;
    std::uint64_t seed = 0;

    bool all_pass() const;
    nlohmann::json summary_json() const;
};

// COALESCE_THREADS env > requested > hardware concurrency.
int resolve_threads(int requested);

ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads = 0);

}  // namespace coalflow
