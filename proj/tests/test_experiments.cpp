#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "coalflow/experiments.hpp"
#include "coalflow/stats.hpp"

using namespace coalflow;

namespace {

ExperimentConfig clt_config(int n, int R, std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.kind = "clt_single";
    cfg.t = 1.0;
    cfg.n = n;
    cfg.R = R;
    cfg.seed = seed;
    cfg.grid_spacing = 0.02;
    return cfg;
}

}  // namespace

TEST_CASE("results are reproducible and thread-count independent") {
    const ExperimentConfig cfg = clt_config(16, 100, 31);
    const ExperimentResult a = run_experiment(cfg, 1);
    const ExperimentResult b = run_experiment(cfg, 2);
    const ExperimentResult c = run_experiment(cfg, 1);
    REQUIRE(a.rows.size() == b.rows.size());
    CHECK(a.rows == b.rows);  // bitwise across thread counts
    CHECK(a.rows == c.rows);
    CHECK(a.summary.dump() == b.summary.dump());
}

TEST_CASE("zero test function gives a degenerate statistic") {
    ExperimentConfig cfg = clt_config(16, 100, 3);
    cfg.f = FSpec{"zero"};
    const ExperimentResult res = run_experiment(cfg, 2);
    for (const auto& row : res.rows) CHECK(row[1] == 0.0);
    CHECK(res.all_pass());
}

TEST_CASE("duplicate times give perfectly correlated statistics") {
    ExperimentConfig cfg;
    cfg.kind = "clt_multi_time";
    cfg.times = {1.0, 1.0};
    cfg.n = 16;
    cfg.R = 100;
    cfg.seed = 4;
    cfg.grid_spacing = 0.02;
    const ExperimentResult res = run_experiment(cfg, 2);
    for (const auto& row : res.rows) CHECK(row[1] == row[2]);
}

TEST_CASE("an antisymmetric function pair is exactly anticorrelated") {
    ExperimentConfig cfg;
    cfg.kind = "clt_multi_function";
    cfg.t = 1.0;
    cfg.n = 16;
    cfg.R = 100;
    cfg.seed = 6;
    cfg.grid_spacing = 0.02;
    cfg.functions = {FSpec{"cos", 1, 0.2, 1.0}, FSpec{"cos", 1, 0.2, -1.0}};
    const ExperimentResult res = run_experiment(cfg, 2);
    for (const auto& row : res.rows) CHECK(row[1] == doctest::Approx(-row[2]).epsilon(1e-12));
    std::vector<double> a, b;
    for (const auto& row : res.rows) {
        a.push_back(row[1]);
        b.push_back(row[2]);
    }
    const Covariance cov = sample_covariance(a, b);
    const SampleStats sa = sample_stats(a);
    CHECK(cov.value / sa.variance == doctest::Approx(-1.0).epsilon(1e-10));
}

TEST_CASE("block-count stability of the variance estimate") {
    ExperimentConfig c32 = clt_config(32, 500, 8);
    ExperimentConfig c64 = clt_config(64, 500, 9);
    const ExperimentResult r32 = run_experiment(c32, 2);
    const ExperimentResult r64 = run_experiment(c64, 2);
    const double v32 = r32.summary["x"]["variance"].get<double>();
    const double v64 = r64.summary["x"]["variance"].get<double>();
    const double se32 = r32.summary["x"]["se_variance"].get<double>();
    const double se64 = r64.summary["x"]["se_variance"].get<double>();
    CHECK(std::abs(v32 - v64) <= 3.0 * std::sqrt(se32 * se32 + se64 * se64));
}

TEST_CASE("mixing summary structure and trivial-event sanity row") {
    ExperimentConfig cfg;
    cfg.kind = "mixing";
    cfg.t = 1.0;
    cfg.R = 300;
    cfg.seed = 10;
    cfg.h_list = {2.0, 3.0};
    cfg.grid_spacing = 0.02;
    const ExperimentResult res = run_experiment(cfg, 2);
    CHECK(res.summary["per_h"].size() == 2);
    CHECK(res.all_pass());
    // identical events on both sides: defect is p(1-p) by definition
    std::vector<double> sl;
    for (const auto& row : res.rows) sl.push_back(row[1]);
    const double q = quantile(sl, 0.5);
    double p = 0.0, pab = 0.0;
    for (double v : sl) {
        p += v <= q ? 1.0 : 0.0;
        pab += v <= q ? 1.0 : 0.0;
    }
    p /= sl.size();
    pab /= sl.size();
    CHECK(std::abs(pab - p * p) == doctest::Approx(p * (1.0 - p)).epsilon(1e-12));
}

TEST_CASE("continuity requires an admissible test function") {
    ExperimentConfig cfg;
    cfg.kind = "continuity";
    cfg.n = 16;
    cfg.R = 100;
    cfg.seed = 11;
    cfg.f = FSpec{"cos", 1};  // no compact support
    CHECK_THROWS_AS(run_experiment(cfg, 1), ConfigError);
    cfg.f = FSpec{"bump", 1, 0.15};  // not zero-mean
    CHECK_THROWS_AS(run_experiment(cfg, 1), ConfigError);
}

TEST_CASE("continuity fourth moments shrink with the gap") {
    ExperimentConfig cfg;
    cfg.kind = "continuity";
    cfg.n = 16;
    cfg.R = 300;
    cfg.seed = 12;
    cfg.t_base = 0.4;
    cfg.gaps = {0.02, 0.08};
    cfg.grid_spacing = 0.02;
    cfg.f = FSpec{"odd_bump", 1, 0.15};
    const ExperimentResult res = run_experiment(cfg, 2);
    const double m_small = res.summary["per_gap"][0]["fourth_moment"].get<double>();
    const double m_large = res.summary["per_gap"][1]["fourth_moment"].get<double>();
    CHECK(m_small < m_large);
    CHECK(res.summary["monotone_within_noise"].get<bool>());
}

TEST_CASE("off-diagonal pair functions make tensor and pair integrals coincide") {
    ExperimentConfig cfg;
    cfg.kind = "double_integral";
    cfg.t = 1.0;
    cfg.n = 32;
    cfg.R = 300;
    cfg.seed = 13;
    cfg.grid_spacing = 0.02;
    cfg.basis_size = 12;
    cfg.f2.type = "disjoint_pair";
    cfg.f2.h1 = FSpec{"odd_bump", 1, 0.06, 1.0, -0.25};
    cfg.f2.h2 = FSpec{"odd_bump", 1, 0.06, 1.0, 0.25};
    const ExperimentResult res = run_experiment(cfg, 2);
    // f vanishes on the diagonal, so the diagonal correction is identically 0
    for (const auto& row : res.rows) CHECK(row[1] == row[2]);
    CHECK(std::abs(res.summary["diagonal_correction_predicted"].get<double>()) < 1e-12);
    // and the pair-integral mean still tracks the kernel term
    const double mean = res.summary["flow"]["mean"].get<double>();
    const double se = res.summary["flow"]["se_mean"].get<double>();
    CHECK(std::abs(mean - res.summary["kernel_term"].get<double>()) < 4.0 * se);
}

TEST_CASE("xi stationarity runner structure") {
    ExperimentConfig cfg;
    cfg.kind = "xi_stationarity";
    cfg.times = {0.5, 1.0};
    cfg.n = 16;
    cfg.R = 150;
    cfg.seed = 14;
    cfg.positions = {4.0, 8.0, 12.0};
    cfg.grid_spacing = 0.02;
    const ExperimentResult res = run_experiment(cfg, 2);
    CHECK(res.columns.size() == 1 + 3 + 3 + 1);
    CHECK(res.checks.size() == 6);  // three pairs for each of xi1, xi2
    CHECK(res.all_pass());
}

TEST_CASE("web runner validates the exact identity per replica") {
    ExperimentConfig cfg;
    cfg.kind = "web_coalescence";
    cfg.times = {0.5, 1.0};
    cfg.n = 16;
    cfg.R = 120;
    cfg.seed = 15;
    cfg.positions = {4.0, 8.0, 12.0};
    cfg.grid_spacing = 0.02;
    const ExperimentResult res = run_experiment(cfg, 2);
    for (const auto& row : res.rows) CHECK(row[1] == 0.0);  // identity holds exactly
    for (const auto& c : res.checks)
        if (c.name == "inclusion_exclusion_max_error" || c.name.rfind("q_", 0) == 0)
            CHECK(c.pass);
}

TEST_CASE("configuration guards") {
    ExperimentConfig cfg = clt_config(16, 50, 1);
    CHECK_THROWS_AS(run_experiment(cfg, 1), ConfigError);  // R < 100 for a CLT test
    cfg = clt_config(8, 200, 1);
    CHECK_THROWS_AS(run_experiment(cfg, 1), ConfigError);  // n < 16
    cfg = clt_config(16, 200, 1);
    cfg.kind = "unknown";
    CHECK_THROWS_AS(run_experiment(cfg, 1), ConfigError);
}

TEST_CASE("config round-trips through JSON") {
    ExperimentConfig cfg = clt_config(16, 100, 77);
    cfg.tolerances = {{"ks_distance", 0.2}};
    const ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
    CHECK(back.kind == cfg.kind);
    CHECK(back.n == cfg.n);
    CHECK(back.seed == cfg.seed);
    CHECK(back.tolerance("ks_distance", 0.05) == 0.2);
    CHECK(back.tolerance("other", 0.05) == 0.05);
    const ExperimentResult a = run_experiment(cfg, 2);
    const ExperimentResult b = run_experiment(back, 2);
    CHECK(a.rows == b.rows);
}
