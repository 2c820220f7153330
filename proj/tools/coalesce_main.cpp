// Batch front-end: analytic kernel tables, experiment execution with manifest
// and per-replica persistence, and plot-data emission.
//
// Exit codes: 0 success / all declared tolerances pass, 1 tolerance failure,
// 2 usage or configuration error.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "coalflow/experiments.hpp"
#include "coalflow/io.hpp"
#include "coalflow/kernels.hpp"
#include "coalflow/stats.hpp"

namespace fs = std::filesystem;
using namespace coalflow;

namespace {

struct CsvOut {
    std::ostringstream buf;

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) buf << ',';
            buf << cells[i];
        }
        buf << '\n';
    }
    void emit(const std::string& out_path) {
        if (out_path.empty()) {
            std::cout << buf.str();
        } else {
            std::ofstream f(out_path, std::ios::binary);
            if (!f) throw ConfigError("cannot open output file " + out_path);
            f << buf.str();
        }
    }
};

int cmd_kernel_eval(const std::string& what, double t, double z, double v1, double v2,
                    int grid, double h, double s, double a, double b, double u,
                    const std::string& fspec_text, const std::string& out) {
    const KernelContext ctx = KernelContext::make(t);
    CsvOut csv;
    if (what == "rho1") {
        csv.row({"value"});
        csv.row({format_float(intensity(ctx))});
    } else if (what == "rho2" || what == "g") {
        auto eval = [&](double x) {
            return what == "rho2" ? pair_density_gap(ctx, x) : truncated_pair_density(ctx, x);
        };
        csv.row({"x", "value"});
        if (grid > 1) {
            const double zmax = z > 0.0 ? z : 8.0 * std::sqrt(t);
            for (int i = 0; i < grid; ++i) {
                const double x = zmax * i / (grid - 1);
                csv.row({format_float(x), format_float(eval(x))});
            }
        } else {
            csv.row({format_float(z), format_float(eval(z))});
        }
    } else if (what == "G") {
        csv.row({"x", "y", "value"});
        if (grid > 1) {
            for (int i = 0; i < grid; ++i)
                for (int j = 0; j < grid; ++j) {
                    const double x = static_cast<double>(i) / (grid - 1);
                    const double y = static_cast<double>(j) / (grid - 1);
                    csv.row({format_float(x), format_float(y),
                             format_float(covariance_kernel_sym(ctx, x, y))});
                }
        } else {
            csv.row({format_float(v1), format_float(v2),
                     format_float(covariance_kernel_sym(ctx, v1, v2))});
        }
    } else if (what == "sigma2") {
        FSpec fs_spec;
        if (!fspec_text.empty()) fs_spec = FSpec::from_json(nlohmann::json::parse(fspec_text));
        csv.row({"value"});
        csv.row({format_float(limit_variance(ctx, fs_spec.make()))});
    } else if (what == "mixing") {
        csv.row({"x", "integral_form", "closed_form"});
        auto emit_h = [&](double hh) {
            const MixingBound mb = mixing_coefficient_bound(ctx, hh);
            csv.row({format_float(hh), format_float(mb.integral_form),
                     format_float(mb.closed_form)});
        };
        if (grid > 1) {
            for (int i = 0; i < grid; ++i) emit_h(0.5 + (10.0 - 0.5) * i / (grid - 1));
        } else {
            emit_h(h);
        }
    } else if (what == "q") {
        csv.row({"x", "value"});
        if (grid > 1) {
            const double span = 5.0 * std::sqrt(s);
            for (int i = 0; i < grid; ++i) {
                const double x = (a + b) / 2 - span + 2.0 * span * i / (grid - 1);
                csv.row({format_float(x), format_float(coalescence_density(s, a, b, x))});
            }
        } else {
            csv.row({format_float(u), format_float(coalescence_density(s, a, b, u))});
        }
    } else {
        throw CLI::ValidationError("--what must be one of rho1,rho2,g,G,sigma2,mixing,q");
    }
    csv.emit(out);
    return 0;
}

int cmd_run(const std::string& config_path, std::int64_t seed_override, int threads,
            const std::string& out_override) {
    if (!fs::exists(config_path))
        throw ConfigError("config file not found: " + config_path);
    const nlohmann::json j = read_json(config_path);
    ExperimentConfig cfg = ExperimentConfig::from_json(j);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    const std::string out_dir =
        !out_override.empty() ? out_override : j.value("out_dir", std::string("results"));
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    // Manifest goes first so a crashed run still identifies itself.
    nlohmann::json manifest{{"version", kVersion},
                            {"seed", cfg.seed},
                            {"config", cfg.to_json()},
                            {"start_time", iso8601_utc_now()},
                            {"outputs",
                             {{"replicas", (dir / "replicas.csv").string()},
                              {"summary", (dir / "summary.json").string()}}}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    const ExperimentResult res = run_experiment(cfg, threads);

    write_csv(dir / "replicas.csv", res.columns, res.rows);
    nlohmann::json summary = res.summary_json();
    summary["end_time"] = iso8601_utc_now();
    write_text(dir / "summary.json", summary.dump(2) + "\n");

    for (const auto& c : res.checks)
        std::cout << (c.pass ? "[pass] " : "[FAIL] ") << c.name << ": " << c.value << " "
                  << c.relation << " " << c.threshold << "\n";
    return res.all_pass() ? 0 : 1;
}

std::string svg_histogram(const std::vector<double>& centers, const std::vector<double>& mass,
                          const std::vector<double>& overlay) {
    const int w = 640, hgt = 400, pad = 40;
    double ymax = 1e-12;
    for (double v : mass) ymax = std::max(ymax, v);
    for (double v : overlay) ymax = std::max(ymax, v);
    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << hgt
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    const double bw = static_cast<double>(w - 2 * pad) / std::max<std::size_t>(1, mass.size());
    for (std::size_t i = 0; i < mass.size(); ++i) {
        const double bh = (hgt - 2 * pad) * mass[i] / ymax;
        svg << "<rect x='" << pad + i * bw << "' y='" << hgt - pad - bh << "' width='"
            << bw * 0.9 << "' height='" << bh << "' fill='#7799cc'/>\n";
    }
    if (!overlay.empty()) {
        svg << "<polyline fill='none' stroke='#cc3333' stroke-width='2' points='";
        for (std::size_t i = 0; i < overlay.size(); ++i)
            svg << pad + (i + 0.5) * bw << ',' << hgt - pad - (hgt - 2 * pad) * overlay[i] / ymax
                << ' ';
        svg << "'/>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

int cmd_report(const std::string& in_dir, const std::string& out_dir, bool svg) {
    const fs::path in(in_dir);
    if (!fs::exists(in / "summary.json") || !fs::exists(in / "replicas.csv"))
        throw ConfigError("results directory lacks summary.json/replicas.csv: " + in_dir);
    const fs::path out = out_dir.empty() ? in : fs::path(out_dir);
    fs::create_directories(out);
    const nlohmann::json summary = read_json(in / "summary.json");
    const CsvTable table = read_csv(in / "replicas.csv");
    if (table.rows.empty()) throw ConfigError("replicas.csv has no rows");

    const std::string kind = summary.value("kind", "");
    if (kind == "continuity") {
        std::vector<std::vector<double>> rows;
        for (const auto& g : summary["summary"]["per_gap"])
            rows.push_back({g["gap"].get<double>(), g["fourth_moment"].get<double>(),
                            g["se"].get<double>()});
        write_csv(out / "slope.csv", {"gap", "fourth_moment", "se"}, rows);
    }

    // Histogram of the primary statistic column (first non-replica column).
    std::size_t col = table.header.size() > 1 ? 1 : 0;
    std::vector<double> xs;
    for (const auto& row : table.rows) xs.push_back(row[col]);
    const auto [mn_it, mx_it] = std::minmax_element(xs.begin(), xs.end());
    const double lo = *mn_it, hi = *mx_it;
    const int bins = 40;
    const double width = (hi - lo) > 0 ? (hi - lo) / bins : 1.0;
    std::vector<double> mass(bins, 0.0), centers(bins), overlay;
    for (double x : xs) {
        int b = static_cast<int>((x - lo) / width);
        b = std::clamp(b, 0, bins - 1);
        mass[b] += 1.0 / xs.size();
    }
    for (int b = 0; b < bins; ++b) centers[b] = lo + (b + 0.5) * width;
    double sigma2 = 0.0;
    if (summary["summary"].contains("predicted_sigma2"))
        sigma2 = summary["summary"]["predicted_sigma2"].get<double>();
    std::vector<std::string> header{"bin_center", "mass"};
    std::vector<std::vector<double>> hist_rows;
    if (sigma2 > 0.0) {
        header.push_back("normal_overlay_mass");
        overlay.resize(bins);
        for (int b = 0; b < bins; ++b)
            overlay[b] = width * std::exp(-centers[b] * centers[b] / (2.0 * sigma2)) /
                         std::sqrt(2.0 * M_PI * sigma2);
    }
    for (int b = 0; b < bins; ++b) {
        std::vector<double> row{centers[b], mass[b]};
        if (!overlay.empty()) row.push_back(overlay[b]);
        hist_rows.push_back(std::move(row));
    }
    write_csv(out / "histogram.csv", header, hist_rows);
    if (svg) write_text(out / "histogram.svg", svg_histogram(centers, mass, overlay));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coalflow: coalescing Brownian flow simulation and verification"};
    app.require_subcommand(1);

    auto* eval = app.add_subcommand("kernel-eval", "print analytic kernel tables as CSV");
    std::string what, fspec_text, out;
    double t = 1.0, z = 0.0, v1 = 0.0, v2 = 0.0, h = 1.0, s = 1.0, a = 0.0, b = 0.0, u = 0.0;
    int grid = 0;
    eval->add_option("--what", what, "rho1|rho2|g|G|sigma2|mixing|q")->required();
    eval->add_option("--t", t, "flow time");
    eval->add_option("--z", z, "gap for rho2/g");
    eval->add_option("--v1", v1);
    eval->add_option("--v2", v2);
    eval->add_option("--grid", grid, "grid resolution");
    eval->add_option("--hdist", h, "mixing distance");
    eval->add_option("--s", s, "elapsed time for q");
    eval->add_option("--a", a);
    eval->add_option("--b", b);
    eval->add_option("--u", u);
    eval->add_option("--f", fspec_text, "function spec JSON for sigma2");
    eval->add_option("--out", out, "output CSV path (default stdout)");

    auto* run = app.add_subcommand("run", "execute an experiment from a JSON config");
    std::string config_path, run_out;
    std::int64_t seed_override = -1;
    int threads = 0;
    run->add_option("--config", config_path, "experiment config JSON")->required();
    run->add_option("--seed", seed_override, "override config seed");
    run->add_option("--threads", threads, "worker threads (COALESCE_THREADS overrides)");
    run->add_option("--out", run_out, "output directory override");

    auto* report = app.add_subcommand("report", "emit plot data from a results directory");
    std::string in_dir, report_out;
    bool svg = false;
    report->add_option("--in", in_dir, "results directory")->required();
    report->add_option("--out", report_out, "output directory (default: --in)");
    report->add_flag("--svg", svg, "also render a static SVG histogram");

    try {
        app.parse(argc, argv);
        if (eval->parsed())
            return cmd_kernel_eval(what, t, z, v1, v2, grid, h, s, a, b, u, fspec_text, out);
        if (run->parsed()) return cmd_run(config_path, seed_override, threads, run_out);
        if (report->parsed()) return cmd_report(in_dir, report_out, svg);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
