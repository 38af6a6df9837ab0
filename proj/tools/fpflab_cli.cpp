// fpflab command-line driver.
//
//   fpflab run --scenario <file> --out <dir> [--seed N] [--particles N]
//              [--solver exact1d|fd|galerkin] [--mode oracle|algorithmic]
//   fpflab convergence --scenario <file> --refinements <k> [--out <dir>]
//   fpflab gain-demo --prior <spec> --obs <name> [--out <file>]
//   fpflab verify [--criteria 1,2,...]
//
// Exit codes: 0 success, 2 configuration error, 3 numeric failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fpflab/experiment.hpp"
#include "fpflab/scenario.hpp"
#include "fpflab/verification.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

void print_terminal(const fpf::DistributionComparison& d) {
    std::printf("terminal: ks=%.6g l1=%.6g mean_error=%.6g var_error=%.6g\n", d.ks_distance,
                d.l1_after_kde, d.mean_error, d.var_error);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feedback particle filter laboratory"};
    app.require_subcommand(1);

    std::string scenario_file, out_dir, solver, mode;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> particles;
    auto* run = app.add_subcommand("run", "Run a scenario (seed sweep when the scenario sets seeds > 1)");
    run->add_option("--scenario", scenario_file, "Scenario JSON file")->required();
    run->add_option("--out", out_dir, "Output directory")->required();
    run->add_option("--seed", seed, "Override the scenario seed");
    run->add_option("--particles", particles, "Override the particle count");
    run->add_option("--solver", solver, "Gain solver")->check(CLI::IsMember({"exact1d", "fd", "galerkin"}));
    run->add_option("--mode", mode, "Filter mode")->check(CLI::IsMember({"oracle", "algorithmic"}));

    std::size_t refinements = 3;
    std::string conv_out;
    auto* conv = app.add_subcommand("convergence", "Time-step halving study on a bridge-refined path");
    conv->add_option("--scenario", scenario_file, "Scenario JSON file")->required();
    conv->add_option("--refinements", refinements, "Number of halvings")->required();
    conv->add_option("--out", conv_out, "Output directory (default: print CSV)");

    std::string prior_spec, obs, demo_out;
    std::size_t nodes = 1024;
    auto* demo = app.add_subcommand("gain-demo", "Dump K(x) from all three gain solvers");
    demo->add_option("--prior", prior_spec, "gaussian(mu,sd) or mixture(w,mu,sd;...)")->required();
    demo->add_option("--obs", obs, "Observation function name")->required();
    demo->add_option("--nodes", nodes, "Grid nodes")->check(CLI::Range(128, 1 << 20));
    demo->add_option("--out", demo_out, "Output CSV (default: stdout)");

    std::vector<int> criteria;
    auto* ver = app.add_subcommand("verify", "Run the acceptance checks");
    ver->add_option("--criteria", criteria, "Subset of criteria (1-10)")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*run) {
            auto cfg = fpf::load_scenario(scenario_file);
            if (seed) cfg.seed = *seed;
            if (particles) {
                if (*particles < 2) throw fpf::ConfigError("particles", "must be >= 2");
                cfg.particles = *particles;
            }
            if (!solver.empty()) {
                std::tie(cfg.gain_solver, cfg.galerkin_degree) = fpf::parse_solver(solver, cfg.galerkin_degree);
            }
            if (!mode.empty()) cfg.mode = fpf::parse_mode(mode);
            if (cfg.seeds > 1) {
                const auto s = fpf::run_seed_sweep(cfg, cfg.seeds, out_dir);
                std::printf("%zu seeds written to %s\n", s.rows.size(), out_dir.c_str());
                print_terminal(s.mean);
            } else {
                const auto r = fpf::run_experiment(cfg, out_dir);
                std::printf("run %s written to %s\n", fpf::config_hash(cfg).c_str(), out_dir.c_str());
                print_terminal(r.metrics.terminal);
            }
        } else if (*conv) {
            const auto cfg = fpf::load_scenario(scenario_file);
            std::optional<std::filesystem::path> dir;
            if (!conv_out.empty()) dir = conv_out;
            const auto rows = fpf::run_convergence(cfg, refinements, dir);
            std::cout << fpf::convergence_csv(rows);
        } else if (*demo) {
            const auto csv = fpf::gain_demo_csv(prior_spec, obs, nodes);
            if (demo_out.empty()) {
                std::cout << csv;
            } else {
                std::ofstream(demo_out) << csv;
            }
        } else if (*ver) {
            int failed = 0;
            fpf::verify::run_all(criteria, [&](const fpf::verify::CriterionResult& r) {
                std::printf("%s\n", fpf::verify::format_line(r).c_str());
                std::fflush(stdout);
                if (!r.passed) ++failed;
            });
            return failed == 0 ? 0 : kExitNumeric;
        }
    } catch (const fpf::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const fpf::Error& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    }
    return 0;
}
