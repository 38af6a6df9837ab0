#pragma once

/// Experiment orchestration: single runs with CSV/JSON output, seed sweeps,
/// time-step refinement studies and gain dumps.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpflab/density.hpp"
#include "fpflab/error.hpp"
#include "fpflab/fpf.hpp"
#include "fpflab/metrics.hpp"
#include "fpflab/poisson.hpp"
#include "fpflab/scenario.hpp"
#include "fpflab/simulation.hpp"
#include "fpflab/variational.hpp"

namespace fpf {

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr const char* kRunCsvHeader =
    "step,t,z,h_hat,emp_mean,emp_var,ref_mean,ref_var,ks_dist,l1_dist,gain_flux_residual";

namespace detail {

inline std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void write_text(const std::filesystem::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary);
    if (!out) fail(ErrorCode::InvalidArgument, "cannot write '" + file.string() + "'");
    out << text;
}

inline std::string density_csv(const GridDensity& d) {
    std::string s = "x,rho\n";
    for (std::size_t i = 0; i < d.size(); ++i) s += fmt(d.grid()[i]) + "," + fmt(d.value(i)) + "\n";
    return s;
}

}  // namespace detail

/// The hidden static state: the configured value, or a prior draw keyed on
/// the seed.
inline double resolve_true_state(const ScenarioConfig& c) {
    if (c.true_state) return *c.true_state;
    return sample_prior(c.make_prior(), 2, c.seed ^ stream_id("truth"))[0];
}

inline ObservationPath make_observation_path(const ScenarioConfig& c, double x) {
    const auto times = uniform_times(c.horizon, c.steps);
    return simulate_observation_path(static_signal(x, times), c.make_model(), c.seed,
                                     c.h_evaluation);
}

inline std::string run_csv(const RunMetrics& m) {
    std::string s = std::string(kRunCsvHeader) + "\n";
    for (const auto& r : m.rows) {
        s += std::to_string(r.step);
        for (double v : {r.t, r.z, r.h_hat, r.emp_mean, r.emp_var, r.ref_mean, r.ref_var,
                         r.ks_dist, r.l1_dist, r.gain_flux_residual}) {
            s += "," + detail::fmt(v);
        }
        s += "\n";
    }
    return s;
}

struct ExperimentOutput {
    RunMetrics metrics;
    std::vector<std::string> files;  ///< relative to the output directory
};

/// Run the filter for one scenario. With an output directory, writes
///   run.csv, manifest.json, snapshots/{reference,kde}_step<n>.csv.
inline ExperimentOutput run_experiment(const ScenarioConfig& c,
                                       const std::optional<std::filesystem::path>& out_dir = {}) {
    try {
        const auto model = c.make_model();
        const auto grid = c.make_grid();
        const double x_true = resolve_true_state(c);
        const auto path = make_observation_path(c, x_true);

        std::vector<std::size_t> snap_steps;
        for (double t : c.snapshots) snap_steps.push_back(path.index_at(t));

        FpfSetup setup{c.make_prior(), model, path, c.particles, grid, c.gain_options(), c.seed,
                       c.scheme, true};
        ExperimentOutput out;
        out.metrics.true_state = x_true;
        std::vector<std::pair<std::string, std::string>> snapshot_files;

        run_fpf(setup, [&](const FpfStepRecord& r, const ParticleEnsemble& e,
                           const GridDensity& ref) {
            out.metrics.max_outside_reliable =
                std::max(out.metrics.max_outside_reliable, r.outside_reliable);
            const bool last = r.step == path.steps();
            if (r.step % c.record_stride == 0 || last) {
                const auto cmp = compare_distributions(e, ref);
                out.metrics.rows.push_back({r.step, r.t, r.z, r.h_hat, r.emp_mean, r.emp_var,
                                            mean(ref), variance(ref), cmp.ks_distance,
                                            cmp.l1_after_kde, r.gain_flux_residual});
                if (last) out.metrics.terminal = cmp;
            }
            if (out_dir && std::find(snap_steps.begin(), snap_steps.end(), r.step) != snap_steps.end()) {
                const std::string tag = "step" + std::to_string(r.step) + ".csv";
                snapshot_files.emplace_back("snapshots/reference_" + tag, detail::density_csv(ref));
                double bw = silverman_bandwidth(e);
                if (!(bw > 0.0)) bw = grid.spacing(0);
                snapshot_files.emplace_back("snapshots/kde_" + tag,
                                            detail::density_csv(kde_estimate(e, bw, grid)));
            }
        });

        if (out_dir) {
            namespace fs = std::filesystem;
            fs::create_directories(*out_dir);
            detail::write_text(*out_dir / "run.csv", run_csv(out.metrics));
            out.files.push_back("run.csv");
            if (!snapshot_files.empty()) fs::create_directories(*out_dir / "snapshots");
            for (const auto& [name, text] : snapshot_files) {
                if (std::find(out.files.begin(), out.files.end(), name) != out.files.end()) continue;
                detail::write_text(*out_dir / name, text);
                out.files.push_back(name);
            }
            nlohmann::json manifest;
            manifest["config"] = scenario_to_json(c);
            manifest["seed"] = c.seed;
            manifest["config_hash"] = config_hash(c);
            manifest["true_state"] = x_true;
            manifest["versions"] = {{"fpflab", kLibraryVersion},
                                    {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) +
                                                          "." +
                                                          std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                                                          "." +
                                                          std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
            manifest["files"] = out.files;
            manifest["max_particles_outside_reliable_domain"] = out.metrics.max_outside_reliable;
            detail::write_text(*out_dir / "manifest.json", manifest.dump(2) + "\n");
        }
        return out;
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw Error(e.code(), "scenario " + config_hash(c) + " (seed " + std::to_string(c.seed) +
                                  "): " + e.what());
    }
}

// ----------------------------------------------------------------------------
// Seed sweeps
// ----------------------------------------------------------------------------

struct SweepRow {
    std::uint64_t seed = 0;
    double true_state = 0.0;
    DistributionComparison terminal;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    DistributionComparison mean, sd;
};

inline std::string sweep_csv(const SweepResult& s) {
    std::string out = "seed,true_state,ks_dist,l1_dist,mean_error,var_error\n";
    auto line = [&](const std::string& label, double x, const DistributionComparison& d) {
        out += label + "," + detail::fmt(x) + "," + detail::fmt(d.ks_distance) + "," +
               detail::fmt(d.l1_after_kde) + "," + detail::fmt(d.mean_error) + "," +
               detail::fmt(d.var_error) + "\n";
    };
    for (const auto& r : s.rows) line(std::to_string(r.seed), r.true_state, r.terminal);
    line("mean", 0.0, s.mean);
    line("sd", 0.0, s.sd);
    return out;
}

/// Runs seeds c.seed .. c.seed + count - 1, each in its own `seed_<s>`
/// subdirectory; rows are ordered by seed whatever the thread count.
inline SweepResult run_seed_sweep(const ScenarioConfig& c, std::size_t count,
                                  const std::optional<std::filesystem::path>& out_dir = {},
                                  unsigned threads = 0) {
    require(count >= 1, ErrorCode::InvalidArgument, "sweep needs at least one seed");
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
    std::vector<SweepRow> rows(count);
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k; (k = next.fetch_add(1)) < count;) {
            try {
                ScenarioConfig ck = c;
                ck.seed = c.seed + k;
                ck.seeds = 1;
                std::optional<std::filesystem::path> dir;
                if (out_dir) dir = *out_dir / ("seed_" + std::to_string(ck.seed));
                const auto r = run_experiment(ck, dir);
                rows[k] = {ck.seed, r.metrics.true_state, r.metrics.terminal};
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    SweepResult s;
    s.rows = std::move(rows);
    auto stat = [&](auto field) {
        double m = 0.0, v = 0.0;
        for (const auto& r : s.rows) m += field(r.terminal);
        m /= static_cast<double>(count);
        for (const auto& r : s.rows) v += (field(r.terminal) - m) * (field(r.terminal) - m);
        const double sd = count > 1 ? std::sqrt(v / static_cast<double>(count - 1)) : 0.0;
        return std::pair{m, sd};
    };
    std::tie(s.mean.ks_distance, s.sd.ks_distance) = stat([](auto& d) { return d.ks_distance; });
    std::tie(s.mean.l1_after_kde, s.sd.l1_after_kde) = stat([](auto& d) { return d.l1_after_kde; });
    std::tie(s.mean.mean_error, s.sd.mean_error) = stat([](auto& d) { return d.mean_error; });
    std::tie(s.mean.var_error, s.sd.var_error) = stat([](auto& d) { return d.var_error; });
    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        detail::write_text(*out_dir / "sweep.csv", sweep_csv(s));
    }
    return s;
}

// ----------------------------------------------------------------------------
// Time-step refinement
// ----------------------------------------------------------------------------

struct ConvergenceRow {
    std::size_t level = 0;
    std::size_t steps = 0;
    double dt = 0.0;
    DistributionComparison terminal;
    /// sup over the finest sampling instants of the L1 gap between the
    /// piecewise-constant time-stepping interpolant and the limit density.
    double interpolant_sup_l1 = 0.0;
};

inline std::string convergence_csv(const std::vector<ConvergenceRow>& rows) {
    std::string s = "level,steps,dt,ks_dist,l1_dist,mean_error,var_error,interpolant_sup_l1\n";
    for (const auto& r : rows) {
        s += std::to_string(r.level) + "," + std::to_string(r.steps) + "," + detail::fmt(r.dt) +
             "," + detail::fmt(r.terminal.ks_distance) + "," + detail::fmt(r.terminal.l1_after_kde) +
             "," + detail::fmt(r.terminal.mean_error) + "," + detail::fmt(r.terminal.var_error) +
             "," + detail::fmt(r.interpolant_sup_l1) + "\n";
    }
    return s;
}

/// Halve the time step `refinements` times by Brownian-bridge insertion into
/// the scenario's path; the particle seed is kept fixed across levels.
inline std::vector<ConvergenceRow> run_convergence(const ScenarioConfig& c, std::size_t refinements,
                                                   const std::optional<std::filesystem::path>& out_dir = {}) {
    const auto model = c.make_model();
    const auto grid = c.make_grid();
    const auto prior = c.make_prior();
    const auto rho0 = prior.density_on(grid);
    std::vector<ObservationPath> paths{make_observation_path(c, resolve_true_state(c))};
    for (std::size_t l = 1; l <= refinements; ++l) {
        paths.push_back(refine_path_bridge(paths.back(), c.seed, l));
    }
    const auto& finest = paths.back();
    std::vector<ConvergenceRow> rows;
    for (std::size_t l = 0; l < paths.size(); ++l) {
        const auto& p = paths[l];
        FpfSetup setup{prior, model, p, c.particles, grid, c.gain_options(), c.seed, c.scheme, false};
        const auto run = run_fpf(setup);
        const auto ts = run_time_stepping(rho0, p, model);
        double sup = 0.0;
        for (std::size_t n = 0; n <= finest.steps(); ++n) {
            const double t = finest.time(n);
            const auto limit = closed_form_posterior(rho0, finest.z(n) - finest.z(0), t, model);
            sup = std::max(sup, l1_distance(ts.interpolant(t), limit));
        }
        rows.push_back({l, p.steps(), p.max_step(),
                        compare_distributions(run.final_ensemble, run.final_reference), sup});
    }
    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        detail::write_text(*out_dir / "convergence.csv", convergence_csv(rows));
    }
    return rows;
}

// ----------------------------------------------------------------------------
// Gain dump
// ----------------------------------------------------------------------------

/// K(x) from all three solvers for a prior spec and a named observation
/// function, as CSV columns x,rho,exact1d,fd,galerkin.
inline std::string gain_demo_csv(const std::string& prior_spec, const std::string& obs,
                                 std::size_t nodes = 1024, double half_width = 8.0,
                                 int degree = 3) {
    ScenarioConfig c;
    c.prior = parse_prior_spec(prior_spec);
    c.observation = obs;
    c.grid = {nodes, half_width};
    const auto model = c.make_model();
    const auto grid = c.make_grid();
    const auto rho = c.make_prior().density_on(grid);
    const auto data = numeric::sample(grid, model.h);
    const auto k_exact = solve_gain_exact_1d(rho, data).gain_on(grid);
    const auto k_fd = solve_gain_weak_fd(rho, data).gain_on(grid);
    const auto k_gal = solve_gain_galerkin(rho, data, default_basis(rho, degree)).gain_on(grid);
    std::string s = "x,rho,exact1d,fd,galerkin\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
        s += detail::fmt(grid[i]) + "," + detail::fmt(rho.value(i)) + "," + detail::fmt(k_exact[i]) +
             "," + detail::fmt(k_fd[i]) + "," + detail::fmt(k_gal[i]) + "\n";
    }
    return s;
}

}  // namespace fpf
