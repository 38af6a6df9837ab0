#pragma once

/// Feedback particle filter.
///
/// Particles follow the Stratonovich law  dX = K(X) o dI,
///   dI = dZ - (h(X) + h_hat) dt / 2,
/// integrated in its Ito form  dX = u(X) dt + K(X) dZ  with
///   u = -K (h + h_hat) / 2 + Omega,    Omega = K K' / 2.
/// K is the gradient of the Poisson solution for the current posterior (or
/// its particle/KDE stand-in). The ensemble is never reweighted or resampled.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "fpflab/density.hpp"
#include "fpflab/error.hpp"
#include "fpflab/observation.hpp"
#include "fpflab/poisson.hpp"
#include "fpflab/random.hpp"
#include "fpflab/simulation.hpp"
#include "fpflab/variational.hpp"

namespace fpf {

// ============================================================================
// Control law
// ============================================================================

struct ControlLaw {
    GainField gain;
    double h_hat = 0.0;
    /// Omega and u sampled on the gain's grid, when it has one.
    std::optional<VectorField> omega;
    std::optional<VectorField> u;

    double gain_at(double x) const { return gain.gain_at(x); }
    double omega_at(double x) const { return 0.5 * gain.gain_at(x) * gain.gain_slope_at(x); }

    double u_at(double x, double hx) const {
        const double k = gain.gain_at(x);
        return -0.5 * k * (hx + h_hat) + 0.5 * k * gain.gain_slope_at(x);
    }
};

namespace detail {

inline ControlLaw assemble_control(GainField gain, double h_hat, const ObservationModel& model,
                                   const std::optional<Grid>& grid) {
    ControlLaw c{std::move(gain), h_hat, std::nullopt, std::nullopt};
    if (grid) {
        const auto k = c.gain.gain_on(*grid);
        const auto dk = c.gain.gain_slope_on(*grid);
        VectorField omega{std::vector<double>(grid->size()), VectorField::Provenance::Solved};
        VectorField u{std::vector<double>(grid->size()), VectorField::Provenance::Solved};
        for (std::size_t i = 0; i < grid->size(); ++i) {
            omega.values[i] = 0.5 * k[i] * dk[i];
            u.values[i] = -0.5 * k[i] * (model.h((*grid)[i]) + h_hat) + omega.values[i];
        }
        c.omega = std::move(omega);
        c.u = std::move(u);
    }
    return c;
}

}  // namespace detail

/// Control law with h_hat by grid quadrature against rho; Omega and u are
/// sampled on rho's grid.
inline ControlLaw compute_control(GainField gain, const GridDensity& rho,
                                  const ObservationModel& model) {
    const double h_hat = expectation(model.h, rho);
    return detail::assemble_control(std::move(gain), h_hat, model, rho.grid());
}

/// Control law with the empirical h_hat = (1/N) sum h(X^i).
inline ControlLaw compute_control(GainField gain, const ParticleEnsemble& e,
                                  const ObservationModel& model) {
    const double h_hat = e.average(model.h);
    std::optional<Grid> grid = gain.has_grid() ? gain.grid : std::nullopt;
    return detail::assemble_control(std::move(gain), h_hat, model, grid);
}

/// Largest deviation from Omega = K K'/2 and u = -K(h + h_hat)/2 + Omega on
/// the sampled nodes (zero when the law carries no grid samples).
inline double control_invariant_error(const ControlLaw& c, const ObservationModel& model) {
    if (!c.omega || !c.gain.has_grid()) return 0.0;
    const auto& g = *c.gain.grid;
    const auto k = c.gain.gain_on(g);
    const auto dk = c.gain.gain_slope_on(g);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double om = 0.5 * k[i] * dk[i];
        const double u = -0.5 * k[i] * (model.h(g[i]) + c.h_hat) + om;
        worst = std::max({worst, std::abs(om - c.omega->values[i]), std::abs(u - c.u->values[i])});
    }
    return worst;
}

/// rho-weighted L2 norm of the grid residual of the consistency relation
///   d/dx[(1/rho)(rho u)'] - h' h_hat - (1/2) d/dx[(1/rho)(rho K^2)''],
/// with (1/rho)(rho q)' = q' + q (ln rho)' and the second-order analogue.
inline double control_consistency_residual(const ControlLaw& c, const GridDensity& rho,
                                           const ObservationModel& model) {
    require(c.u.has_value(), ErrorCode::InvalidArgument, "control law has no grid samples");
    const auto& g = rho.grid();
    const std::size_t n = g.size();
    const auto k = c.gain.gain_on(g);
    std::vector<double> lclamp(rho.log_values().begin(), rho.log_values().end());
    for (double& v : lclamp) v = std::max(v, -800.0);
    const auto dl = numeric::derivative(g, lclamp);
    const auto d2l = numeric::second_derivative(g, lclamp);
    std::vector<double> k2(n);
    for (std::size_t i = 0; i < n; ++i) k2[i] = k[i] * k[i];
    const auto du = numeric::derivative(g, c.u->values);
    const auto dk2 = numeric::derivative(g, k2);
    const auto d2k2 = numeric::second_derivative(g, k2);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = du[i] + c.u->values[i] * dl[i];
        b[i] = d2k2[i] + 2.0 * dk2[i] * dl[i] + k2[i] * (d2l[i] + dl[i] * dl[i]);
    }
    const auto da = numeric::derivative(g, a);
    const auto db = numeric::derivative(g, b);
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = da[i] - model.grad_h(g[i]) * c.h_hat - 0.5 * db[i];
        r[i] = v * v;
    }
    return std::sqrt(expectation(std::span<const double>(r), rho));
}

// ============================================================================
// Gain selection
// ============================================================================

/// algorithmic: everything from the particles (empirical h_hat; Galerkin on the
///              ensemble, or grid solvers on a Silverman KDE).
/// oracle:      gain and h_hat from the known reference posterior.
enum class FilterMode { Algorithmic, Oracle };

struct GainOptions {
    GainSolverKind solver = GainSolverKind::Galerkin;
    int galerkin_degree = 3;
    FilterMode mode = FilterMode::Algorithmic;
    /// Re-solve the gain every `stride` steps (h_hat is refreshed every step).
    std::size_t stride = 1;
};

/// Build the control law for the current ensemble. `reference` must be given
/// in oracle mode; `grid` is used for KDE-based grid solves.
inline ControlLaw make_control(const ParticleEnsemble& e, const ObservationModel& model,
                               const GainOptions& opt, const Grid& grid,
                               const GridDensity* reference = nullptr) {
    if (opt.mode == FilterMode::Oracle) {
        require(reference != nullptr, ErrorCode::InvalidArgument,
                "oracle mode needs the reference posterior");
        const auto data = numeric::sample(reference->grid(), model.h);
        auto gain = solve_gain(opt.solver, *reference, data, opt.galerkin_degree);
        return compute_control(std::move(gain), *reference, model);
    }
    if (opt.solver == GainSolverKind::Galerkin) {
        auto gain = solve_gain_galerkin(e, model, default_basis(e, opt.galerkin_degree));
        return compute_control(std::move(gain), e, model);
    }
    const auto kde = kde_estimate(e, silverman_bandwidth(e), grid);
    const auto data = numeric::sample(grid, model.h);
    auto gain = solve_gain(opt.solver, kde, data, opt.galerkin_degree);
    return compute_control(std::move(gain), e, model);
}

/// Replace h_hat (and the sampled u) while keeping the gain.
inline ControlLaw refresh_h_hat(const ControlLaw& c, double h_hat, const ObservationModel& model) {
    std::optional<Grid> grid = c.u ? c.gain.grid : std::nullopt;
    return detail::assemble_control(c.gain, h_hat, model, grid);
}

// ============================================================================
// Particle propagation
// ============================================================================

/// Euler-Maruyama is the default. Milstein adds 0.5 K K' (dz^2 - dt) per
/// particle, which cuts the pathwise error of the common-noise flow.
enum class ParticleScheme { EulerMaruyama, Milstein };

struct StepDiagnostics {
    double h_hat = 0.0;
    std::size_t outside_reliable = 0;
    double mean_gain_sq = 0.0;  ///< (1/N) sum |K(X^i)|^2
    double mean_abs_u = 0.0;    ///< (1/N) sum |u(X^i)|
};

namespace detail {

template <class Extra>
ParticleEnsemble propagate(const ParticleEnsemble& e, const ControlLaw& c, double dz, double dt,
                           const ObservationModel& model, StepDiagnostics* diag,
                           ParticleScheme scheme, Extra&& extra) {
    require(dt > 0.0 && std::isfinite(dt), ErrorCode::BadStep, "time step must be positive");
    require(std::isfinite(dz), ErrorCode::NonFinite, "observation increment not finite");
    std::vector<double> next(e.size());
    double k2 = 0.0, au = 0.0;
    std::size_t outside = 0;
    const double ito = scheme == ParticleScheme::Milstein ? 0.5 * (dz * dz - dt) : 0.0;
    const GainField& gf = c.gain;
    // Grid gains: node slopes once per step, then one cell lookup per particle.
    const bool on_grid = !gf.is_galerkin() && gf.has_grid();
    const std::vector<double> slopes = on_grid ? gf.gain_slope_on(*gf.grid) : std::vector<double>{};
    auto gain_and_slope = [&](double x) -> std::pair<double, double> {
        if (!on_grid) return {gf.gain_at(x), gf.gain_slope_at(x)};
        const Grid& g = *gf.grid;
        if (x <= g[gf.reliable_first]) {
            return {gf.gain[gf.reliable_first], x < g[gf.reliable_first] ? 0.0 : slopes[gf.reliable_first]};
        }
        if (x >= g[gf.reliable_last]) {
            return {gf.gain[gf.reliable_last], x > g[gf.reliable_last] ? 0.0 : slopes[gf.reliable_last]};
        }
        const std::size_t j = g.cell_of(x);
        const double t = (x - g[j]) / g.spacing(j);
        return {(1.0 - t) * gf.gain[j] + t * gf.gain[j + 1], (1.0 - t) * slopes[j] + t * slopes[j + 1]};
    };
    for (std::size_t i = 0; i < e.size(); ++i) {
        const double x = e[i];
        const auto [k, dk] = gain_and_slope(x);
        const double u = -0.5 * k * (model.h(x) + c.h_hat) + 0.5 * k * dk;
        next[i] = x + u * dt + k * dz + ito * k * dk + extra(i, x);
        if (!std::isfinite(next[i])) {
            fail(ErrorCode::Blowup, "particle " + std::to_string(i) + " left the finite range");
        }
        k2 += k * k;
        au += std::abs(u);
        if (!c.gain.in_reliable_domain(x)) ++outside;
    }
    if (diag) {
        const double inv = 1.0 / static_cast<double>(e.size());
        *diag = {c.h_hat, outside, k2 * inv, au * inv};
    }
    return ParticleEnsemble(std::move(next));
}

}  // namespace detail

/// X^i <- X^i + u(X^i) dt + K(X^i) dz for every particle with the same (dz, dt).
inline ParticleEnsemble fpf_step(const ParticleEnsemble& e, const ControlLaw& c, double dz,
                                 double dt, const ObservationModel& model,
                                 StepDiagnostics* diag = nullptr,
                                 ParticleScheme scheme = ParticleScheme::EulerMaruyama) {
    return detail::propagate(e, c, dz, dt, model, diag, scheme,
                             [](std::size_t, double) { return 0.0; });
}

/// Solve the gain from the ensemble (or reference) and take one step.
inline ParticleEnsemble fpf_step(const ParticleEnsemble& e, double dz, double dt,
                                 const ObservationModel& model, const GainOptions& opt,
                                 const Grid& grid, const GridDensity* reference = nullptr,
                                 StepDiagnostics* diag = nullptr) {
    const auto c = make_control(e, model, opt, grid, reference);
    return fpf_step(e, c, dz, dt, model, diag);
}

/// General-drift filter: adds a(X^i) dt + dB^i, with dB^i ~ N(0, dt) drawn
/// from a per-(step, particle) substream of `seed`.
inline ParticleEnsemble fpf_step_general(const ParticleEnsemble& e, const ControlLaw& c,
                                         const std::function<double(double)>& drift, double dz,
                                         double dt, const ObservationModel& model,
                                         bool process_noise, std::uint64_t seed,
                                         std::uint64_t step_index,
                                         StepDiagnostics* diag = nullptr) {
    const CounterRng step_stream = CounterRng(seed, stream_id("process")).substream(step_index);
    const double sq = std::sqrt(dt);
    return detail::propagate(e, c, dz, dt, model, diag, ParticleScheme::EulerMaruyama,
                             [&](std::size_t i, double x) {
        double v = drift(x) * dt;
        if (process_noise) {
            NormalSource normal(step_stream.substream(i));
            v += sq * normal();
        }
        return v;
    });
}

// ============================================================================
// Filter runs
// ============================================================================

struct FpfSetup {
    Prior prior;
    ObservationModel model;
    ObservationPath path;
    std::size_t particles = 1000;
    Grid grid;
    GainOptions gain;
    std::uint64_t seed = 0;
    ParticleScheme scheme = ParticleScheme::EulerMaruyama;
    /// Also compute the weak-form flux residual of the gain each step.
    bool flux_diagnostics = false;
};

struct FpfStepRecord {
    std::size_t step = 0;
    double t = 0.0;
    double z = 0.0;
    double h_hat = 0.0;  ///< h_hat used for the step that ended here (filter's value)
    double emp_mean = 0.0;
    double emp_var = 0.0;
    std::size_t outside_reliable = 0;
    double mean_gain_sq = 0.0;
    double mean_abs_u = 0.0;
    double gain_flux_residual = 0.0;
};

/// Called once for step 0 and after every step with the ensemble and the
/// closed-form reference posterior at the same instant.
using StepObserver = std::function<void(const FpfStepRecord&, const ParticleEnsemble&,
                                        const GridDensity& reference)>;

struct FpfRun {
    std::vector<FpfStepRecord> records;
    ParticleEnsemble final_ensemble;
    GridDensity final_reference;
};

namespace detail {

inline double max_flux_residual(const ControlLaw& c, const ParticleEnsemble& e,
                                const GridDensity& reference, const ObservationModel& model,
                                FilterMode mode) {
    struct Probe {
        double (*psi)(double);
        double (*dpsi)(double);
    };
    static constexpr Probe probes[] = {
        {[](double x) { return x; }, [](double) { return 1.0; }},
        {[](double x) { return x * x; }, [](double x) { return 2.0 * x; }},
        {[](double x) { return std::sin(x); }, [](double x) { return std::cos(x); }},
    };
    double worst = 0.0;
    if (mode == FilterMode::Oracle) {
        const auto data = numeric::sample(reference.grid(), model.h);
        for (const auto& p : probes) {
            worst = std::max(worst, std::abs(weak_form_residual(c.gain, reference, data, p.psi,
                                                                p.dpsi)));
        }
    } else {
        for (const auto& p : probes) {
            worst = std::max(worst,
                             std::abs(weak_form_residual(c.gain, e, model.h, p.psi, p.dpsi)));
        }
    }
    return worst;
}

}  // namespace detail

/// Run the filter over the whole observation path: each step solves the
/// gain, forms the control law and moves the particles.
inline FpfRun run_fpf(const FpfSetup& s, const StepObserver& observer = {}) {
    require(s.gain.stride >= 1, ErrorCode::InvalidArgument, "gain stride must be >= 1");
    const auto prior_density = s.prior.density_on(s.grid);
    ParticleEnsemble ens = sample_prior(s.prior, s.particles, s.seed);
    GridDensity reference = prior_density;
    std::vector<FpfStepRecord> records;
    records.reserve(s.path.steps() + 1);

    FpfStepRecord r0;
    r0.h_hat = s.gain.mode == FilterMode::Oracle ? expectation(s.model.h, reference)
                                                 : ens.average(s.model.h);
    r0.emp_mean = ens.mean();
    r0.emp_var = ens.variance();
    records.push_back(r0);
    if (observer) observer(r0, ens, reference);

    std::optional<ControlLaw> control;
    for (std::size_t n = 1; n <= s.path.steps(); ++n) {
        const bool resolve = !control || (n - 1) % s.gain.stride == 0;
        if (resolve) {
            control = make_control(ens, s.model, s.gain, s.grid, &reference);
        } else {
            const double h_hat = s.gain.mode == FilterMode::Oracle
                                     ? expectation(s.model.h, reference)
                                     : ens.average(s.model.h);
            control = refresh_h_hat(*control, h_hat, s.model);
        }
#ifndef NDEBUG
        require(control_invariant_error(*control, s.model) < 1e-10, ErrorCode::SolverFailure,
                "control law invariants violated");
#endif
        double flux = 0.0;
        if (s.flux_diagnostics) {
            flux = detail::max_flux_residual(*control, ens, reference, s.model, s.gain.mode);
        }
        StepDiagnostics diag;
        ens = fpf_step(ens, *control, s.path.dz(n), s.path.dt(n), s.model, &diag, s.scheme);
        reference = closed_form_posterior(prior_density, s.path.z(n) - s.path.z(0),
                                          s.path.time(n), s.model);
        FpfStepRecord r;
        r.step = n;
        r.t = s.path.time(n);
        r.z = s.path.z(n);
        r.h_hat = diag.h_hat;
        r.emp_mean = ens.mean();
        r.emp_var = ens.variance();
        r.outside_reliable = diag.outside_reliable;
        r.mean_gain_sq = diag.mean_gain_sq;
        r.mean_abs_u = diag.mean_abs_u;
        r.gain_flux_residual = flux;
        records.push_back(r);
        if (observer) observer(r, ens, reference);
    }
    return {std::move(records), std::move(ens), std::move(reference)};
}

}  // namespace fpf
