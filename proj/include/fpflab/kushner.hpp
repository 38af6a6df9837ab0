#pragma once

/// Grid reference propagators for the posterior:
///   Kushner-Stratonovich   dp = (h - h_hat)(dZ - h_hat dt) p
///   controlled forward     dp = -(pK)' dZ - (pu)' dt + (1/2)(p K^2)'' dt
/// and the pointwise identities that make the second collapse onto the first
/// when (K, u) are the optimal feedback-particle-filter controls.

#include <cmath>
#include <span>
#include <vector>

#include "fpflab/density.hpp"
#include "fpflab/error.hpp"
#include "fpflab/observation.hpp"
#include "fpflab/poisson.hpp"
#include "fpflab/variational.hpp"

namespace fpf {

/// Output of an explicit Euler step, with the mass removed by clipping
/// negative values (reported, never hidden).
struct EulerStepResult {
    GridDensity density;
    double clipped_mass = 0.0;
    /// Change of the trapezoid integral before clipping and renormalization.
    double mass_change = 0.0;
};

namespace detail {

inline constexpr double kMinRetainedMass = 1e-6;

/// Build the renormalized density from linear values relative to exp(shift).
inline EulerStepResult finish_euler(const GridDensity& p, std::vector<double> updated,
                                    double shift, double original_mass) {
    const auto w = p.grid().weights();
    double raw = 0.0, clipped = 0.0;
    std::vector<double> lv(updated.size());
    for (std::size_t i = 0; i < updated.size(); ++i) {
        raw += w[i] * updated[i];
        if (updated[i] > 0.0) {
            lv[i] = std::log(updated[i]) + shift;
        } else {
            clipped -= w[i] * updated[i];
            lv[i] = kNegInf;
        }
    }
    const double kept = raw + clipped;
    if (!(kept >= kMinRetainedMass * original_mass)) {
        fail(ErrorCode::StepTooLarge, "explicit step destroyed the density's mass");
    }
    return {normalize(GridDensity(p.grid(), std::move(lv))),
            clipped * std::exp(shift), (raw - original_mass) * std::exp(shift)};
}

/// Linear density values scaled by exp(-max log-value), plus the shift.
inline std::pair<std::vector<double>, double> scaled_values(const GridDensity& p) {
    double lmax = kNegInf;
    for (double v : p.log_values()) lmax = std::max(lmax, v);
    require(lmax != kNegInf, ErrorCode::ZeroMass, "density has no mass");
    std::vector<double> v(p.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(p.log_value(i) - lmax);
    return {std::move(v), lmax};
}

}  // namespace detail

/// Explicit Euler step of the Kushner-Stratonovich equation, clipped at zero
/// and renormalized.
inline EulerStepResult ks_step_report(const GridDensity& p, double dz, double dt,
                                      const ObservationModel& model) {
    require(dt > 0.0 && std::isfinite(dt), ErrorCode::BadStep, "time step must be positive");
    const auto& g = p.grid();
    const auto h = numeric::sample(g, model.h);
    const double h_hat = expectation(std::span<const double>(h), p);
    auto [v, shift] = detail::scaled_values(p);
    const double mass = numeric::trapezoid(g, v);
    const double innovation = dz - h_hat * dt;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= 1.0 + (h[i] - h_hat) * innovation;
    return detail::finish_euler(p, std::move(v), shift, mass);
}

inline GridDensity ks_step(const GridDensity& p, double dz, double dt,
                           const ObservationModel& model) {
    return ks_step_report(p, dz, dt, model).density;
}

/// One-step weak-form residual
///   |<f, next> - <f, p> - <(h - h_hat)(dz - h_hat dt) f, p>|.
template <class F>
double ks_weak_residual(const GridDensity& p, const GridDensity& next, F&& f, double dz,
                        double dt, const ObservationModel& model) {
    const auto& g = p.grid();
    const auto fv = numeric::sample(g, f);
    const auto h = numeric::sample(g, model.h);
    const double h_hat = expectation(std::span<const double>(h), p);
    std::vector<double> forcing(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        forcing[i] = (h[i] - h_hat) * (dz - h_hat * dt) * fv[i];
    }
    return std::abs(expectation(std::span<const double>(fv), next) -
                    expectation(std::span<const double>(fv), p) -
                    expectation(std::span<const double>(forcing), p));
}

/// Explicit Euler step of the controlled forward equation in conservative
/// (flux) form. Fluxes live at cell midpoints and vanish at both ends of the
/// grid, so the trapezoid mass is conserved to rounding before
/// renormalization.
inline EulerStepResult fokker_planck_step(const GridDensity& p, std::span<const double> gain,
                                          const VectorField& u, double dz, double dt) {
    require(dt > 0.0 && std::isfinite(dt), ErrorCode::BadStep, "time step must be positive");
    const auto& g = p.grid();
    const std::size_t n = g.size();
    require(gain.size() == n && u.values.size() == n, ErrorCode::InvalidArgument,
            "fokker_planck_step: control/grid size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        const double local =
            0.5 * (i == 0 ? g.spacing(0) : i + 1 == n ? g.spacing(n - 2)
                                                      : std::min(g.spacing(i - 1), g.spacing(i)));
        if (std::abs(gain[i] * dz) > local || std::abs(u.values[i] * dt) > local) {
            fail(ErrorCode::CFLViolation,
                 "control displacement exceeds half the grid spacing at x = " +
                     std::to_string(g[i]));
        }
    }
    auto [v, shift] = detail::scaled_values(p);
    const double mass = numeric::trapezoid(g, v);
    std::vector<double> flux(n + 1, 0.0);  // flux[i] sits between nodes i-1 and i
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double h = g.spacing(i);
        const double pk = 0.5 * (v[i] * gain[i] + v[i + 1] * gain[i + 1]);
        const double pu = 0.5 * (v[i] * u.values[i] + v[i + 1] * u.values[i + 1]);
        const double dq =
            (v[i + 1] * gain[i + 1] * gain[i + 1] - v[i] * gain[i] * gain[i]) / h;
        flux[i + 1] = pk * dz + pu * dt - 0.5 * dq * dt;
    }
    const auto w = g.weights();
    std::vector<double> next(n);
    for (std::size_t i = 0; i < n; ++i) next[i] = v[i] - (flux[i + 1] - flux[i]) / w[i];
    return detail::finish_euler(p, std::move(next), shift, mass);
}

/// rho-weighted L2 norms of the pointwise residuals of
///   -(pu)' + (1/2)(p K^2)'' - h_hat (pK)' = 0     (drift identity)
///   (pK)' + (h - h_hat) p = 0                   (gain equation)
/// each divided by p and evaluated with log-density derivatives, which keeps
/// the tails well conditioned.
struct ExactnessResidual {
    double drift_identity = 0.0;
    double gain_equation = 0.0;
};

inline ExactnessResidual exactness_identity_residual(const GridDensity& p,
                                                     std::span<const double> gain,
                                                     const VectorField& u,
                                                     const ObservationModel& model) {
    const auto& g = p.grid();
    const std::size_t n = g.size();
    require(gain.size() == n && u.values.size() == n, ErrorCode::InvalidArgument,
            "exactness_identity_residual: control/grid size mismatch");
    const auto dl = detail::log_density_gradient(p);
    std::vector<double> lclamp(p.log_values().begin(), p.log_values().end());
    for (double& v : lclamp) v = std::max(v, -800.0);
    const auto d2l = numeric::second_derivative(g, lclamp);
    std::vector<double> k2(n);
    for (std::size_t i = 0; i < n; ++i) k2[i] = gain[i] * gain[i];
    const auto dK = numeric::derivative(g, gain);
    const auto du = numeric::derivative(g, u.values);
    const auto dk2 = numeric::derivative(g, k2);
    const auto d2k2 = numeric::second_derivative(g, k2);
    const auto h = numeric::sample(g, model.h);
    const double h_hat = expectation(std::span<const double>(h), p);

    std::vector<double> r33(n), r31(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double div_pk = dK[i] + gain[i] * dl[i];
        const double div_pu = du[i] + u.values[i] * dl[i];
        const double lap_pk2 = d2k2[i] + 2.0 * dk2[i] * dl[i] + k2[i] * (d2l[i] + dl[i] * dl[i]);
        const double a = -div_pu + 0.5 * lap_pk2 - h_hat * div_pk;
        const double b = div_pk + (h[i] - h_hat);
        r33[i] = a * a;
        r31[i] = b * b;
    }
    return {std::sqrt(expectation(std::span<const double>(r33), p)),
            std::sqrt(expectation(std::span<const double>(r31), p))};
}

inline ExactnessResidual exactness_identity_residual(const GridDensity& p, const GainField& gain,
                                                     const VectorField& u,
                                                     const ObservationModel& model) {
    const auto k = gain.gain_on(p.grid());
    return exactness_identity_residual(p, std::span<const double>(k), u, model);
}

}  // namespace fpf
