#pragma once

/// Variational time stepping of the static-signal filter.
///
/// Each step minimizes  I_n(rho) = D(rho || rho_{n-1}) + (dt/2) int rho (Y - h)^2
/// whose minimizer is the Bayes update  rho_n ~ rho_{n-1} exp(h dZ - dt h^2 / 2)
/// (the common exp(-dt Y^2 / 2) factor cancels, so Y = dZ/dt is never formed).
/// The piecewise-constant interpolant of {rho_n} converges to
///   rho(x, t) ~ exp(h(x)(Z_t - Z_0) - h(x)^2 t / 2) rho_0(x).

#include <cmath>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "fpflab/density.hpp"
#include "fpflab/error.hpp"
#include "fpflab/observation.hpp"
#include "fpflab/poisson.hpp"
#include "fpflab/simulation.hpp"

namespace fpf {

/// Vector field sampled on a grid (1D: one value per node).
struct VectorField {
    enum class Provenance { Analytic, Solved };

    std::vector<double> values;
    Provenance provenance = Provenance::Analytic;

    template <class F>
    static VectorField from_function(const Grid& g, F&& f) {
        return {numeric::sample(g, std::forward<F>(f)), Provenance::Analytic};
    }

    static VectorField zero(const Grid& g) { return {std::vector<double>(g.size(), 0.0)}; }
};

inline GridDensity bayes_update(const GridDensity& prev, double dz, double dt,
                                const ObservationModel& model) {
    require(dt > 0.0 && std::isfinite(dt), ErrorCode::BadStep, "time step must be positive");
    require(std::isfinite(dz), ErrorCode::NonFinite, "observation increment not finite");
    const auto x = prev.grid().nodes();
    std::vector<double> lv(prev.log_values().begin(), prev.log_values().end());
    for (std::size_t i = 0; i < lv.size(); ++i) {
        if (lv[i] == kNegInf) continue;
        const double h = model.h(x[i]);
        lv[i] += h * dz - 0.5 * dt * h * h;
    }
    return normalize(GridDensity(prev.grid(), std::move(lv)));
}

/// I_n(candidate) = D(candidate || prev) + (dt/2) int candidate (y - h)^2.
inline double energy_functional(const GridDensity& candidate, const GridDensity& prev, double y,
                                double dt, const ObservationModel& model) {
    require(dt > 0.0, ErrorCode::BadStep, "time step must be positive");
    const double kl = kl_divergence(candidate, prev);
    const double cost = expectation(
        [&](double x) {
            const double r = y - model.h(x);
            return r * r;
        },
        candidate);
    return kl + 0.5 * dt * cost;
}

/// Explicit limit density for the static signal.
inline GridDensity closed_form_posterior(const GridDensity& prior, double z_span, double t,
                                         const ObservationModel& model) {
    require(t >= 0.0 && std::isfinite(t), ErrorCode::InvalidArgument, "time must be non-negative");
    const auto x = prior.grid().nodes();
    std::vector<double> lv(prior.log_values().begin(), prior.log_values().end());
    for (std::size_t i = 0; i < lv.size(); ++i) {
        if (lv[i] == kNegInf) continue;
        const double h = model.h(x[i]);
        lv[i] += h * z_span - 0.5 * t * h * h;
    }
    return normalize(GridDensity(prior.grid(), std::move(lv)));
}

/// Densities rho_0..rho_N of the time-stepping procedure on one path, with
/// the piecewise-constant interpolant rho^(N)(., t) = rho_n on [t_n, t_{n+1}).
class TimeSteppingRun {
public:
    TimeSteppingRun(std::vector<GridDensity> densities, ObservationPath path)
        : densities_(std::move(densities)), path_(std::move(path)) {
        require(densities_.size() == path_.steps() + 1, ErrorCode::InvalidArgument,
                "one density per sampling instant required");
    }

    const ObservationPath& path() const { return path_; }
    std::size_t steps() const { return path_.steps(); }
    const GridDensity& density(std::size_t n) const { return densities_.at(n); }
    std::span<const GridDensity> densities() const { return densities_; }

    const GridDensity& interpolant(double t) const { return densities_[path_.index_at(t)]; }

    /// Largest violation margin of
    ///   rho_n / rho_{n-1} <= exp(2 |dZ_n| sup|h| + (dt_n / 2) sup|h|^2)
    /// over all nodes and steps (log scale; <= 0 means the bound holds).
    double ratio_bound_margin(const ObservationModel& model) const {
        const double hs = model.grid_sup(densities_.front().grid());
        double worst = kNegInf;
        for (std::size_t n = 1; n < densities_.size(); ++n) {
            const double bound =
                2.0 * std::abs(path_.dz(n)) * hs + 0.5 * path_.dt(n) * hs * hs;
            const auto& a = densities_[n];
            const auto& b = densities_[n - 1];
            for (std::size_t i = 0; i < a.size(); ++i) {
                if (b.log_value(i) == kNegInf) continue;
                worst = std::max(worst, a.log_value(i) - b.log_value(i) - bound);
            }
        }
        return worst;
    }

private:
    std::vector<GridDensity> densities_;
    ObservationPath path_;
};

inline TimeSteppingRun run_time_stepping(const GridDensity& prior, const ObservationPath& path,
                                         const ObservationModel& model) {
    require(std::abs(prior.mass() - 1.0) < 1e-8, ErrorCode::InvalidArgument,
            "prior must be normalized");
    std::vector<GridDensity> rho;
    rho.reserve(path.steps() + 1);
    rho.push_back(prior);
    for (std::size_t n = 1; n <= path.steps(); ++n) {
        rho.push_back(bayes_update(rho.back(), path.dz(n), path.dt(n), model));
    }
    return TimeSteppingRun(std::move(rho), path);
}

namespace detail {

/// d/dx ln rho by central differences; -inf nodes are clamped far below the
/// smallest representable density so the product with rho stays zero.
inline std::vector<double> log_density_gradient(const GridDensity& d) {
    std::vector<double> lv(d.log_values().begin(), d.log_values().end());
    for (double& v : lv) v = std::max(v, -800.0);
    return numeric::derivative(d.grid(), lv);
}

}  // namespace detail

/// Left side of the first-order optimality condition for a candidate pair:
///   int post [ -G_n' s + G_{n-1}' s - (dZ - h dt) h' s ],   G = -ln rho.
inline double el_residual(const GridDensity& prev, const GridDensity& post, double dz, double dt,
                          const VectorField& field, const ObservationModel& model) {
    require(prev.grid().same_as(post.grid()), ErrorCode::InvalidArgument,
            "el_residual: densities on different grids");
    const auto& g = post.grid();
    require(field.values.size() == g.size(), ErrorCode::InvalidArgument,
            "el_residual: field/grid size mismatch");
    const auto dl_post = detail::log_density_gradient(post);
    const auto dl_prev = detail::log_density_gradient(prev);
    std::vector<double> integrand(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = field.values[i];
        if (s == 0.0) {
            integrand[i] = 0.0;
            continue;
        }
        const double h = model.h(g[i]);
        // -G_n' = (ln rho_n)',  G_{n-1}' = -(ln rho_{n-1})'
        integrand[i] = (dl_post[i] - dl_prev[i] - (dz - h * dt) * model.grad_h(g[i])) * s;
    }
    return expectation(std::span<const double>(integrand), post);
}

using GainSolver = std::function<GainField(const GridDensity&, std::span<const double>)>;

inline GainSolver exact_gain_solver() {
    return [](const GridDensity& rho, std::span<const double> data) {
        return solve_gain_exact_1d(rho, data);
    };
}

/// |int post g - int prev g - int post (dZ - h dt) h' s| with s the gradient-form
/// weak solution of (prev s)' = -(g - <g, prev>) prev.
template <class G>
double el_update_residual(const GridDensity& prev, const GridDensity& post, G&& g, double dz,
                          double dt, const ObservationModel& model,
                          const GainSolver& solver = exact_gain_solver()) {
    require(prev.grid().same_as(post.grid()), ErrorCode::InvalidArgument,
            "el_update_residual: densities on different grids");
    const auto& grid = prev.grid();
    const auto data = numeric::sample(grid, g);
    const double lhs = expectation(std::span<const double>(data), post);
    const double prior_term = expectation(std::span<const double>(data), prev);
    const auto sigma = solver(prev, data).gain_on(grid);
    std::vector<double> transport(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double x = grid[i];
        transport[i] = (dz - model.h(x) * dt) * model.grad_h(x) * sigma[i];
    }
    const double rhs = prior_term + expectation(std::span<const double>(transport), post);
    return std::abs(lhs - rhs);
}

}  // namespace fpf
