#pragma once

/// Sample-vs-reference comparisons and per-run metric tables.

#include <algorithm>
#include <cmath>
#include <vector>

#include "fpflab/density.hpp"
#include "fpflab/error.hpp"

namespace fpf {

struct DistributionComparison {
    double ks_distance = 0.0;   ///< sup |F_N - F| over the sample points
    double l1_after_kde = 0.0;  ///< int |KDE - reference| on the reference grid
    double mean_error = 0.0;    ///< sample mean - reference mean
    double var_error = 0.0;     ///< sample variance - reference variance
};

/// Reference CDF at x: linear interpolation of the cumulative trapezoid,
/// 0 left of the grid and 1 right of it.
inline double grid_cdf_at(const Grid& g, std::span<const double> F, double x) {
    if (x <= g.lo()) return 0.0;
    if (x >= g.hi()) return 1.0;
    const std::size_t i = g.cell_of(x);
    const double t = (x - g[i]) / g.spacing(i);
    return (1.0 - t) * F[i] + t * F[i + 1];
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `e` and the
/// reference CDF. Both one-sided gaps are checked at every jump.
inline double ks_distance(const ParticleEnsemble& e, const GridDensity& reference) {
    std::vector<double> x(e.positions().begin(), e.positions().end());
    std::sort(x.begin(), x.end());
    const auto F = cdf(reference);
    const auto& g = reference.grid();
    const double n = static_cast<double>(x.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = grid_cdf_at(g, F, x[i]);
        worst = std::max({worst, std::abs(f - static_cast<double>(i) / n),
                          std::abs(static_cast<double>(i + 1) / n - f)});
    }
    return std::min(worst, 1.0);
}

inline DistributionComparison compare_distributions(const ParticleEnsemble& e,
                                                    const GridDensity& reference) {
    require(std::abs(reference.mass() - 1.0) < 1e-8, ErrorCode::InvalidArgument,
            "reference must be normalized");
    DistributionComparison c;
    c.ks_distance = ks_distance(e, reference);
    double bw = silverman_bandwidth(e);
    if (!(bw > 0.0)) bw = reference.grid().spacing(0);  // all particles coincide
    c.l1_after_kde = l1_distance(kde_estimate(e, bw, reference.grid()), reference);
    c.mean_error = e.mean() - mean(reference);
    c.var_error = e.variance() - variance(reference);
    return c;
}

/// One row of a run table.
struct StepMetrics {
    std::size_t step = 0;
    double t = 0.0;
    double z = 0.0;
    double h_hat = 0.0;
    double emp_mean = 0.0;
    double emp_var = 0.0;
    double ref_mean = 0.0;
    double ref_var = 0.0;
    double ks_dist = 0.0;
    double l1_dist = 0.0;
    double gain_flux_residual = 0.0;
};

struct RunMetrics {
    std::vector<StepMetrics> rows;
    DistributionComparison terminal;
    double true_state = 0.0;
    std::size_t max_outside_reliable = 0;
};

}  // namespace fpf
