#pragma once

/// Grid densities, quadrature, divergences, kernel density estimation and
/// spectral-gap diagnostics.
///
/// Densities live on a bounded, strictly increasing 1D grid and are stored as
/// log-values so that long chains of multiplicative Bayes updates neither
/// underflow nor overflow. Integrals use the trapezoid rule on the (possibly
/// non-uniform) grid; derivatives use second-order central differences with
/// one-sided stencils at the two endpoints.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fpflab/error.hpp"

namespace fpf {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ============================================================================
// Grid
// ============================================================================

/// Immutable, shareable set of abscissae with precomputed trapezoid weights.
class Grid {
public:
    static constexpr std::size_t kMinNodes = 64;

    explicit Grid(std::vector<double> nodes) {
        require(nodes.size() >= kMinNodes, ErrorCode::InvalidArgument,
                "grid needs at least " + std::to_string(kMinNodes) + " nodes");
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            require(std::isfinite(nodes[i]), ErrorCode::NonFinite, "grid node not finite");
            if (i > 0) {
                require(nodes[i] > nodes[i - 1], ErrorCode::InvalidArgument,
                        "grid must be strictly increasing");
            }
        }
        auto data = std::make_shared<Data>();
        const std::size_t n = nodes.size();
        data->weights.assign(n, 0.0);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double half = 0.5 * (nodes[i + 1] - nodes[i]);
            data->weights[i] += half;
            data->weights[i + 1] += half;
        }
        data->log_weights.resize(n);
        std::transform(data->weights.begin(), data->weights.end(), data->log_weights.begin(),
                       [](double w) { return std::log(w); });
        const double step = (nodes.back() - nodes.front()) / static_cast<double>(n - 1);
        bool even = true;
        for (std::size_t i = 0; i + 1 < n && even; ++i) {
            even = std::abs(nodes[i + 1] - nodes[i] - step) <= 1e-9 * step;
        }
        data->inv_step = even ? 1.0 / step : 0.0;
        data->nodes = std::move(nodes);
        data_ = std::move(data);
    }

    static Grid uniform(double lo, double hi, std::size_t n) {
        require(hi > lo, ErrorCode::InvalidArgument, "grid bounds must satisfy lo < hi");
        require(n >= kMinNodes, ErrorCode::InvalidArgument, "too few grid nodes");
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        }
        x.back() = hi;
        return Grid(std::move(x));
    }

    /// Uniform grid on [center - half_width, center + half_width].
    static Grid centered(double center, double half_width, std::size_t n) {
        return uniform(center - half_width, center + half_width, n);
    }

    std::size_t size() const noexcept { return data_->nodes.size(); }
    double operator[](std::size_t i) const noexcept { return data_->nodes[i]; }
    std::span<const double> nodes() const noexcept { return data_->nodes; }
    std::span<const double> weights() const noexcept { return data_->weights; }
    std::span<const double> log_weights() const noexcept { return data_->log_weights; }
    double lo() const noexcept { return data_->nodes.front(); }
    double hi() const noexcept { return data_->nodes.back(); }
    double spacing(std::size_t i) const noexcept { return data_->nodes[i + 1] - data_->nodes[i]; }

    bool same_as(const Grid& other) const noexcept {
        return data_ == other.data_ || data_->nodes == other.data_->nodes;
    }

    /// Index of the cell [x_i, x_{i+1}] containing x, clamped to the grid.
    std::size_t cell_of(double x) const noexcept {
        const auto& v = data_->nodes;
        if (x <= v.front()) return 0;
        if (x >= v.back()) return v.size() - 2;
        if (data_->inv_step > 0.0) {
            auto i = std::min(static_cast<std::size_t>((x - v.front()) * data_->inv_step),
                              v.size() - 2);
            while (i > 0 && x < v[i]) --i;
            while (i + 2 < v.size() && x >= v[i + 1]) ++i;
            return i;
        }
        auto it = std::upper_bound(v.begin(), v.end(), x);
        return static_cast<std::size_t>(it - v.begin()) - 1;
    }

private:
    struct Data {
        std::vector<double> nodes;
        std::vector<double> weights;
        std::vector<double> log_weights;
        double inv_step = 0.0;  ///< 1/spacing for evenly spaced nodes, else 0
    };
    std::shared_ptr<const Data> data_;
};

// ============================================================================
// Finite differences and quadrature on a grid
// ============================================================================

namespace numeric {

/// First derivative: second-order central differences on the interior,
/// second-order one-sided three-point stencils at the endpoints.
inline std::vector<double> derivative(const Grid& g, std::span<const double> f) {
    const std::size_t n = g.size();
    require(f.size() == n, ErrorCode::InvalidArgument, "derivative: size mismatch");
    std::vector<double> d(n);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double hm = g[i] - g[i - 1];
        const double hp = g[i + 1] - g[i];
        d[i] = (hm * hm * f[i + 1] - hp * hp * f[i - 1] + (hp * hp - hm * hm) * f[i]) /
               (hm * hp * (hm + hp));
    }
    {
        const double h1 = g[1] - g[0];
        const double h2 = g[2] - g[1];
        const double s = h1 + h2;
        d[0] = -(2.0 * h1 + h2) / (h1 * s) * f[0] + s / (h1 * h2) * f[1] - h1 / (h2 * s) * f[2];
    }
    {
        const double h1 = g[n - 1] - g[n - 2];
        const double h2 = g[n - 2] - g[n - 3];
        const double s = h1 + h2;
        d[n - 1] = (2.0 * h1 + h2) / (h1 * s) * f[n - 1] - s / (h1 * h2) * f[n - 2] +
                   h1 / (h2 * s) * f[n - 3];
    }
    return d;
}

/// Second derivative; three-point formula, endpoint values copied from the
/// nearest interior stencil.
inline std::vector<double> second_derivative(const Grid& g, std::span<const double> f) {
    const std::size_t n = g.size();
    require(f.size() == n, ErrorCode::InvalidArgument, "second_derivative: size mismatch");
    std::vector<double> d(n);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double hm = g[i] - g[i - 1];
        const double hp = g[i + 1] - g[i];
        d[i] = 2.0 * ((f[i + 1] - f[i]) / hp - (f[i] - f[i - 1]) / hm) / (hm + hp);
    }
    d[0] = d[1];
    d[n - 1] = d[n - 2];
    return d;
}

inline double trapezoid(const Grid& g, std::span<const double> f) {
    const auto w = g.weights();
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += w[i] * f[i];
    return s;
}

/// Running trapezoid integral from the left end; out[0] = 0.
inline std::vector<double> cumulative_trapezoid(const Grid& g, std::span<const double> f) {
    std::vector<double> out(g.size(), 0.0);
    for (std::size_t i = 1; i < g.size(); ++i) {
        out[i] = out[i - 1] + 0.5 * g.spacing(i - 1) * (f[i - 1] + f[i]);
    }
    return out;
}

template <class F>
std::vector<double> sample(const Grid& g, F&& f) {
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) v[i] = f(g[i]);
    return v;
}

inline double log_sum_exp(std::span<const double> a) {
    double m = kNegInf;
    for (double v : a) m = std::max(m, v);
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (double v : a) s += std::exp(v - m);
    return m + std::log(s);
}

}  // namespace numeric

// ============================================================================
// GridDensity
// ============================================================================

/// Probability density sampled on a Grid, stored as log-values (-inf allowed).
class GridDensity {
public:
    GridDensity(Grid grid, std::vector<double> log_values)
        : grid_(std::move(grid)), log_values_(std::move(log_values)) {
        require(log_values_.size() == grid_.size(), ErrorCode::InvalidArgument,
                "log-values and grid differ in length");
        for (double v : log_values_) {
            require(!std::isnan(v) && v != std::numeric_limits<double>::infinity(),
                    ErrorCode::NonFinite, "log-density must be finite or -inf");
        }
    }

    /// Unnormalized density from a log-density function.
    template <class LogF>
    static GridDensity from_log_function(const Grid& grid, LogF&& logf) {
        return GridDensity(grid, numeric::sample(grid, std::forward<LogF>(logf)));
    }

    static GridDensity gaussian(const Grid& grid, double mean, double sd);

    const Grid& grid() const noexcept { return grid_; }
    std::size_t size() const noexcept { return log_values_.size(); }
    std::span<const double> log_values() const noexcept { return log_values_; }
    double log_value(std::size_t i) const noexcept { return log_values_[i]; }
    double value(std::size_t i) const noexcept { return std::exp(log_values_[i]); }

    std::vector<double> values() const {
        std::vector<double> v(size());
        std::transform(log_values_.begin(), log_values_.end(), v.begin(),
                       [](double l) { return std::exp(l); });
        return v;
    }

    /// log of the trapezoid integral, via log-sum-exp.
    double log_mass() const {
        std::vector<double> t(size());
        const auto lw = grid_.log_weights();
        for (std::size_t i = 0; i < size(); ++i) t[i] = log_values_[i] + lw[i];
        return numeric::log_sum_exp(t);
    }

    double mass() const { return std::exp(log_mass()); }

    /// Linear interpolation of the density at x; zero outside the grid.
    double value_at(double x) const {
        if (x < grid_.lo() || x > grid_.hi()) return 0.0;
        const std::size_t i = grid_.cell_of(x);
        const double t = (x - grid_[i]) / grid_.spacing(i);
        return (1.0 - t) * value(i) + t * value(i + 1);
    }

private:
    Grid grid_;
    std::vector<double> log_values_;
};

inline GridDensity normalize(const GridDensity& d) {
    const double lm = d.log_mass();
    require(lm != kNegInf, ErrorCode::ZeroMass, "density has no mass on the grid");
    std::vector<double> lv(d.log_values().begin(), d.log_values().end());
    for (double& v : lv) v -= lm;
    return GridDensity(d.grid(), std::move(lv));
}

inline GridDensity GridDensity::gaussian(const Grid& grid, double mean, double sd) {
    require(sd > 0.0, ErrorCode::InvalidArgument, "gaussian sd must be positive");
    return normalize(from_log_function(grid, [=](double x) {
        const double z = (x - mean) / sd;
        return -0.5 * z * z;
    }));
}

/// Gaussian-mixture density, normalized on the grid.
struct MixtureComponent {
    double weight = 1.0;
    double mean = 0.0;
    double sd = 1.0;

    bool operator==(const MixtureComponent&) const = default;
};

inline double mixture_log_pdf(std::span<const MixtureComponent> comps, double x) {
    constexpr double kLogSqrt2Pi = 0.91893853320467274178;
    std::vector<double> terms;
    terms.reserve(comps.size());
    for (const auto& c : comps) {
        const double z = (x - c.mean) / c.sd;
        terms.push_back(std::log(c.weight) - std::log(c.sd) - kLogSqrt2Pi - 0.5 * z * z);
    }
    return numeric::log_sum_exp(terms);
}

inline GridDensity mixture_density(const Grid& grid, std::span<const MixtureComponent> comps) {
    require(!comps.empty(), ErrorCode::InvalidArgument, "mixture needs at least one component");
    for (const auto& c : comps) {
        require(c.weight > 0.0 && c.sd > 0.0, ErrorCode::InvalidArgument,
                "mixture weights and sds must be positive");
    }
    return normalize(GridDensity::from_log_function(
        grid, [&](double x) { return mixture_log_pdf(comps, x); }));
}

// ============================================================================
// Quadrature functionals
// ============================================================================

/// Trapezoid quadrature of f * rho for sampled f.
inline double expectation(std::span<const double> f, const GridDensity& d) {
    require(f.size() == d.size(), ErrorCode::InvalidArgument, "expectation: size mismatch");
    const auto w = d.grid().weights();
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double lv = d.log_value(i);
        if (lv == kNegInf) continue;
        require(std::isfinite(f[i]), ErrorCode::NonFinite,
                "integrand not finite where density is positive");
        s += w[i] * f[i] * std::exp(lv);
    }
    return s;
}

template <class F>
    requires std::invocable<F, double>
double expectation(F&& f, const GridDensity& d) {
    const auto x = d.grid().nodes();
    std::vector<double> fv(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        fv[i] = d.log_value(i) == kNegInf ? 0.0 : f(x[i]);
    }
    return expectation(std::span<const double>(fv), d);
}

inline double mean(const GridDensity& d) {
    return expectation([](double x) { return x; }, d);
}

inline double variance(const GridDensity& d) {
    const double m = mean(d);
    return expectation([m](double x) { return (x - m) * (x - m); }, d);
}

/// Relative entropy D(d1 || d2) by trapezoid quadrature; 0 ln 0 = 0.
inline double kl_divergence(const GridDensity& d1, const GridDensity& d2) {
    require(d1.grid().same_as(d2.grid()), ErrorCode::InvalidArgument,
            "kl_divergence: densities on different grids");
    const auto w = d1.grid().weights();
    double s = 0.0;
    for (std::size_t i = 0; i < d1.size(); ++i) {
        const double l1 = d1.log_value(i);
        if (l1 == kNegInf) continue;
        const double l2 = d2.log_value(i);
        if (l2 == kNegInf) {
            fail(ErrorCode::SupportMismatch, "first density positive where second vanishes");
        }
        s += w[i] * std::exp(l1) * (l1 - l2);
    }
    return s;
}

/// L1 distance between two densities on the same grid.
inline double l1_distance(const GridDensity& a, const GridDensity& b) {
    require(a.grid().same_as(b.grid()), ErrorCode::InvalidArgument,
            "l1_distance: densities on different grids");
    const auto w = a.grid().weights();
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += w[i] * std::abs(a.value(i) - b.value(i));
    return s;
}

/// Cumulative distribution at the nodes (cumulative trapezoid), last value 1.
inline std::vector<double> cdf(const GridDensity& d) {
    auto c = numeric::cumulative_trapezoid(d.grid(), d.values());
    const double total = c.back();
    require(total > 0.0, ErrorCode::ZeroMass, "cdf of a zero-mass density");
    for (double& v : c) v /= total;
    return c;
}

/// Second moment check for membership in the finite-second-moment class.
inline bool has_finite_second_moment(const GridDensity& d) {
    return std::isfinite(expectation([](double x) { return x * x; }, d));
}

// ============================================================================
// Particle ensembles and KDE
// ============================================================================

/// N equally weighted particle positions.
class ParticleEnsemble {
public:
    explicit ParticleEnsemble(std::vector<double> positions) : positions_(std::move(positions)) {
        require(positions_.size() >= 2, ErrorCode::TooFewParticles,
                "ensemble needs at least 2 particles");
        for (double x : positions_) {
            require(std::isfinite(x), ErrorCode::Blowup, "particle position not finite");
        }
    }

    std::size_t size() const noexcept { return positions_.size(); }
    std::span<const double> positions() const noexcept { return positions_; }
    double operator[](std::size_t i) const noexcept { return positions_[i]; }

    /// Particle average of f; fixed left-to-right summation order.
    template <class F>
    double average(F&& f) const {
        double s = 0.0;
        for (double x : positions_) s += f(x);
        return s / static_cast<double>(positions_.size());
    }

    double mean() const {
        return average([](double x) { return x; });
    }

    /// Population variance (1/N normalization).
    double variance() const {
        const double m = mean();
        return average([m](double x) { return (x - m) * (x - m); });
    }

    bool operator==(const ParticleEnsemble&) const = default;

private:
    std::vector<double> positions_;
};

/// Silverman's rule of thumb, 1.06 * sd * N^(-1/5).
inline double silverman_bandwidth(const ParticleEnsemble& e) {
    const double sd = std::sqrt(e.variance());
    return 1.06 * sd * std::pow(static_cast<double>(e.size()), -0.2);
}

/// Gaussian-kernel density estimate on `grid`, normalized.
///
/// Kernels are summed over a +-12 bandwidth window; nodes outside every window
/// fall back to the nearest particle's kernel, which dominates the exact sum.
inline GridDensity kde_estimate(const ParticleEnsemble& e, double bandwidth, const Grid& grid) {
    require(bandwidth > 0.0 && std::isfinite(bandwidth), ErrorCode::BadBandwidth,
            "bandwidth must be positive");
    constexpr double kWindow = 12.0;
    std::vector<double> sorted(e.positions().begin(), e.positions().end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = grid.size();
    std::vector<double> acc(n, 0.0);
    const auto x = grid.nodes();
    const double inv_h = 1.0 / bandwidth;
    for (double p : sorted) {
        const auto lo = std::lower_bound(x.begin(), x.end(), p - kWindow * bandwidth);
        const auto hi = std::upper_bound(x.begin(), x.end(), p + kWindow * bandwidth);
        for (auto it = lo; it != hi; ++it) {
            const double z = (*it - p) * inv_h;
            acc[static_cast<std::size_t>(it - x.begin())] += std::exp(-0.5 * z * z);
        }
    }
    const double log_norm = -std::log(static_cast<double>(sorted.size()));
    std::vector<double> lv(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (acc[i] > 0.0) {
            lv[i] = std::log(acc[i]) + log_norm;
        } else {
            auto it = std::lower_bound(sorted.begin(), sorted.end(), x[i]);
            double dist = std::numeric_limits<double>::infinity();
            if (it != sorted.end()) dist = std::min(dist, *it - x[i]);
            if (it != sorted.begin()) dist = std::min(dist, x[i] - *(it - 1));
            const double z = dist * inv_h;
            lv[i] = -0.5 * z * z + log_norm;
        }
    }
    return normalize(GridDensity(grid, std::move(lv)));
}

// ============================================================================
// Spectral-gap diagnostics
// ============================================================================

/// Rayleigh quotient  int |f'|^2 rho / int |f - mean f|^2 rho  with f' by
/// central differences. Bounded below by any Poincare constant of rho.
template <class F>
double rayleigh_quotient(F&& f, const GridDensity& d) {
    const auto fv = numeric::sample(d.grid(), std::forward<F>(f));
    const auto df = numeric::derivative(d.grid(), fv);
    const double fbar = expectation(std::span<const double>(fv), d);
    std::vector<double> centered(fv.size()), grad2(fv.size());
    for (std::size_t i = 0; i < fv.size(); ++i) {
        centered[i] = (fv[i] - fbar) * (fv[i] - fbar);
        grad2[i] = df[i] * df[i];
    }
    const double den = expectation(std::span<const double>(centered), d);
    if (!(std::sqrt(std::max(den, 0.0)) >= 1e-14)) {
        fail(ErrorCode::DegenerateTestFunction, "test function is constant under the density");
    }
    return expectation(std::span<const double>(grad2), d) / den;
}

/// Numerical Poincare constant: smallest non-zero eigenvalue of the weighted
/// Neumann Laplacian  -(1/rho)(rho f')'  discretized on the nodes where the
/// density exceeds `rel_floor` times its maximum.
inline double spectral_gap_estimate(const GridDensity& d, double rel_floor = 1e-30) {
    const auto& g = d.grid();
    double lmax = kNegInf;
    for (double v : d.log_values()) lmax = std::max(lmax, v);
    const double cut = lmax + std::log(rel_floor);
    std::size_t first = d.size(), last = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.log_value(i) >= cut) {
            first = std::min(first, i);
            last = i;
        }
    }
    require(first < last && last - first + 1 >= 3, ErrorCode::DegenerateDensity,
            "density support too small for a spectral-gap estimate");
    const std::size_t m = last - first + 1;
    std::vector<double> mass(m), cell(m - 1);
    for (std::size_t k = 0; k < m; ++k) {
        const std::size_t i = first + k;
        // control-volume width restricted to the active range
        double w = 0.0;
        if (k > 0) w += 0.5 * g.spacing(i - 1);
        if (k + 1 < m) w += 0.5 * g.spacing(i);
        mass[k] = w * std::exp(d.log_value(i) - lmax);
    }
    for (std::size_t k = 0; k + 1 < m; ++k) {
        const std::size_t i = first + k;
        const double mid = std::exp(0.5 * (d.log_value(i) + d.log_value(i + 1)) - lmax);
        cell[k] = mid / g.spacing(i);
    }
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    Eigen::VectorXd off(static_cast<Eigen::Index>(m - 1));
    for (std::size_t k = 0; k + 1 < m; ++k) {
        diag[static_cast<Eigen::Index>(k)] += cell[k];
        diag[static_cast<Eigen::Index>(k + 1)] += cell[k];
        off[static_cast<Eigen::Index>(k)] = -cell[k] / std::sqrt(mass[k] * mass[k + 1]);
    }
    for (std::size_t k = 0; k < m; ++k) diag[static_cast<Eigen::Index>(k)] /= mass[k];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
    require(solver.info() == Eigen::Success, ErrorCode::SolverFailure,
            "tridiagonal eigen-solve failed");
    return solver.eigenvalues()[1];
}

}  // namespace fpf
