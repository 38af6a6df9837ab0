#pragma once

/// Ground-truth signal and observation sample paths.
///
///   dX = a(X) dt + dB        (a = 0, no noise: static state)
///   dZ = h(X) dt + dW
///
/// Both equations are integrated with Euler-Maruyama. Every path draws from
/// its own named counter-based stream, so identical (inputs, seed) give
/// bit-identical paths regardless of what else has been sampled.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fpflab/density.hpp"
#include "fpflab/error.hpp"
#include "fpflab/observation.hpp"
#include "fpflab/random.hpp"

namespace fpf {

// ============================================================================
// Time grids
// ============================================================================

inline void validate_times(std::span<const double> times) {
    require(times.size() >= 2, ErrorCode::InvalidArgument, "time grid needs at least two instants");
    require(times.front() == 0.0, ErrorCode::InvalidArgument, "time grid must start at t = 0");
    for (std::size_t i = 0; i < times.size(); ++i) {
        require(std::isfinite(times[i]), ErrorCode::NonFinite, "time not finite");
        if (i > 0) {
            require(times[i] > times[i - 1], ErrorCode::BadStep,
                    "times must be strictly increasing (zero step at index " + std::to_string(i) +
                        ")");
        }
    }
}

inline std::vector<double> uniform_times(double horizon, std::size_t steps) {
    require(horizon > 0.0, ErrorCode::InvalidArgument, "horizon must be positive");
    require(steps >= 1, ErrorCode::InvalidArgument, "need at least one step");
    std::vector<double> t(steps + 1);
    for (std::size_t n = 0; n <= steps; ++n) {
        t[n] = horizon * static_cast<double>(n) / static_cast<double>(steps);
    }
    t.back() = horizon;
    return t;
}

// ============================================================================
// Paths
// ============================================================================

/// Sampled observation process Z at t_0 = 0 < t_1 < ... < t_N = T.
class ObservationPath {
public:
    ObservationPath(std::vector<double> times, std::vector<double> z)
        : times_(std::move(times)), z_(std::move(z)) {
        validate_times(times_);
        require(z_.size() == times_.size(), ErrorCode::InvalidArgument,
                "observation path: times and values differ in length");
        for (double v : z_) require(std::isfinite(v), ErrorCode::NonFinite, "Z value not finite");
        for (std::size_t n = 1; n < times_.size(); ++n) {
            max_step_ = std::max(max_step_, times_[n] - times_[n - 1]);
        }
    }

    /// Number of increments N.
    std::size_t steps() const noexcept { return times_.size() - 1; }
    std::span<const double> times() const noexcept { return times_; }
    std::span<const double> z_values() const noexcept { return z_; }
    double time(std::size_t n) const { return times_[n]; }
    double z(std::size_t n) const { return z_[n]; }
    double horizon() const { return times_.back(); }

    /// Increment quantities for n = 1..N.
    double dz(std::size_t n) const { return z_[n] - z_[n - 1]; }
    double dt(std::size_t n) const { return times_[n] - times_[n - 1]; }
    double y(std::size_t n) const { return dz(n) / dt(n); }

    /// Largest step max_n dt_n.
    double max_step() const noexcept { return max_step_; }

    /// max_t |Z_t - Z_0| over the sampled instants.
    double excursion() const {
        double c = 0.0;
        for (double v : z_) c = std::max(c, std::abs(v - z_.front()));
        return c;
    }

    /// Index n with t_n <= t < t_{n+1} (clamped to [0, N]).
    std::size_t index_at(double t) const {
        if (t <= times_.front()) return 0;
        if (t >= times_.back()) return steps();
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        return static_cast<std::size_t>(it - times_.begin()) - 1;
    }

    bool operator==(const ObservationPath&) const = default;

private:
    std::vector<double> times_;
    std::vector<double> z_;
    double max_step_ = 0.0;
};

enum class SignalMode { Static, Drifting };

struct SignalPath {
    std::vector<double> times;
    std::vector<double> x_values;
    SignalMode mode = SignalMode::Static;

    bool operator==(const SignalPath&) const = default;
};

inline SignalPath static_signal(double x, std::vector<double> times) {
    validate_times(times);
    require(std::isfinite(x), ErrorCode::NonFinite, "state not finite");
    std::vector<double> xs(times.size(), x);
    return {std::move(times), std::move(xs), SignalMode::Static};
}

/// Euler-Maruyama for dX = a(X) dt + dB (dB omitted when process noise is off).
inline SignalPath simulate_signal_path(const std::function<double(double)>& drift, double x0,
                                       std::vector<double> times, bool process_noise,
                                       std::uint64_t seed) {
    validate_times(times);
    require(std::isfinite(x0), ErrorCode::NonFinite, "initial state not finite");
    NormalSource normal(named_stream(seed, "signal"));
    std::vector<double> x(times.size());
    x[0] = x0;
    bool moves = process_noise;
    for (std::size_t n = 1; n < times.size(); ++n) {
        const double dt = times[n] - times[n - 1];
        const double a = drift(x[n - 1]);
        double next = x[n - 1] + a * dt;
        if (process_noise) next += std::sqrt(dt) * normal();
        if (!std::isfinite(next) || !std::isfinite(a)) {
            fail(ErrorCode::Blowup, "signal path left the finite range at t = " +
                                        std::to_string(times[n]));
        }
        moves = moves || next != x[n - 1];
        x[n] = next;
    }
    return {std::move(times), std::move(x), moves ? SignalMode::Drifting : SignalMode::Static};
}

/// Where h is evaluated on each step of the observation SDE.
enum class HEvaluation { LeftEndpoint, Midpoint };

/// dZ_n = h(X) dt_n + dW_n with dW_n ~ N(0, dt_n) and Z_0 = 0.
inline ObservationPath simulate_observation_path(const SignalPath& signal,
                                                 const ObservationModel& model,
                                                 std::uint64_t seed,
                                                 HEvaluation where = HEvaluation::LeftEndpoint) {
    validate_times(signal.times);
    require(signal.x_values.size() == signal.times.size(), ErrorCode::InvalidArgument,
            "signal path: times and values differ in length");
    NormalSource normal(named_stream(seed, "observation"));
    const auto& t = signal.times;
    std::vector<double> z(t.size(), 0.0);
    for (std::size_t n = 1; n < t.size(); ++n) {
        const double dt = t[n] - t[n - 1];
        const double x = where == HEvaluation::LeftEndpoint
                             ? signal.x_values[n - 1]
                             : 0.5 * (signal.x_values[n - 1] + signal.x_values[n]);
        z[n] = z[n - 1] + model.h(x) * dt + std::sqrt(dt) * normal();
    }
    return ObservationPath(t, std::move(z));
}

/// Halve every step by inserting Brownian-bridge midpoints. Exact in law
/// for Z of a static signal (Brownian motion with constant drift).
inline ObservationPath refine_path_bridge(const ObservationPath& path, std::uint64_t seed,
                                          std::uint64_t level = 0) {
    NormalSource normal(CounterRng(seed, stream_id("bridge")).substream(level));
    std::vector<double> t, z;
    t.reserve(2 * path.steps() + 1);
    z.reserve(2 * path.steps() + 1);
    t.push_back(path.time(0));
    z.push_back(path.z(0));
    for (std::size_t n = 1; n <= path.steps(); ++n) {
        const double dt = path.dt(n);
        t.push_back(0.5 * (path.time(n - 1) + path.time(n)));
        z.push_back(0.5 * (path.z(n - 1) + path.z(n)) + 0.5 * std::sqrt(dt) * normal());
        t.push_back(path.time(n));
        z.push_back(path.z(n));
    }
    return ObservationPath(std::move(t), std::move(z));
}

// ============================================================================
// Priors
// ============================================================================

/// Initial distribution: a Gaussian mixture (one component for a Gaussian)
/// or an arbitrary grid density.
class Prior {
public:
    static Prior gaussian(double mean, double sd) {
        require(sd > 0.0, ErrorCode::InvalidArgument, "prior sd must be positive");
        return Prior({MixtureComponent{1.0, mean, sd}});
    }

    static Prior mixture(std::vector<MixtureComponent> components) {
        require(!components.empty(), ErrorCode::InvalidArgument, "mixture has no components");
        double total = 0.0;
        for (const auto& c : components) {
            require(c.weight > 0.0 && c.sd > 0.0, ErrorCode::InvalidArgument,
                    "mixture weights and sds must be positive");
            total += c.weight;
        }
        for (auto& c : components) c.weight /= total;
        return Prior(std::move(components));
    }

    static Prior from_grid(GridDensity d) {
        Prior p;
        p.grid_ = normalize(d);
        return p;
    }

    bool is_parametric() const { return !grid_.has_value(); }
    bool is_gaussian() const { return is_parametric() && components_.size() == 1; }
    std::span<const MixtureComponent> components() const { return components_; }

    double mean() const {
        if (grid_) return fpf::mean(*grid_);
        double m = 0.0;
        for (const auto& c : components_) m += c.weight * c.mean;
        return m;
    }

    double sd() const {
        if (grid_) return std::sqrt(fpf::variance(*grid_));
        const double m = mean();
        double v = 0.0;
        for (const auto& c : components_) {
            v += c.weight * (c.sd * c.sd + (c.mean - m) * (c.mean - m));
        }
        return std::sqrt(v);
    }

    /// Default truncation box [mean - k sd, mean + k sd], widened to cover
    /// every mixture component's own k-sd box.
    std::pair<double, double> default_box(double k = 8.0) const {
        if (grid_) return {grid_->grid().lo(), grid_->grid().hi()};
        double lo = mean() - k * sd(), hi = mean() + k * sd();
        for (const auto& c : components_) {
            lo = std::min(lo, c.mean - k * c.sd);
            hi = std::max(hi, c.mean + k * c.sd);
        }
        return {lo, hi};
    }

    GridDensity density_on(const Grid& grid) const {
        if (grid_) {
            require(grid_->grid().same_as(grid), ErrorCode::InvalidArgument,
                    "grid prior requested on a different grid");
            return *grid_;
        }
        return mixture_density(grid, components_);
    }

    /// Exact Poincare constant for a Gaussian prior (1/sd^2); otherwise the
    /// numerical spectral-gap estimate on `grid`.
    double poincare_constant(const Grid& grid) const {
        if (is_gaussian()) return 1.0 / (components_[0].sd * components_[0].sd);
        return spectral_gap_estimate(density_on(grid));
    }

    const std::optional<GridDensity>& grid_density() const { return grid_; }

private:
    Prior() = default;
    explicit Prior(std::vector<MixtureComponent> c) : components_(std::move(c)) {}

    std::vector<MixtureComponent> components_;
    std::optional<GridDensity> grid_;
};

/// Inverse-CDF lookup on a grid density (linear interpolation of the CDF).
inline double grid_quantile(const GridDensity& d, std::span<const double> cdf_values, double u) {
    const auto& g = d.grid();
    auto it = std::lower_bound(cdf_values.begin(), cdf_values.end(), u);
    if (it == cdf_values.begin()) return g.lo();
    if (it == cdf_values.end()) return g.hi();
    const std::size_t i = static_cast<std::size_t>(it - cdf_values.begin());
    const double c0 = cdf_values[i - 1], c1 = cdf_values[i];
    const double t = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
    return g[i - 1] + t * g.spacing(i - 1);
}

/// n i.i.d. draws from the prior.
inline ParticleEnsemble sample_prior(const Prior& prior, std::size_t n, std::uint64_t seed) {
    require(n >= 2, ErrorCode::TooFewParticles, "need at least 2 particles");
    CounterRng rng = named_stream(seed, "prior");
    std::vector<double> x(n);
    if (prior.is_parametric()) {
        const auto comps = prior.components();
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t k = 0;
            if (comps.size() > 1) {
                double u = unif(rng), acc = 0.0;
                for (k = 0; k + 1 < comps.size(); ++k) {
                    acc += comps[k].weight;
                    if (u < acc) break;
                }
            }
            x[i] = comps[k].mean + comps[k].sd * normal(rng);
        }
    } else {
        const auto& d = *prior.grid_density();
        const auto c = cdf(d);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) x[i] = grid_quantile(d, c, unif(rng));
    }
    return ParticleEnsemble(std::move(x));
}

}  // namespace fpf
