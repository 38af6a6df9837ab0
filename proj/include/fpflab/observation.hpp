#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <string>
#include <utility>

#include "fpflab/density.hpp"
#include "fpflab/error.hpp"

namespace fpf {

/// Scalar observation function h with its first two derivatives.
///
/// `sup_h`, `sup_grad`, `sup_hess` are declared sup-norms over the real line
/// (infinite when unbounded). A model with all three finite satisfies the
/// bounded-C2 requirement used by the theory; `linear` does not and is kept
/// for Kalman cross-checks.
struct ObservationModel {
    using Fn = std::function<double(double)>;

    std::string name;
    Fn h;
    Fn grad_h;
    Fn hess_h;
    double sup_h = std::numeric_limits<double>::infinity();
    double sup_grad = std::numeric_limits<double>::infinity();
    double sup_hess = std::numeric_limits<double>::infinity();

    double operator()(double x) const { return h(x); }

    bool bounded() const {
        return std::isfinite(sup_h) && std::isfinite(sup_grad) && std::isfinite(sup_hess);
    }

    bool is_constant() const { return sup_grad == 0.0; }

    /// Sup of |h| over the grid nodes (the effective bound on a truncated box).
    double grid_sup(const Grid& g) const {
        double s = 0.0;
        for (double x : g.nodes()) s = std::max(s, std::abs(h(x)));
        return s;
    }

    /// Declared bounds are respected at every node and every value is finite.
    bool respects_bounds(const Grid& g, double slack = 1e-12) const {
        for (double x : g.nodes()) {
            const double a = h(x), b = grad_h(x), c = hess_h(x);
            if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c)) return false;
            if (std::abs(a) > sup_h + slack || std::abs(b) > sup_grad + slack ||
                std::abs(c) > sup_hess + slack) {
                return false;
            }
        }
        return true;
    }
};

namespace observations {

inline ObservationModel constant(double c) {
    return {"constant", [c](double) { return c; }, [](double) { return 0.0; },
            [](double) { return 0.0; }, std::abs(c), 0.0, 0.0};
}

inline ObservationModel linear(double slope = 1.0) {
    const double inf = std::numeric_limits<double>::infinity();
    return {"linear", [slope](double x) { return slope * x; }, [slope](double) { return slope; },
            [](double) { return 0.0; }, inf, std::abs(slope), 0.0};
}

inline ObservationModel tanh() {
    // d2/dx2 tanh = -2 tanh sech^2, maximal at tanh = 1/sqrt(3)
    return {"tanh", [](double x) { return std::tanh(x); },
            [](double x) {
                const double t = std::tanh(x);
                return 1.0 - t * t;
            },
            [](double x) {
                const double t = std::tanh(x);
                return -2.0 * t * (1.0 - t * t);
            },
            1.0, 1.0, 4.0 / (3.0 * std::sqrt(3.0))};
}

inline ObservationModel atan() {
    return {"atan", [](double x) { return std::atan(x); },
            [](double x) { return 1.0 / (1.0 + x * x); },
            [](double x) {
                const double q = 1.0 + x * x;
                return -2.0 * x / (q * q);
            },
            std::numbers::pi / 2.0, 1.0, 3.0 * std::sqrt(3.0) / 8.0};
}

inline ObservationModel sine() {
    return {"sin", [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); },
            [](double x) { return -std::sin(x); }, 1.0, 1.0, 1.0};
}

/// Sum of two models; the equation for the gain is linear in h.
inline ObservationModel sum(const ObservationModel& a, const ObservationModel& b) {
    return {a.name + "+" + b.name, [a, b](double x) { return a.h(x) + b.h(x); },
            [a, b](double x) { return a.grad_h(x) + b.grad_h(x); },
            [a, b](double x) { return a.hess_h(x) + b.hess_h(x); }, a.sup_h + b.sup_h,
            a.sup_grad + b.sup_grad, a.sup_hess + b.sup_hess};
}

namespace detail {
struct Registry {
    std::mutex mutex;
    std::map<std::string, std::function<ObservationModel()>, std::less<>> factories{
        {"linear", [] { return linear(); }},
        {"tanh", [] { return tanh(); }},
        {"atan", [] { return atan(); }},
        {"sin", [] { return sine(); }},
    };
};
inline Registry& registry() {
    static Registry r;
    return r;
}
}  // namespace detail

/// Make a custom observation function available by name (for scenario files).
inline void register_model(const std::string& name, std::function<ObservationModel()> factory) {
    auto& r = detail::registry();
    std::lock_guard lock(r.mutex);
    r.factories[name] = std::move(factory);
}

inline bool is_known(std::string_view name) {
    auto& r = detail::registry();
    std::lock_guard lock(r.mutex);
    return r.factories.find(name) != r.factories.end();
}

inline ObservationModel by_name(std::string_view name) {
    auto& r = detail::registry();
    std::lock_guard lock(r.mutex);
    auto it = r.factories.find(name);
    if (it == r.factories.end()) {
        throw ConfigError("observation", "unknown observation function '" + std::string(name) + "'");
    }
    return it->second();
}

}  // namespace observations
}  // namespace fpf
