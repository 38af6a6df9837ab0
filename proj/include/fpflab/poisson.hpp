#pragma once

/// Gain functions from the weighted Poisson equation
///
///   d/dx (rho dphi/dx) = -(g - g_hat) rho,    int phi rho = 0,    K = dphi/dx,
///
/// solved three ways: direct integration in 1D, a weak-form finite-difference
/// (hat-function) discretization, and a Galerkin projection whose
/// expectations may be particle averages.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "fpflab/density.hpp"
#include "fpflab/error.hpp"
#include "fpflab/observation.hpp"

namespace fpf {

enum class GainMethod { Exact1d, FiniteDifference, Galerkin };

constexpr std::string_view to_string(GainMethod m) {
    switch (m) {
        case GainMethod::Exact1d: return "exact1d";
        case GainMethod::FiniteDifference: return "fd";
        case GainMethod::Galerkin: return "galerkin";
    }
    return "unknown";
}

/// Densities below this (linear scale) are treated as numerically zero.
inline constexpr double kTailThreshold = 1e-300;

struct BasisFunction {
    std::string name;
    std::function<double(double)> f;
    std::function<double(double)> df;
    std::function<double(double)> d2f;
};

namespace detail {
inline double ipow(double x, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= x;
    return r;
}
}  // namespace detail

/// psi_k(x) = ((x - center)/scale)^k for k = 1..degree.
inline std::vector<BasisFunction> monomial_basis(int degree, double center = 0.0,
                                                 double scale = 1.0) {
    require(scale > 0.0, ErrorCode::InvalidArgument, "basis scale must be positive");
    std::vector<BasisFunction> basis;
    const double inv = 1.0 / scale;
    for (int k = 1; k <= degree; ++k) {
        const double kd = k;
        basis.push_back(
            {"x^" + std::to_string(k),
             [=](double x) { return detail::ipow((x - center) * inv, k); },
             [=](double x) { return kd * inv * detail::ipow((x - center) * inv, k - 1); },
             [=](double x) {
                 return k < 2 ? 0.0
                              : kd * (kd - 1.0) * inv * inv * detail::ipow((x - center) * inv, k - 2);
             }});
    }
    return basis;
}

inline BasisFunction constant_basis_function(double c = 1.0) {
    return {"const", [c](double) { return c; }, [](double) { return 0.0; },
            [](double) { return 0.0; }};
}

// ============================================================================
// GainField
// ============================================================================

/// Solution pair (phi, K = phi') of the Poisson equation, either sampled on a
/// grid or held as Galerkin coefficients (or both).
class GainField {
public:
    GainMethod method = GainMethod::Exact1d;

    // Grid-sampled form.
    std::optional<Grid> grid;
    std::vector<double> phi;
    std::vector<double> gain;
    /// Node range where the density is above the tail threshold; K is held
    /// constant outside it.
    std::size_t reliable_first = 0;
    std::size_t reliable_last = 0;
    /// Flux rho K at the two ends of the reliable range.
    double boundary_flux = 0.0;

    // Galerkin form.
    std::vector<BasisFunction> basis;
    std::vector<double> coefficients;
    std::vector<double> basis_means;

    bool has_grid() const { return grid.has_value() && !gain.empty(); }
    bool is_galerkin() const { return !coefficients.empty(); }

    double gain_at(double x) const {
        if (is_galerkin()) {
            double k = 0.0;
            for (std::size_t j = 0; j < basis.size(); ++j) k += coefficients[j] * basis[j].df(x);
            return k;
        }
        return interpolate(gain, x);
    }

    /// dK/dx at x; zero where K is held constant.
    double gain_slope_at(double x) const {
        if (is_galerkin()) {
            double s = 0.0;
            for (std::size_t j = 0; j < basis.size(); ++j) s += coefficients[j] * basis[j].d2f(x);
            return s;
        }
        const auto& g = *grid;
        if (x < g[reliable_first] || x > g[reliable_last]) return 0.0;
        const std::size_t i = g.cell_of(x);
        const double t = (x - g[i]) / g.spacing(i);
        return (1.0 - t) * node_slope(i) + t * node_slope(i + 1);
    }

    double phi_at(double x) const {
        if (is_galerkin()) {
            double p = 0.0;
            for (std::size_t j = 0; j < basis.size(); ++j) {
                p += coefficients[j] * (basis[j].f(x) - basis_means[j]);
            }
            return p;
        }
        const double lo = (*grid)[reliable_first], hi = (*grid)[reliable_last];
        if (x < lo) return phi[reliable_first] + gain[reliable_first] * (x - lo);
        if (x > hi) return phi[reliable_last] + gain[reliable_last] * (x - hi);
        return interpolate(phi, x);
    }

    bool in_reliable_domain(double x) const {
        if (is_galerkin() && !has_grid()) return true;
        return x >= (*grid)[reliable_first] && x <= (*grid)[reliable_last];
    }

    /// Gain sampled on the nodes of g (direct copy when the grids match).
    std::vector<double> gain_on(const Grid& g) const {
        if (has_grid() && grid->same_as(g)) return gain;
        return numeric::sample(g, [this](double x) { return gain_at(x); });
    }

    std::vector<double> phi_on(const Grid& g) const {
        if (has_grid() && grid->same_as(g) && !phi.empty()) return phi;
        return numeric::sample(g, [this](double x) { return phi_at(x); });
    }

    /// dK/dx on the nodes of g: central differences of the stored gain for
    /// grid forms, analytic basis derivatives for Galerkin.
    std::vector<double> gain_slope_on(const Grid& g) const {
        if (!is_galerkin() && grid->same_as(g)) {
            std::vector<double> s(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) s[i] = node_slope(i);
            return s;
        }
        return numeric::sample(g, [this](double x) { return gain_slope_at(x); });
    }

private:
    double interpolate(const std::vector<double>& v, double x) const {
        const auto& g = *grid;
        const double lo = g[reliable_first], hi = g[reliable_last];
        if (x <= lo) return v[reliable_first];
        if (x >= hi) return v[reliable_last];
        const std::size_t i = g.cell_of(x);
        const double t = (x - g[i]) / g.spacing(i);
        return (1.0 - t) * v[i] + t * v[i + 1];
    }

    /// Central-difference slope of the stored gain at node i (one-sided at
    /// the ends of the reliable range, zero outside it).
    double node_slope(std::size_t i) const {
        if (i < reliable_first || i > reliable_last) return 0.0;
        const auto& g = *grid;
        if (i == reliable_first) return (gain[i + 1] - gain[i]) / g.spacing(i);
        if (i == reliable_last) return (gain[i] - gain[i - 1]) / g.spacing(i - 1);
        const double hm = g.spacing(i - 1), hp = g.spacing(i);
        return (hm * hm * gain[i + 1] - hp * hp * gain[i - 1] + (hp * hp - hm * hm) * gain[i]) /
               (hm * hp * (hm + hp));
    }
};

namespace detail {

/// First/last nodes above the tail threshold; throws if the density
/// vanishes on an interior stretch.
inline std::pair<std::size_t, std::size_t> active_range(const GridDensity& rho) {
    const double cut = std::log(kTailThreshold);
    std::size_t first = rho.size(), last = 0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        if (rho.log_value(i) >= cut) {
            first = std::min(first, i);
            last = i;
        }
    }
    require(first < last, ErrorCode::DegenerateDensity, "density has no resolvable support");
    for (std::size_t i = first; i <= last; ++i) {
        if (rho.log_value(i) < cut) {
            fail(ErrorCode::DegenerateDensity,
                 "density underflows inside its support near x = " +
                     std::to_string(rho.grid()[i]));
        }
    }
    return {first, last};
}

/// Hermite (end-corrected trapezoid) cell integrals of f over [first, last].
inline std::vector<double> hermite_cells(const Grid& g, std::span<const double> f,
                                         std::span<const double> df, std::size_t first,
                                         std::size_t last) {
    std::vector<double> cells(last - first);
    for (std::size_t i = first; i < last; ++i) {
        const double h = g.spacing(i);
        cells[i - first] = 0.5 * h * (f[i] + f[i + 1]) + h * h / 12.0 * (df[i] - df[i + 1]);
    }
    return cells;
}

/// Hold K constant outside the reliable range and build mean-zero phi.
inline void finish_grid_field(GainField& field, const GridDensity& rho) {
    const auto& g = rho.grid();
    const std::size_t n = g.size();
    auto& K = field.gain;
    for (std::size_t i = 0; i < field.reliable_first; ++i) K[i] = K[field.reliable_first];
    for (std::size_t i = field.reliable_last + 1; i < n; ++i) K[i] = K[field.reliable_last];
    field.phi = numeric::cumulative_trapezoid(g, K);
    const double m = expectation(std::span<const double>(field.phi), rho);
    for (double& p : field.phi) p -= m;
}

}  // namespace detail

/// Wrap externally supplied nodal gain values (e.g. an analytic gain) as a
/// grid GainField; phi is the mean-zero antiderivative.
inline GainField gain_field_from_samples(const GridDensity& rho, std::vector<double> gain,
                                         GainMethod method = GainMethod::Exact1d) {
    require(gain.size() == rho.size(), ErrorCode::InvalidArgument, "gain/grid size mismatch");
    GainField field;
    field.method = method;
    field.grid = rho.grid();
    field.gain = std::move(gain);
    field.reliable_first = 0;
    field.reliable_last = rho.size() - 1;
    detail::finish_grid_field(field, rho);
    return field;
}

// ============================================================================
// Exact 1D solver
// ============================================================================

/// rho(x) K(x) = -int_{-inf}^x (g - g_hat) rho dy, integrated cell by cell
/// with the end-corrected trapezoid rule. The flux is accumulated from the
/// left below the median and from the right above it, which keeps K
/// relative-accurate in both tails; g_hat uses the same quadrature so the two
/// directions agree and the flux vanishes at both ends.
inline GainField solve_gain_exact_1d(const GridDensity& rho, std::span<const double> data) {
    const auto& g = rho.grid();
    require(data.size() == g.size(), ErrorCode::InvalidArgument, "data/grid size mismatch");
    const auto [first, last] = detail::active_range(rho);
    const std::size_t n = g.size();
    const auto r = rho.values();

    std::vector<double> gr(n, 0.0);
    for (std::size_t i = first; i <= last; ++i) gr[i] = data[i] * r[i];
    const auto d_gr = numeric::derivative(g, gr);
    const auto d_r = numeric::derivative(g, r);
    const auto cells_gr = detail::hermite_cells(g, gr, d_gr, first, last);
    const auto cells_r = detail::hermite_cells(g, r, d_r, first, last);
    double q_gr = 0.0, q_r = 0.0;
    for (double c : cells_gr) q_gr += c;
    for (double c : cells_r) q_r += c;
    const double g_hat = q_gr / q_r;

    const std::size_t m = last - first;
    std::vector<double> cells(m);
    for (std::size_t k = 0; k < m; ++k) cells[k] = cells_gr[k] - g_hat * cells_r[k];

    // cumulative from the left and from the right
    std::vector<double> left(m + 1, 0.0), right(m + 1, 0.0);
    for (std::size_t k = 0; k < m; ++k) left[k + 1] = left[k] + cells[k];
    for (std::size_t k = m; k-- > 0;) right[k] = right[k + 1] + cells[k];

    std::vector<double> mass(m + 1, 0.0);
    for (std::size_t k = 0; k < m; ++k) mass[k + 1] = mass[k] + cells_r[k];

    GainField field;
    field.method = GainMethod::Exact1d;
    field.grid = g;
    field.gain.assign(n, 0.0);
    field.reliable_first = first;
    field.reliable_last = last;
    for (std::size_t k = 0; k <= m; ++k) {
        const double flux = mass[k] <= 0.5 * q_r ? -left[k] : right[k];
        field.gain[first + k] = flux / r[first + k];
    }
    field.boundary_flux = std::max(std::abs(left[m]), std::abs(right[0]));
    detail::finish_grid_field(field, rho);
    return field;
}

inline GainField solve_gain_exact_1d(const GridDensity& rho, const ObservationModel& model) {
    const auto data = numeric::sample(rho.grid(), model.h);
    return solve_gain_exact_1d(rho, std::span<const double>(data));
}

// ============================================================================
// Weak-form finite differences
// ============================================================================

/// Hat-function Galerkin discretization of the weak form on the grid:
///   sum_cells (rho_mid / h) (phi_{i+1} - phi_i)(psi_{i+1} - psi_i)
///       = sum_j w_j (g_j - g_hat) rho_j psi_j,
/// with rho_mid the geometric mean of the end values (exact for
/// log-linear rho). The constant null space is removed with a bordered
/// Lagrange-multiplier row for sum_j w_j rho_j phi_j = 0.
inline GainField solve_gain_weak_fd(const GridDensity& rho, std::span<const double> data) {
    const auto& g = rho.grid();
    require(g.size() >= 128, ErrorCode::InvalidArgument, "fd gain solver needs >= 128 nodes");
    require(data.size() == g.size(), ErrorCode::InvalidArgument, "data/grid size mismatch");
    const auto [first, last] = detail::active_range(rho);
    const std::size_t m = last - first + 1;
    const auto w = g.weights();

    // shift by the max log-value so the largest density is O(1)
    double lmax = kNegInf;
    for (std::size_t i = first; i <= last; ++i) lmax = std::max(lmax, rho.log_value(i));
    std::vector<double> r(m), stiff(m - 1);
    for (std::size_t k = 0; k < m; ++k) r[k] = std::exp(rho.log_value(first + k) - lmax);
    for (std::size_t k = 0; k + 1 < m; ++k) {
        const std::size_t i = first + k;
        stiff[k] = std::exp(0.5 * (rho.log_value(i) + rho.log_value(i + 1)) - lmax) / g.spacing(i);
    }
    double s_gr = 0.0, s_r = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        s_gr += w[first + k] * data[first + k] * r[k];
        s_r += w[first + k] * r[k];
    }
    const double g_hat = s_gr / s_r;

    std::vector<double> diag(m, 0.0);
    for (std::size_t k = 0; k + 1 < m; ++k) {
        diag[k] += stiff[k];
        diag[k + 1] += stiff[k];
    }
    // symmetric Jacobi scaling
    std::vector<double> scale(m);
    for (std::size_t k = 0; k < m; ++k) {
        require(diag[k] > 0.0, ErrorCode::SolverFailure, "zero stiffness row");
        scale[k] = 1.0 / std::sqrt(diag[k]);
    }
    double border_norm = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        border_norm = std::max(border_norm, w[first + k] * r[k] * scale[k]);
    }

    using Triplet = Eigen::Triplet<double>;
    std::vector<Triplet> triplets;
    triplets.reserve(5 * m);
    const auto M = static_cast<Eigen::Index>(m);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(M + 1);
    for (std::size_t k = 0; k < m; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        triplets.emplace_back(kk, kk, 1.0);
        if (k + 1 < m) {
            const double off = -stiff[k] * scale[k] * scale[k + 1];
            triplets.emplace_back(kk, kk + 1, off);
            triplets.emplace_back(kk + 1, kk, off);
        }
        const double border = w[first + k] * r[k] * scale[k] / border_norm;
        triplets.emplace_back(kk, M, border);
        triplets.emplace_back(M, kk, border);
        rhs[kk] = w[first + k] * (data[first + k] - g_hat) * r[k] * scale[k];
    }
    Eigen::SparseMatrix<double> A(M + 1, M + 1);
    A.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    require(lu.info() == Eigen::Success, ErrorCode::SolverFailure,
            "bordered system is singular beyond the constant null space");
    const Eigen::VectorXd sol = lu.solve(rhs);
    require(lu.info() == Eigen::Success && sol.allFinite(), ErrorCode::SolverFailure,
            "bordered solve failed");

    const std::size_t n = g.size();
    std::vector<double> phi_active(m);
    for (std::size_t k = 0; k < m; ++k) phi_active[k] = sol[static_cast<Eigen::Index>(k)] * scale[k];

    GainField field;
    field.method = GainMethod::FiniteDifference;
    field.grid = g;
    field.reliable_first = first;
    field.reliable_last = last;
    field.gain.assign(n, 0.0);
    std::vector<double> cellK(m - 1);
    for (std::size_t k = 0; k + 1 < m; ++k) {
        cellK[k] = (phi_active[k + 1] - phi_active[k]) / g.spacing(first + k);
    }
    for (std::size_t k = 0; k < m; ++k) {
        double v;
        if (k == 0) {
            v = cellK[0];
        } else if (k + 1 == m) {
            v = cellK[m - 2];
        } else {
            // linear interpolation of cell-centre values to the node
            const double hl = g.spacing(first + k - 1), hr = g.spacing(first + k);
            v = (hr * cellK[k - 1] + hl * cellK[k]) / (hl + hr);
        }
        field.gain[first + k] = v;
    }
    field.boundary_flux = 0.0;
    // phi from the linear system directly on the active range
    field.phi.assign(n, 0.0);
    for (std::size_t k = 0; k < m; ++k) field.phi[first + k] = phi_active[k];
    for (std::size_t i = 0; i < first; ++i) {
        field.phi[i] = phi_active[0] + field.gain[first] * (g[i] - g[first]);
    }
    for (std::size_t i = last + 1; i < n; ++i) {
        field.phi[i] = phi_active[m - 1] + field.gain[last] * (g[i] - g[last]);
    }
    for (std::size_t i = 0; i < first; ++i) field.gain[i] = field.gain[first];
    for (std::size_t i = last + 1; i < n; ++i) field.gain[i] = field.gain[last];
    const double mean_phi = expectation(std::span<const double>(field.phi), rho);
    for (double& p : field.phi) p -= mean_phi;
    return field;
}

inline GainField solve_gain_weak_fd(const GridDensity& rho, const ObservationModel& model) {
    const auto data = numeric::sample(rho.grid(), model.h);
    return solve_gain_weak_fd(rho, std::span<const double>(data));
}

// ============================================================================
// Galerkin
// ============================================================================

namespace detail {

inline GainField galerkin_from_moments(std::vector<BasisFunction> basis,
                                       const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                       std::vector<double> means) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A, Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    if (!(lmax > 0.0) || lmin <= 1e-13 * lmax) {
        fail(ErrorCode::SingularGram, "Galerkin gradient Gram matrix is singular");
    }
    const Eigen::VectorXd c = A.ldlt().solve(b);
    require(c.allFinite(), ErrorCode::SingularGram, "Galerkin solve produced non-finite values");
    GainField field;
    field.method = GainMethod::Galerkin;
    field.basis = std::move(basis);
    field.coefficients.assign(c.data(), c.data() + c.size());
    field.basis_means = std::move(means);
    return field;
}

}  // namespace detail

/// Galerkin gain from particle averages: A_jk = <psi_j' psi_k'>,
/// b_j = <(g - g_hat) psi_j>, K = sum_k c_k psi_k'.
inline GainField solve_gain_galerkin(const ParticleEnsemble& e,
                                     const std::function<double(double)>& g,
                                     std::vector<BasisFunction> basis) {
    require(!basis.empty(), ErrorCode::EmptyBasis, "Galerkin basis is empty");
    const std::size_t m = basis.size();
    const auto M = static_cast<Eigen::Index>(m);
    const double inv_n = 1.0 / static_cast<double>(e.size());
    const double g_hat = e.average(g);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(M, M);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(M);
    std::vector<double> means(m, 0.0);
    std::vector<double> psi(m), dpsi(m);
    for (double x : e.positions()) {
        const double gc = g(x) - g_hat;
        for (std::size_t j = 0; j < m; ++j) {
            psi[j] = basis[j].f(x);
            dpsi[j] = basis[j].df(x);
        }
        for (std::size_t j = 0; j < m; ++j) {
            means[j] += psi[j];
            b[static_cast<Eigen::Index>(j)] += gc * psi[j];
            for (std::size_t k = 0; k < m; ++k) {
                A(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) += dpsi[j] * dpsi[k];
            }
        }
    }
    A *= inv_n;
    b *= inv_n;
    for (double& v : means) v *= inv_n;
    return detail::galerkin_from_moments(std::move(basis), A, b, std::move(means));
}

inline GainField solve_gain_galerkin(const ParticleEnsemble& e, const ObservationModel& model,
                                     std::vector<BasisFunction> basis) {
    return solve_gain_galerkin(e, model.h, std::move(basis));
}

/// Galerkin gain with expectations by grid quadrature; also sampled on the grid.
inline GainField solve_gain_galerkin(const GridDensity& rho, std::span<const double> data,
                                     std::vector<BasisFunction> basis) {
    require(!basis.empty(), ErrorCode::EmptyBasis, "Galerkin basis is empty");
    const auto& grid = rho.grid();
    const std::size_t m = basis.size();
    const auto M = static_cast<Eigen::Index>(m);
    const double g_hat = expectation(data, rho);
    std::vector<std::vector<double>> psi(m), dpsi(m);
    std::vector<double> means(m);
    for (std::size_t j = 0; j < m; ++j) {
        psi[j] = numeric::sample(grid, basis[j].f);
        dpsi[j] = numeric::sample(grid, basis[j].df);
        means[j] = expectation(std::span<const double>(psi[j]), rho);
    }
    Eigen::MatrixXd A(M, M);
    Eigen::VectorXd b(M);
    std::vector<double> tmp(grid.size());
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t i = 0; i < grid.size(); ++i) tmp[i] = (data[i] - g_hat) * psi[j][i];
        b[static_cast<Eigen::Index>(j)] = expectation(std::span<const double>(tmp), rho);
        for (std::size_t k = 0; k < m; ++k) {
            for (std::size_t i = 0; i < grid.size(); ++i) tmp[i] = dpsi[j][i] * dpsi[k][i];
            A(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
                expectation(std::span<const double>(tmp), rho);
        }
    }
    auto field = detail::galerkin_from_moments(std::move(basis), A, b, std::move(means));
    field.grid = grid;
    field.reliable_first = 0;
    field.reliable_last = grid.size() - 1;
    field.gain = numeric::sample(grid, [&](double x) { return field.gain_at(x); });
    field.phi = numeric::sample(grid, [&](double x) { return field.phi_at(x); });
    return field;
}

inline GainField solve_gain_galerkin(const GridDensity& rho, const ObservationModel& model,
                                     std::vector<BasisFunction> basis) {
    const auto data = numeric::sample(rho.grid(), model.h);
    return solve_gain_galerkin(rho, std::span<const double>(data), std::move(basis));
}

/// Default Galerkin basis: monomials up to `degree`, centred and scaled by
/// the ensemble mean and standard deviation.
inline std::vector<BasisFunction> default_basis(const ParticleEnsemble& e, int degree = 3) {
    const double sd = std::sqrt(e.variance());
    return monomial_basis(degree, e.mean(), sd > 0.0 ? sd : 1.0);
}

inline std::vector<BasisFunction> default_basis(const GridDensity& rho, int degree = 3) {
    const double sd = std::sqrt(variance(rho));
    return monomial_basis(degree, mean(rho), sd > 0.0 ? sd : 1.0);
}

// ============================================================================
// Diagnostics
// ============================================================================

/// int K psi' rho - int (g - g_hat) psi rho; zero for an exact weak solution.
template <class Psi, class DPsi>
double weak_form_residual(const GainField& field, const GridDensity& rho,
                          std::span<const double> data, Psi&& psi, DPsi&& dpsi) {
    const auto& g = rho.grid();
    const auto K = field.gain_on(g);
    const double g_hat = expectation(data, rho);
    std::vector<double> lhs(g.size()), rhs(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        lhs[i] = K[i] * dpsi(g[i]);
        rhs[i] = (data[i] - g_hat) * psi(g[i]);
    }
    return expectation(std::span<const double>(lhs), rho) -
           expectation(std::span<const double>(rhs), rho);
}

/// Particle-average version of the weak-form residual.
template <class Psi, class DPsi>
double weak_form_residual(const GainField& field, const ParticleEnsemble& e,
                          const std::function<double(double)>& g, Psi&& psi, DPsi&& dpsi) {
    const double g_hat = e.average(g);
    return e.average([&](double x) {
        return field.gain_at(x) * dpsi(x) - (g(x) - g_hat) * psi(x);
    });
}

/// Both a-priori bounds with their two sides.
struct PoissonBoundReport {
    double energy_lhs = 0.0;      ///< int |K|^2 rho
    double energy_rhs = 0.0;      ///< (1/lambda) int |g - g_hat|^2 rho
    double regularity_lhs = 0.0;  ///< int |phi''|^2 rho
    double regularity_rhs = 0.0;  ///< lambda^-2 (lambda + sup|G''|) int |g'|^2 rho
    double hess_potential_sup = 0.0;
    bool energy_holds = false;
    bool regularity_holds = false;

    bool passed() const { return energy_holds && regularity_holds; }
};

/// Checks int|K|^2 rho <= (1/lambda) int|g-g_hat|^2 rho and
/// int|phi''|^2 rho <= lambda^-2 (lambda + ||G''||_inf) int|g'|^2 rho,
/// G = -ln rho. `rel_tol` admits equality up to quadrature error.
inline PoissonBoundReport verify_poisson_bounds(const GainField& field, const GridDensity& rho,
                                                std::span<const double> data,
                                                std::span<const double> data_grad, double lambda,
                                                double rel_tol = 1e-6) {
    require(lambda > 0.0 && std::isfinite(lambda), ErrorCode::BadConstant,
            "Poincare constant must be positive");
    const auto& g = rho.grid();
    const auto [first, last] = detail::active_range(rho);
    const auto K = field.gain_on(g);
    const auto phi = field.phi_on(g);
    const auto d2phi = numeric::second_derivative(g, phi);
    const double g_hat = expectation(data, rho);

    std::vector<double> k2(g.size()), c2(g.size()), h2(g.size()), dg2(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        k2[i] = K[i] * K[i];
        c2[i] = (data[i] - g_hat) * (data[i] - g_hat);
        h2[i] = d2phi[i] * d2phi[i];
        dg2[i] = data_grad[i] * data_grad[i];
    }
    std::vector<double> potential(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        potential[i] = i >= first && i <= last ? -rho.log_value(i) : 0.0;
    }
    const auto d2G = numeric::second_derivative(g, potential);
    double sup = 0.0;
    for (std::size_t i = first + 1; i < last; ++i) sup = std::max(sup, std::abs(d2G[i]));

    PoissonBoundReport rep;
    rep.energy_lhs = expectation(std::span<const double>(k2), rho);
    rep.energy_rhs = expectation(std::span<const double>(c2), rho) / lambda;
    rep.regularity_lhs = expectation(std::span<const double>(h2), rho);
    rep.hess_potential_sup = sup;
    rep.regularity_rhs =
        (lambda + sup) / (lambda * lambda) * expectation(std::span<const double>(dg2), rho);
    rep.energy_holds = rep.energy_lhs <= rep.energy_rhs * (1.0 + rel_tol) + 1e-14;
    rep.regularity_holds = rep.regularity_lhs <= rep.regularity_rhs * (1.0 + rel_tol) + 1e-14;
    return rep;
}

inline PoissonBoundReport verify_poisson_bounds(const GainField& field, const GridDensity& rho,
                                                const ObservationModel& model, double lambda,
                                                double rel_tol = 1e-6) {
    const auto data = numeric::sample(rho.grid(), model.h);
    const auto grad = numeric::sample(rho.grid(), model.grad_h);
    return verify_poisson_bounds(field, rho, data, grad, lambda, rel_tol);
}

/// rho-weighted L2 distance between two gains sampled on rho's grid.
inline double gain_l2_distance(const GainField& a, const GainField& b, const GridDensity& rho) {
    const auto ka = a.gain_on(rho.grid());
    const auto kb = b.gain_on(rho.grid());
    std::vector<double> d(ka.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (ka[i] - kb[i]) * (ka[i] - kb[i]);
    return std::sqrt(expectation(std::span<const double>(d), rho));
}

enum class GainSolverKind { Exact1d, FiniteDifference, Galerkin };

/// Dispatch over the three grid solvers (Galerkin uses the default basis).
inline GainField solve_gain(GainSolverKind kind, const GridDensity& rho,
                            std::span<const double> data, int galerkin_degree = 3) {
    switch (kind) {
        case GainSolverKind::Exact1d: return solve_gain_exact_1d(rho, data);
        case GainSolverKind::FiniteDifference: return solve_gain_weak_fd(rho, data);
        case GainSolverKind::Galerkin:
            return solve_gain_galerkin(rho, data, default_basis(rho, galerkin_degree));
    }
    fail(ErrorCode::InvalidArgument, "unknown gain solver");
}

}  // namespace fpf
