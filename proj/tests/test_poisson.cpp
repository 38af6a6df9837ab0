#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "fpflab/density.hpp"
#include "fpflab/observation.hpp"
#include "fpflab/poisson.hpp"
#include "fpflab/simulation.hpp"

using namespace fpf;

namespace {

GridDensity bimodal(const Grid& g) {
    const std::vector<MixtureComponent> parts = {{0.5, -1.0, 0.5}, {0.5, 1.0, 0.5}};
    return normalize(mixture_density(g, parts));
}

// K(x) = -(1/rho(x)) int_{-inf}^x (h - h_hat) rho for a Gaussian mixture,
// by composite Simpson on a fine independent mesh.
double mixture_gain_oracle(double x, double lo, const std::function<double(double)>& h) {
    auto pdf = [](double y) {
        auto n = [](double z, double m, double s) {
            const double u = (z - m) / s;
            return std::exp(-0.5 * u * u) / (s * std::sqrt(2.0 * std::numbers::pi));
        };
        return 0.5 * n(y, -1.0, 0.5) + 0.5 * n(y, 1.0, 0.5);
    };
    auto simpson = [](auto&& f, double a, double b, int n) {
        const double step = (b - a) / n;
        double s = f(a) + f(b);
        for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * step);
        return s * step / 3.0;
    };
    const double h_hat = simpson([&](double y) { return h(y) * pdf(y); }, lo, -lo, 20000);
    const double flux = simpson([&](double y) { return (h(y) - h_hat) * pdf(y); }, lo, x, 20000);
    return -flux / pdf(x);
}

std::vector<double> sampled(const Grid& g, double (*f)(double)) {
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) v[i] = f(g[i]);
    return v;
}

double phi_mean(const GainField& f, const GridDensity& rho) {
    const auto p = f.phi_on(rho.grid());
    return expectation(std::span<const double>(p), rho);
}

}  // namespace

TEST(Exact1d, GaussianLinearGainIsVariance) {
    const double sigma = 0.8;
    const auto g = Grid::centered(0.3, 10.0 * sigma, 2048);
    const auto rho = GridDensity::gaussian(g, 0.3, sigma);
    const auto f = solve_gain_exact_1d(rho, observations::linear());
    for (double x = 0.3 - 4 * sigma; x <= 0.3 + 4 * sigma; x += 0.05) {
        EXPECT_NEAR(f.gain_at(x) / (sigma * sigma), 1.0, 1e-6) << x;
    }
}

TEST(Exact1d, ConstantObservationGivesZero) {
    const auto g = Grid::centered(0.0, 6.0, 512);
    const auto rho = bimodal(g);
    const auto f = solve_gain_exact_1d(rho, observations::constant(0.7));
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_NEAR(f.gain[i], 0.0, 1e-12);
        EXPECT_NEAR(f.phi[i], 0.0, 1e-12);
    }
}

TEST(Exact1d, BimodalSpikeBetweenModes) {
    const auto lin = [](double y) { return y; };
    const double k0 = mixture_gain_oracle(0.0, -6.0, lin);
    const double kp = mixture_gain_oracle(1.5, -6.0, lin);
    const double km = mixture_gain_oracle(-1.5, -6.0, lin);
    ASSERT_GT(k0, 4.0 * kp);
    ASSERT_GT(k0, 4.0 * km);
    const auto f = solve_gain_exact_1d(bimodal(Grid::centered(0.0, 6.0, 2048)), observations::linear());
    EXPECT_NEAR(f.gain_at(0.0), k0, 1e-4 * k0);
    EXPECT_GT(f.gain_at(0.0), 4.0 * f.gain_at(1.5));
    EXPECT_GT(f.gain_at(0.0), 4.0 * f.gain_at(-1.5));
}

TEST(Exact1d, TanhConvergesToIndependentQuadrature) {
    const auto th = [](double y) { return std::tanh(y); };
    const std::vector<double> xs = {-2.0, -1.0, -0.3, 0.0, 0.4, 1.2, 2.5};
    std::vector<double> oracle;
    for (double x : xs) oracle.push_back(mixture_gain_oracle(x, -6.0, th));
    std::vector<double> worst;
    for (std::size_t n : {1024u, 2048u, 4096u}) {
        const auto f = solve_gain_exact_1d(bimodal(Grid::centered(0.0, 6.0, n)), observations::tanh());
        double w = 0.0;
        for (std::size_t k = 0; k < xs.size(); ++k) w = std::max(w, std::abs(f.gain_at(xs[k]) - oracle[k]));
        worst.push_back(w);
    }
    // Second order in the grid spacing.
    EXPECT_GT(worst[0] / worst[1], 3.0);
    EXPECT_GT(worst[1] / worst[2], 3.0);
    EXPECT_LT(worst[2], 1e-4);
}

TEST(Exact1d, MeanZeroAndVanishingFlux) {
    const auto g = Grid::centered(0.0, 6.0, 1024);
    const auto rho = bimodal(g);
    const auto f = solve_gain_exact_1d(rho, observations::tanh());
    EXPECT_NEAR(phi_mean(f, rho), 0.0, 1e-8);
    EXPECT_LT(std::abs(f.boundary_flux), 1e-8);
}

TEST(Exact1d, InteriorHoleRejected) {
    const auto g = Grid::centered(0.0, 6.0, 512);
    std::vector<double> lv(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        lv[i] = std::abs(g[i]) < 0.5 ? kNegInf : -0.5 * (std::abs(g[i]) - 2.0) * (std::abs(g[i]) - 2.0);
    }
    try {
        solve_gain_exact_1d(normalize(GridDensity(g, lv)), observations::tanh());
        FAIL() << "hole accepted";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateDensity);
    }
}

TEST(WeakFd, AgreesWithExactForTanh) {
    const auto g = Grid::centered(0.0, 8.0, 1024);
    const auto rho = GridDensity::gaussian(g, 0.0, 1.0);
    const auto a = solve_gain_exact_1d(rho, observations::tanh());
    const auto b = solve_gain_weak_fd(rho, observations::tanh());
    EXPECT_LT(gain_l2_distance(a, b, rho), 1e-4);
    EXPECT_NEAR(phi_mean(b, rho), 0.0, 1e-8);
}

TEST(WeakFd, GaussianLinearConstantGain) {
    const auto g = Grid::centered(0.0, 8.0, 2048);
    const auto rho = GridDensity::gaussian(g, 0.0, 1.0);
    const auto f = solve_gain_weak_fd(rho, observations::linear());
    for (double x = -4.0; x <= 4.0; x += 0.1) EXPECT_NEAR(f.gain_at(x), 1.0, 1e-4) << x;
}

TEST(WeakFd, ConvergesToExactAtOrderAboveOnePointFive) {
    std::vector<double> err;
    for (std::size_t n : {256u, 512u, 1024u}) {
        const auto g = Grid::centered(0.0, 6.0, n);
        const auto rho = bimodal(g);
        err.push_back(gain_l2_distance(solve_gain_exact_1d(rho, observations::tanh()),
                                       solve_gain_weak_fd(rho, observations::tanh()), rho));
    }
    EXPECT_GE(std::log2(err[0] / err[1]), 1.5);
    EXPECT_GE(std::log2(err[1] / err[2]), 1.5);
}

TEST(Galerkin, LinearBasisGivesSampleVariance) {
    const auto e = sample_prior(Prior::mixture({{0.3, -2.0, 0.4}, {0.7, 1.0, 1.1}}), 777, 4);
    const auto f = solve_gain_galerkin(e, observations::linear(), monomial_basis(1));
    const double m = e.mean();
    double v = 0.0;
    for (double x : e.positions()) v += (x - m) * (x - m);
    v /= static_cast<double>(e.size());
    ASSERT_EQ(f.coefficients.size(), 1u);
    EXPECT_NEAR(f.coefficients[0], v, 1e-12 * std::max(1.0, v));
}

TEST(Galerkin, ConstantBasisIsSingular) {
    const auto e = sample_prior(Prior::gaussian(0.0, 1.0), 100, 1);
    try {
        solve_gain_galerkin(e, observations::tanh(), {constant_basis_function()});
        FAIL() << "singular Gram accepted";
    } catch (const Error& err) {
        EXPECT_EQ(err.code(), ErrorCode::SingularGram);
    }
}

TEST(Galerkin, EmptyBasisRejected) {
    const auto e = sample_prior(Prior::gaussian(0.0, 1.0), 100, 1);
    try {
        solve_gain_galerkin(e, observations::tanh(), {});
        FAIL() << "empty basis accepted";
    } catch (const Error& err) {
        EXPECT_EQ(err.code(), ErrorCode::EmptyBasis);
    }
}

TEST(Galerkin, ErrorShrinksAsBasisGrows) {
    const auto g = Grid::centered(0.0, 8.0, 1024);
    const auto rho = GridDensity::gaussian(g, 0.0, 1.0);
    const auto exact = solve_gain_exact_1d(rho, observations::tanh());
    const double e1 = gain_l2_distance(solve_gain_galerkin(rho, observations::tanh(), monomial_basis(1)), exact, rho);
    const double e3 = gain_l2_distance(solve_gain_galerkin(rho, observations::tanh(), monomial_basis(3)), exact, rho);
    EXPECT_LT(e3, e1);
}

TEST(Galerkin, EnsembleApproachesQuadratureVersion) {
    const auto g = Grid::centered(0.0, 8.0, 1024);
    const auto rho = GridDensity::gaussian(g, 0.0, 1.0);
    const auto grid_fit = solve_gain_galerkin(rho, observations::tanh(), monomial_basis(3));
    const auto e = sample_prior(Prior::gaussian(0.0, 1.0), 200000, 13);
    const auto part_fit = solve_gain_galerkin(e, observations::tanh(), monomial_basis(3));
    EXPECT_LT(gain_l2_distance(grid_fit, part_fit, rho), 0.02);
}

TEST(AllSolvers, MeanZeroAndWeakForm) {
    auto flux_ok = [](const GainField& f, const GridDensity& rho, const std::vector<double>& data) {
        EXPECT_LT(std::abs(weak_form_residual(f, rho, data, [](double x) { return x; }, [](double) { return 1.0; })),
                  1e-6);
        EXPECT_LT(std::abs(weak_form_residual(f, rho, data, [](double x) { return x * x; },
                                              [](double x) { return 2 * x; })), 1e-6);
        EXPECT_LT(std::abs(weak_form_residual(f, rho, data, [](double x) { return std::sin(x); },
                                              [](double x) { return std::cos(x); })), 1e-6);
    };
    const auto g = Grid::centered(0.0, 6.0, 2048);
    const auto rho = bimodal(g);
    const auto data = sampled(g, [](double x) { return std::tanh(x); });
    for (auto kind : {GainSolverKind::Exact1d, GainSolverKind::FiniteDifference, GainSolverKind::Galerkin}) {
        EXPECT_NEAR(phi_mean(solve_gain(kind, rho, data), rho), 0.0, 1e-8);
    }
    flux_ok(solve_gain(GainSolverKind::Exact1d, rho, data), rho, data);
    // Galerkin is exact only on its own span {x, x^2, x^3}.
    const auto gal = solve_gain(GainSolverKind::Galerkin, rho, data);
    EXPECT_LT(std::abs(weak_form_residual(gal, rho, data, [](double x) { return x * x; },
                                          [](double x) { return 2 * x; })), 1e-10);
    // fd satisfies the hat-function form exactly; against nodal trapezoid
    // probes the gap is O(h^2) and reaches 1e-6 on a finer grid.
    const auto gf = Grid::centered(0.0, 6.0, 8192);
    const auto rf = bimodal(gf);
    const auto df = sampled(gf, [](double x) { return std::tanh(x); });
    flux_ok(solve_gain(GainSolverKind::FiniteDifference, rf, df), rf, df);
}

TEST(AllSolvers, LinearInData) {
    const auto g = Grid::centered(0.0, 6.0, 1024);
    const auto rho = bimodal(g);
    const auto a = sampled(g, [](double x) { return std::tanh(x); });
    const auto b = sampled(g, [](double x) { return std::sin(2.0 * x); });
    std::vector<double> s(g.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = a[i] + b[i];
    for (auto kind : {GainSolverKind::Exact1d, GainSolverKind::FiniteDifference}) {
        const auto ka = solve_gain(kind, rho, a).gain_on(g);
        const auto kb = solve_gain(kind, rho, b).gain_on(g);
        const auto ks = solve_gain(kind, rho, s).gain_on(g);
        for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(ks[i], ka[i] + kb[i], 1e-8);
    }
}

TEST(Bounds, GaussianLinearEquality) {
    const double sigma = 0.9;
    const auto g = Grid::centered(0.0, 10.0 * sigma, 2048);
    const auto rho = GridDensity::gaussian(g, 0.0, sigma);
    const auto f = solve_gain_exact_1d(rho, observations::linear());
    const auto rep = verify_poisson_bounds(f, rho, observations::linear(), 1.0 / (sigma * sigma));
    const double s4 = std::pow(sigma, 4);
    EXPECT_NEAR(rep.energy_lhs, s4, 1e-6);
    EXPECT_NEAR(rep.energy_rhs, s4, 1e-6);
    EXPECT_TRUE(rep.energy_holds);
}

TEST(Bounds, TanhStrict) {
    const auto g = Grid::centered(0.0, 8.0, 1024);
    const auto rho = GridDensity::gaussian(g, 0.2, 1.0);
    const auto f = solve_gain_exact_1d(rho, observations::tanh());
    const auto rep = verify_poisson_bounds(f, rho, observations::tanh(), 1.0);
    EXPECT_TRUE(rep.passed());
    EXPECT_LT(rep.energy_lhs, rep.energy_rhs);
    EXPECT_LT(rep.regularity_lhs, rep.regularity_rhs);
}

TEST(Bounds, NonPositiveConstantRejected) {
    const auto g = Grid::centered(0.0, 8.0, 256);
    const auto rho = GridDensity::gaussian(g, 0.0, 1.0);
    const auto f = solve_gain_exact_1d(rho, observations::tanh());
    try {
        verify_poisson_bounds(f, rho, observations::tanh(), 0.0);
        FAIL() << "lambda = 0 accepted";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::BadConstant);
    }
}

TEST(GainField, HeldConstantOutsideReliableRange) {
    const auto g = Grid::centered(0.0, 6.0, 512);
    const auto f = solve_gain_exact_1d(bimodal(g), observations::tanh());
    const double lo = g[f.reliable_first], hi = g[f.reliable_last];
    EXPECT_EQ(f.gain_at(lo - 3.0), f.gain[f.reliable_first]);
    EXPECT_EQ(f.gain_at(hi + 3.0), f.gain[f.reliable_last]);
    EXPECT_EQ(f.gain_slope_at(hi + 1.0), 0.0);
    EXPECT_FALSE(f.in_reliable_domain(hi + 1.0));
}
