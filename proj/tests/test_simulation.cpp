#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "fpflab/density.hpp"
#include "fpflab/observation.hpp"
#include "fpflab/random.hpp"
#include "fpflab/simulation.hpp"

using namespace fpf;

namespace {

double sample_mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_var(const std::vector<double>& v) {
    const double m = sample_mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

std::vector<double> normalized_increments(const ObservationPath& p) {
    std::vector<double> out;
    for (std::size_t n = 1; n <= p.steps(); ++n) out.push_back(p.dz(n) / std::sqrt(p.dt(n)));
    return out;
}

}  // namespace

TEST(Times, UniformEndpointsExact) {
    const auto t = uniform_times(0.7, 7);
    ASSERT_EQ(t.size(), 8u);
    EXPECT_EQ(t.front(), 0.0);
    EXPECT_EQ(t.back(), 0.7);
}

TEST(Times, ZeroStepRejected) {
    std::vector<double> t = {0.0, 0.1, 0.1, 0.3};
    try {
        ObservationPath p(t, std::vector<double>(4, 0.0));
        FAIL() << "zero step accepted";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::BadStep);
    }
}

TEST(Times, MustStartAtZero) {
    EXPECT_THROW(ObservationPath({0.1, 0.2}, {0.0, 0.0}), Error);
}

TEST(Times, LengthMismatchRejected) {
    EXPECT_THROW(ObservationPath({0.0, 0.1, 0.2}, {0.0, 0.0}), Error);
}

TEST(Prior, GaussianMomentsWithinCltBounds) {
    const auto e = sample_prior(Prior::gaussian(0.0, 1.0), 100000, 42);
    const auto x = std::vector<double>(e.positions().begin(), e.positions().end());
    // 3 sd / sqrt(N) for the mean, 3 sqrt(2) / sqrt(N) for the variance.
    EXPECT_NEAR(sample_mean(x), 0.0, 0.01);
    EXPECT_NEAR(sample_var(x), 1.0, 0.02);
}

TEST(Prior, MixtureWeightsRespected) {
    const auto prior = Prior::mixture({{1.0, -5.0, 0.1}, {3.0, 5.0, 0.1}});
    const auto e = sample_prior(prior, 40000, 9);
    std::size_t right = 0;
    for (double x : e.positions()) right += x > 0.0;
    const double frac = static_cast<double>(right) / 40000.0;
    // Binomial sd sqrt(0.75 * 0.25 / 40000) ~ 0.0022.
    EXPECT_NEAR(frac, 0.75, 0.01);
}

TEST(Prior, SameSeedBitIdentical) {
    const auto prior = Prior::mixture({{0.5, -1.0, 0.5}, {0.5, 1.0, 0.5}});
    const auto a = sample_prior(prior, 1000, 5);
    const auto b = sample_prior(prior, 1000, 5);
    const auto c = sample_prior(prior, 1000, 6);
    EXPECT_TRUE(std::equal(a.positions().begin(), a.positions().end(), b.positions().begin()));
    EXPECT_FALSE(std::equal(a.positions().begin(), a.positions().end(), c.positions().begin()));
}

TEST(Prior, SingleParticleRejected) {
    try {
        sample_prior(Prior::gaussian(0.0, 1.0), 1, 0);
        FAIL() << "n = 1 accepted";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TooFewParticles);
    }
}

TEST(Prior, GridPriorInverseCdf) {
    const auto g = Grid::uniform(0.0, 1.0, 512);
    // Triangular density 2x on [0,1]: mean 2/3, variance 1/18.
    std::vector<double> logs(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) logs[i] = std::log(std::max(2.0 * g[i], 1e-300));
    const auto prior = Prior::from_grid(GridDensity(g, logs));
    const auto e = sample_prior(prior, 50000, 3);
    const auto x = std::vector<double>(e.positions().begin(), e.positions().end());
    EXPECT_NEAR(sample_mean(x), 2.0 / 3.0, 0.005);
    EXPECT_NEAR(sample_var(x), 1.0 / 18.0, 0.002);
    for (double v : x) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(ObservationPathSim, ZeroHGivesUnitVarianceIncrements) {
    const auto sig = static_signal(0.3, uniform_times(1.0, 10000));
    const auto p = simulate_observation_path(sig, observations::constant(0.0), 17);
    EXPECT_EQ(p.z(0), 0.0);
    EXPECT_NEAR(sample_var(normalized_increments(p)), 1.0, 0.05);
}

TEST(ObservationPathSim, StaticLinearMeanOverSeeds) {
    const auto sig = static_signal(2.0, uniform_times(1.0, 100));
    std::vector<double> zt;
    for (std::uint64_t s = 0; s < 200; ++s) {
        zt.push_back(simulate_observation_path(sig, observations::linear(), s).z(100));
    }
    // E[Z_1] = h(2) = 2, sd of the mean 1/sqrt(200).
    EXPECT_NEAR(sample_mean(zt), 2.0, 0.25);
}

TEST(ObservationPathSim, IncrementsUncorrelated) {
    const auto sig = static_signal(0.0, uniform_times(1.0, 10000));
    const auto w = normalized_increments(simulate_observation_path(sig, observations::constant(0.0), 23));
    const double m = sample_mean(w);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        den += (w[i] - m) * (w[i] - m);
        if (i + 1 < w.size()) num += (w[i] - m) * (w[i + 1] - m);
    }
    EXPECT_LT(std::abs(num / den), 0.05);
}

TEST(ObservationPathSim, Deterministic) {
    const auto sig = static_signal(1.0, uniform_times(1.0, 500));
    const auto a = simulate_observation_path(sig, observations::tanh(), 99);
    const auto b = simulate_observation_path(sig, observations::tanh(), 99);
    EXPECT_EQ(a, b);
}

TEST(ObservationPathSim, StreamsIndependentOfSignalDraws) {
    // Consuming the signal stream first must not shift the observation noise.
    const auto times = uniform_times(1.0, 200);
    const auto drifting = simulate_signal_path([](double) { return 0.0; }, 0.0, times, true, 4);
    const auto a = simulate_observation_path(drifting, observations::constant(0.0), 4);
    const auto b = simulate_observation_path(static_signal(0.0, times), observations::constant(0.0), 4);
    EXPECT_EQ(a.z_values().back(), b.z_values().back());
}

TEST(ObservationPathSim, MidpointEvaluationUsesAverage) {
    const std::vector<double> t = {0.0, 0.5, 1.0};
    SignalPath sig{t, {0.0, 1.0, 3.0}, SignalMode::Drifting};
    const auto left = simulate_observation_path(sig, observations::linear(), 1, HEvaluation::LeftEndpoint);
    const auto mid = simulate_observation_path(sig, observations::linear(), 1, HEvaluation::Midpoint);
    // Same noise; drift terms differ by (0.5 - 0)*0.5 and (2 - 1)*0.5.
    EXPECT_NEAR(mid.dz(1) - left.dz(1), 0.25, 1e-14);
    EXPECT_NEAR(mid.dz(2) - left.dz(2), 0.5, 1e-14);
}

TEST(SignalPath, StaticWithoutDriftOrNoise) {
    const auto s = simulate_signal_path([](double) { return 0.0; }, 1.5, uniform_times(1.0, 100), false, 0);
    for (double x : s.x_values) EXPECT_EQ(x, 1.5);
    EXPECT_EQ(s.mode, SignalMode::Static);
}

TEST(SignalPath, OrnsteinUhlenbeckStationaryVariance) {
    // One path holds only ~10 decorrelation times on [5, 10]; average the
    // time average over 20 seeds.
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = simulate_signal_path([](double x) { return -x; }, 0.0, uniform_times(10.0, 10000), true, seed);
        double acc = 0.0;
        for (std::size_t n = 5000; n <= 10000; ++n) acc += s.x_values[n] * s.x_values[n];
        total += acc / 5001.0;
    }
    EXPECT_NEAR(total / 20.0, 0.5, 0.1);
}

TEST(SignalPath, CubicDriftBlowsUp) {
    try {
        simulate_signal_path([](double x) { return x * x * x; }, 10.0, uniform_times(1.0, 1000), false, 0);
        FAIL() << "explosion not detected";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Blowup);
    }
}

TEST(Bridge, KeepsCoarseNodesAndHalvesSteps) {
    const auto p = simulate_observation_path(static_signal(0.5, uniform_times(1.0, 50)), observations::tanh(), 2);
    const auto r = refine_path_bridge(p, 2);
    ASSERT_EQ(r.steps(), 100u);
    for (std::size_t n = 0; n <= 50; ++n) {
        EXPECT_EQ(r.time(2 * n), p.time(n));
        EXPECT_EQ(r.z(2 * n), p.z(n));
    }
    EXPECT_NEAR(r.max_step(), 0.01, 1e-15);
}

TEST(Bridge, MidpointLaw) {
    // Bridge midpoint given endpoints: mean average, variance dt/4.
    const auto p = simulate_observation_path(static_signal(0.0, uniform_times(1.0, 20000)),
                                             observations::constant(0.0), 12);
    const auto r = refine_path_bridge(p, 12);
    std::vector<double> dev;
    for (std::size_t n = 1; n <= p.steps(); ++n) {
        dev.push_back((r.z(2 * n - 1) - 0.5 * (p.z(n - 1) + p.z(n))) / (0.5 * std::sqrt(p.dt(n))));
    }
    EXPECT_NEAR(sample_mean(dev), 0.0, 0.03);
    EXPECT_NEAR(sample_var(dev), 1.0, 0.05);
}

TEST(Rng, SubstreamsDiffer) {
    const auto root = named_stream(1, "x");
    auto a = root.substream(0), b = root.substream(1);
    EXPECT_NE(a(), b());
    auto c = root.substream(0);
    EXPECT_EQ(root.substream(0)(), c());
}

TEST(Rng, StreamIdIsFnv1a) {
    // Reference FNV-1a 64 of "a".
    EXPECT_EQ(stream_id("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(stream_id(""), 0xcbf29ce484222325ULL);
}

TEST(Path, IndexAtAndExcursion) {
    ObservationPath p({0.0, 0.1, 0.3, 0.6}, {0.0, -0.4, 0.2, 0.1});
    EXPECT_EQ(p.index_at(0.0), 0u);
    EXPECT_EQ(p.index_at(0.2), 1u);
    EXPECT_EQ(p.index_at(0.3), 2u);
    EXPECT_EQ(p.index_at(5.0), 3u);
    EXPECT_DOUBLE_EQ(p.excursion(), 0.4);
    EXPECT_NEAR(p.y(2), 3.0, 1e-12);
}
