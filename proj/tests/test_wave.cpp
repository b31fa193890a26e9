#include <gtest/gtest.h>

#include <random>

#include "bcm/bcm.hpp"

using namespace bcm;

TEST(Wave, DuhamelKernel)
{
    EXPECT_DOUBLE_EQ(duhamel_kernel(0.0, 2.0), 2.0);
    EXPECT_NEAR(duhamel_kernel(M_PI * M_PI, 1.0), 0.0, 1e-15);
    EXPECT_NEAR(duhamel_kernel(-1.0, 1.0), std::sinh(1.0), 1e-14);
    EXPECT_NEAR(duhamel_kernel(1e-12, 0.7), 0.7, 1e-12);
}

class WaveScene : public ::testing::Test {
protected:
    PeriodicGrid g = PeriodicGrid::circle(128);
    Model model;
    SpectralDecomposition sd;
    double T = 0.4;
    int N = 256;
    void SetUp() override
    {
        std::mt19937_64 rng(5);
        model = random_model(g, rng, 0.2, 1.5, 3.0);
        sd = decompose(model);
    }
};

TEST_F(WaveScene, ZeroSourceGivesZeroWave)
{
    auto w = solve_cauchy(sd, Source::zero(g, T / N, N), T);
    EXPECT_EQ(w.u.cwiseAbs().maxCoeff(), 0.0);
}

TEST_F(WaveScene, SingleModeMatchesScalarQuadrature)
{
    const int j = 5;
    const double dt = T / N;
    VecC beta = temporal_bump(dt, N, 0.2, 0.1);
    auto w = solve_separable(sd, sd.phi.col(j), beta, dt, T);
    // Composite Simpson on a 64x finer grid of the piecewise-linear beta.
    const int sub = 64 * N;
    double acc = 0.0;
    for (int k = 0; k <= sub; ++k) {
        double s = T * k / sub;
        double pos = s / dt;
        int i = std::min(static_cast<int>(pos), N - 1);
        double b = (beta[i] * (1.0 - (pos - i)) + beta[i + 1] * (pos - i)).real();
        double wk = (k == 0 || k == sub) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        acc += wk * b * duhamel_kernel(sd.lambda[j], T - s);
    }
    acc *= T / sub / 3.0;
    VecC expect = sd.phi.col(j) * acc;
    EXPECT_LT((w.u - expect).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, expect.cwiseAbs().maxCoeff()));
}

TEST_F(WaveScene, Linearity)
{
    const double dt = T / N;
    auto f = Source::separable(spatial_bump(g, {0.3, 0}, 0.05), temporal_bump(dt, N, 0.1, 0.05), dt);
    auto h = Source::separable(spatial_bump(g, {0.6, 0}, 0.08), temporal_bump(dt, N, 0.2, 0.08), dt);
    VecC sum = solve_cauchy(sd, f + h, T).u;
    VecC parts = solve_cauchy(sd, f, T).u + solve_cauchy(sd, h, T).u;
    EXPECT_LT((sum - parts).norm(), 1e-12 * sum.norm());
}

TEST_F(WaveScene, EnergyConservedAfterSource)
{
    const double dt = T / N;
    auto f = Source::separable(spatial_bump(g, {0.3, 0}, 0.05), temporal_bump(dt, N, 0.05, 0.04), dt);
    auto a = solve_cauchy(sd, f, 0.15), b = solve_cauchy(sd, f, 0.4);
    const auto disc = assemble_operator(model);
    auto energy = [&](const Wavefield& w) {
        VecC Ku = disc.K * w.u;
        return (w.ut.cwiseAbs2().array() * sd.M.array()).sum() + w.u.dot(Ku).real();
    };
    EXPECT_NEAR(energy(a), energy(b), 1e-8 * energy(a));
}

TEST(WaveLeakage, FiniteSpeed)
{
    auto g = PeriodicGrid::circle(256);
    auto sd = decompose(Model::free(g));
    const double dt = 0.25 / 256;
    auto f = Source::separable(spatial_bump(g, {0.5, 0}, 0.05), temporal_bump(dt, 256, 0.03, 0.03), dt);
    auto metric = ConformalMetric::flat(g);
    EXPECT_EQ(finite_speed_leakage(sd, metric, f, 0.0), 0.0);
    EXPECT_LE(finite_speed_leakage(sd, metric, f, 0.25), 1e-2);
}

TEST(WaveLeakage, DecreasesWithRefinement)
{
    std::vector<double> leak;
    for (int n : {128, 256, 512}) {
        auto g = PeriodicGrid::circle(n);
        auto sd = decompose(Model::free(g));
        const double dt = 0.25 / 256;
        auto f = Source::separable(spatial_bump(g, {0.5, 0}, 0.08), temporal_bump(dt, 256, 0.04, 0.04), dt);
        leak.push_back(finite_speed_leakage(sd, ConformalMetric::flat(g), f, 0.25));
    }
    EXPECT_LE(leak[1], 1.2 * leak[0]);
    EXPECT_LE(leak[2], 1.2 * leak[1]);
}
