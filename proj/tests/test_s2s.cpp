#include <gtest/gtest.h>

#include <random>

#include "bcm/bcm.hpp"

using namespace bcm;

namespace {

IndicatorSet arc(const PeriodicGrid& g, const VecD& vol, double lo, double hi)
{
    std::vector<char> f(static_cast<std::size_t>(g.nodes()));
    for (int i = 0; i < g.nodes(); ++i)
        f[static_cast<std::size_t>(i)] = g.position(i)[0] >= lo && g.position(i)[0] < hi;
    return IndicatorSet::from_flags(std::move(f), vol);
}

}  // namespace

class S2SScene : public ::testing::Test {
protected:
    PeriodicGrid g = PeriodicGrid::circle(128);
    std::shared_ptr<const SpectralDecomposition> sd;
    S2SOperator op;
    double T = 0.4;
    int N = 128;

    void SetUp() override
    {
        std::mt19937_64 rng(7);
        sd = std::make_shared<const SpectralDecomposition>(decompose(random_model(g, rng, 0.2, 1.5, 3.0)));
        op = build_s2s(sd, {}, ObservationSet(arc(g, sd->M, 0.0, 0.5)), T, N);
    }

    Atom atom(double x, double w, double tc, double tw)
    {
        return {op.acquire(SpatialProfile::from_dense(spatial_bump(g, {x, 0}, w))),
                temporal_bump(op.dt(), N, tc, tw, 0.0, T - 0.5 * op.dt())};
    }

    cplx direct(const Atom& f, const Atom& h)
    {
        VecC uf = solve_separable(*sd, op.profile(f.profile).dense(g.nodes()), f.temporal, op.dt(), T).u;
        VecC uh = solve_separable(*sd, op.profile(h.profile).dense(g.nodes()), h.temporal, op.dt(), T).u;
        return (uf.array() * uh.conjugate().array() * sd->M.array().cast<cplx>()).sum();
    }
};

TEST_F(S2SScene, ZeroAtomHasZeroTrace)
{
    Atom z{atom(0.2, 0.05, 0.2, 0.1).profile, VecC::Zero(N + 1)};
    EXPECT_EQ(op.trace(z).cwiseAbs().maxCoeff(), 0.0);
}

TEST_F(S2SScene, TraceIsRestrictionOfFullSolve)
{
    Atom f = atom(0.25, 0.05, 0.15, 0.08);
    VecC b = VecC::Zero(2 * N + 1);
    b.head(N + 1) = f.temporal;
    MatC tr = op.trace(f);
    auto src = Source::separable(op.profile(f.profile).dense(g.nodes()), b, op.dt());
    for (int i : {N / 2, N, 2 * N}) {
        VecC u = solve_cauchy(*sd, src, i * op.dt()).u;
        for (int l = 0; l < op.X().count(); ++l)
            EXPECT_NEAR(std::abs(tr(i, l) - u[op.X().nodes()[static_cast<std::size_t>(l)]]), 0.0, 1e-12 * u.cwiseAbs().maxCoeff());
    }
}

TEST_F(S2SScene, ProfileOutsideXIsRejected)
{
    EXPECT_THROW(op.acquire(SpatialProfile::from_dense(spatial_bump(g, {0.7, 0}, 0.05))), ConfigError);
}

TEST_F(S2SScene, BlagoMatchesDirectSolve)
{
    Atom f = atom(0.2, 0.05, 0.2, 0.08), h = atom(0.3, 0.04, 0.25, 0.06);
    cplx d = direct(f, h);
    EXPECT_LE(std::abs(blago_inner_product(op, f, h) - d), 1e-4 * std::abs(d));
    EXPECT_LE(std::abs(blago_inner_product(op, f, h) - std::conj(blago_inner_product(op, h, f))), 1e-10 * std::abs(d));
    Atom zero{f.profile, VecC::Zero(N + 1)};
    EXPECT_EQ(blago_inner_product(op, zero, zero), cplx(0.0));
}

TEST_F(S2SScene, AtomReachingTIsRejected)
{
    Atom f = atom(0.2, 0.05, 0.2, 0.08);
    f.temporal[N] = 1.0;
    EXPECT_THROW(blago_inner_product(op, f, f), ConfigError);
}

TEST(ApplyJ, ExactOnPolynomials)
{
    const int N = 64;
    const double T = 0.4, dt = T / N;
    VecC one = VecC::Ones(2 * N + 1), lin(2 * N + 1), odd(2 * N + 1);
    for (int i = 0; i <= 2 * N; ++i) {
        lin[i] = i * dt;
        odd[i] = std::sin(3.0 * (i * dt - T)) + (i * dt - T);
    }
    VecC a = apply_J(one, dt, N), b = apply_J(lin, dt, N), c = apply_J(odd, dt, N);
    for (int i = 0; i <= N; ++i) {
        double t = i * dt;
        EXPECT_NEAR(a[i].real(), 2.0 * T - 2.0 * t, 1e-13);
        EXPECT_NEAR(b[i].real(), 2.0 * T * T - 2.0 * T * t, 1e-13);
        EXPECT_NEAR(std::abs(c[i]), 0.0, 1e-14);
    }
    EXPECT_EQ(a[N], cplx(0.0));
    EXPECT_THROW(apply_J(VecC::Ones(N), dt, N), ConfigError);
}

TEST(S2SGauge, TracesAgreeForGaugeRelatedModels)
{
    std::mt19937_64 rng(8);
    auto g = PeriodicGrid::circle(128);
    Model m = random_model(g, rng, 0.2, 2.0, 3.0);
    Model c = m;
    c.A = gauge_conjugate(g, m.A, bump_phase(g, {0.75, 0}, 0.2, 2.0));
    auto sdm = decompose(m), sdc = decompose(c);
    ObservationSet X(chart_ball(g, sdm.M, {0.25, 0}, 0.15));
    std::vector<SpatialProfile> basis = {SpatialProfile::from_dense(spatial_bump(g, {0.25, 0}, 0.05))};
    auto a = build_s2s(sdm, basis, X, 0.3, 64), b = build_s2s(sdc, basis, X, 0.3, 64);
    EXPECT_LE((a.response(0) - b.response(0)).norm(), 1e-9 * a.response(0).norm());
}
