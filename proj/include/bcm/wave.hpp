#pragma once

#include <cmath>
#include <vector>

#include "bcm/geometry.hpp"
#include "bcm/operator.hpp"

namespace bcm {

// Solution at time t of a'' + lambda a = 0, a(0) = 0, a'(0) = 1.
inline double duhamel_kernel(double lambda, double t)
{
    if (t < 0.0)
        throw ConfigError("kernel time must be non-negative");
    const double x = lambda * t * t;
    if (std::abs(x) < 1e-2) {
        double sum = 0.0, term = 1.0;
        for (int m = 0; m < 10; ++m) {
            sum += term;
            term *= -x / ((2.0 * m + 2.0) * (2.0 * m + 3.0));
        }
        return t * sum;
    }
    const double w = std::sqrt(std::abs(lambda));
    return lambda > 0.0 ? std::sin(w * t) / w : std::sinh(w * t) / w;
}

// Exact one-step propagator of a'' + lambda a = f for f linear on the step:
//   a1  = c a0 + k a0' + f0 I0 + (f1 - f0) I1
//   a1' = -lambda k a0 + c a0' + f0 J0 + (f1 - f0) J1
struct StepCoefficients {
    double c, k, I0, I1, J0, J1, lambda;

    StepCoefficients(double lam, double dt) : lambda(lam)
    {
        const double x = lam * dt * dt;
        double Q;
        if (std::abs(x) < 1e-2) {
            double sk = 0, sc = 0, si = 0, sq = 0;
            double p = 1.0;  // (-x)^m
            double f2m = 1.0;  // (2m)!
            for (int m = 0; m < 8; ++m) {
                const double f1 = f2m * (2 * m + 1);
                const double f2 = f1 * (2 * m + 2);
                const double f3 = f2 * (2 * m + 3);
                sc += p / f2m;
                sk += p / f1;
                si += p / f2;
                sq += p * 2.0 * (m + 1) / f3;
                p *= -x;
                f2m = f2;
            }
            c = sc;
            k = dt * sk;
            I0 = dt * dt * si;
            Q = dt * dt * dt * sq;
        } else {
            const double w = std::sqrt(std::abs(lam));
            if (lam > 0) {
                c = std::cos(w * dt);
                k = std::sin(w * dt) / w;
            } else {
                c = std::cosh(w * dt);
                k = std::sinh(w * dt) / w;
            }
            I0 = (1.0 - c) / lam;
            Q = (k - dt * c) / lam;
        }
        I1 = I0 - Q / dt;
        J0 = k;
        J1 = I0 / dt;
    }

    template <class T>
    void step(T& a, T& ad, const T& f0, const T& f1) const
    {
        T an = c * a + k * ad + f0 * I0 + (f1 - f0) * I1;
        T adn = -lambda * k * a + c * ad + f0 * J0 + (f1 - f0) * J1;
        a = an;
        ad = adn;
    }
};

// Space-time source, piecewise linear in time on a uniform grid, nodal in space.
// coeffs(i, x) is the value at t_i = i * dt.
struct Source {
    double dt = 0.0;
    MatC coeffs;             // (steps + 1) x nodes
    std::vector<char> mask;  // spatial support

    int steps() const { return static_cast<int>(coeffs.rows()) - 1; }
    double horizon() const { return dt * steps(); }

    static Source zero(const PeriodicGrid& g, double dt, int steps)
    {
        Source s;
        s.dt = dt;
        s.coeffs = MatC::Zero(steps + 1, g.nodes());
        s.mask.assign(static_cast<std::size_t>(g.nodes()), 0);
        return s;
    }

    // spatial(x) * temporal(t) with the temporal profile sampled on the time grid.
    static Source separable(const VecC& spatial, const VecC& temporal, double dt)
    {
        Source s;
        s.dt = dt;
        s.coeffs = temporal * spatial.transpose();
        s.mask.resize(static_cast<std::size_t>(spatial.size()));
        for (Eigen::Index i = 0; i < spatial.size(); ++i)
            s.mask[static_cast<std::size_t>(i)] = spatial[i] != cplx(0.0) ? 1 : 0;
        return s;
    }

    void validate(const PeriodicGrid& g) const
    {
        if (!(dt > 0.0))
            throw ConfigError("source time step must be positive");
        if (coeffs.cols() != g.nodes() || static_cast<int>(mask.size()) != g.nodes())
            throw ConfigError("source does not match grid");
        if (coeffs.rows() < 2)
            throw ConfigError("source needs at least one time step");
        if (coeffs.row(0).cwiseAbs().maxCoeff() != 0.0)
            throw ConfigError("source must vanish at t = 0");
        for (int x = 0; x < g.nodes(); ++x)
            if (!mask[static_cast<std::size_t>(x)] && coeffs.col(x).cwiseAbs().maxCoeff() != 0.0)
                throw ConfigError("source has values outside its declared mask");
    }

    Source operator+(const Source& o) const
    {
        if (dt != o.dt || coeffs.rows() != o.coeffs.rows() || coeffs.cols() != o.coeffs.cols())
            throw ConfigError("sources live on different grids");
        Source s = *this;
        s.coeffs += o.coeffs;
        for (std::size_t i = 0; i < mask.size(); ++i)
            s.mask[i] = mask[i] || o.mask[i];
        return s;
    }
};

struct Wavefield {
    VecC u;
    VecC ut;  // time derivative
    double t = 0.0;
};

// Sum_j v_j with a fixed pairwise order.
inline cplx pairwise_sum(const cplx* v, Eigen::Index n)
{
    if (n <= 8) {
        cplx s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            s += v[i];
        return s;
    }
    const Eigen::Index m = n / 2;
    return pairwise_sum(v, m) + pairwise_sum(v + m, n - m);
}

// u(x) = sum_j phi_j(x) a_j, summed pairwise over modes.
inline VecC synthesize(const SpectralDecomposition& sd, const VecC& modal)
{
    const Eigen::Index n = sd.phi.rows(), m = sd.phi.cols();
    VecC u(n);
    std::vector<cplx> buf(static_cast<std::size_t>(m));
    for (Eigen::Index x = 0; x < n; ++x) {
        for (Eigen::Index j = 0; j < m; ++j)
            buf[static_cast<std::size_t>(j)] = sd.phi(x, j) * modal[j];
        u[x] = pairwise_sum(buf.data(), m);
    }
    return u;
}

// Advance modal states through a piecewise-linear modal forcing F (rows = time nodes).
// Stops at t_eval, which may fall inside a step.
inline void propagate_modal(const SpectralDecomposition& sd, const MatC& F, double dt, double t_eval, VecC& a, VecC& ad)
{
    const int m = sd.size();
    a = VecC::Zero(m);
    ad = VecC::Zero(m);
    const double steps_f = t_eval / dt;
    int full = static_cast<int>(std::floor(steps_f + 1e-9));
    full = std::min(full, static_cast<int>(F.rows()) - 1);
    const double frac = steps_f - full;
    for (int j = 0; j < m; ++j) {
        StepCoefficients sc(sd.lambda[j], dt);
        cplx aj = 0.0, adj = 0.0;
        for (int i = 0; i < full; ++i)
            sc.step(aj, adj, F(i, j), F(i + 1, j));
        if (frac > 1e-9) {
            StepCoefficients part(sd.lambda[j], frac * dt);
            cplx f0 = F(full, j);
            cplx f1 = full + 1 < F.rows() ? F(full + 1, j) : cplx(0.0);
            cplx fe = f0 + frac * (f1 - f0);
            part.step(aj, adj, f0, fe);
        }
        a[j] = aj;
        ad[j] = adj;
    }
}

inline Wavefield solve_cauchy(const SpectralDecomposition& sd, const Source& f, double t_eval)
{
    f.validate(sd.grid);
    if (t_eval < 0.0)
        throw ConfigError("evaluation time must be non-negative");
    if (t_eval > f.horizon() * (1.0 + 1e-12))
        throw ConfigError("evaluation time beyond the source horizon");
    const int rows = std::min(static_cast<int>(f.coeffs.rows()), static_cast<int>(std::ceil(t_eval / f.dt - 1e-9)) + 1);
    MatC F = f.coeffs.topRows(rows) * sd.M.cast<cplx>().asDiagonal() * sd.phi.conjugate();
    VecC a, ad;
    propagate_modal(sd, F, f.dt, t_eval, a, ad);
    return {synthesize(sd, a), synthesize(sd, ad), t_eval};
}

// Fast path for spatial(x) * temporal(t).
inline Wavefield solve_separable(const SpectralDecomposition& sd, const VecC& spatial, const VecC& temporal, double dt,
                                 double t_eval)
{
    if (spatial.size() != sd.grid.nodes())
        throw ConfigError("source does not match grid");
    VecC p = sd.project(spatial);
    MatC F = temporal * p.transpose();
    VecC a, ad;
    propagate_modal(sd, F, dt, t_eval, a, ad);
    return {synthesize(sd, a), synthesize(sd, ad), t_eval};
}

// r(i, j): modal response at t_i to a unit hat centred at t_1 = dt (support [0, 2 dt]).
inline MatD hat_response(const SpectralDecomposition& sd, double dt, int steps)
{
    const int m = sd.size();
    MatD r = MatD::Zero(steps + 1, m);
    for (int j = 0; j < m; ++j) {
        StepCoefficients sc(sd.lambda[j], dt);
        double a = 0.0, ad = 0.0;
        for (int i = 0; i < steps; ++i) {
            double f0 = i == 1 ? 1.0 : 0.0;
            double f1 = i + 1 == 1 ? 1.0 : 0.0;
            sc.step(a, ad, f0, f1);
            r(i + 1, j) = a;
        }
    }
    return r;
}

// Conserved energy |u_t|^2_M + <K u, u> of the homogeneous equation, in modal form.
inline double modal_energy(const SpectralDecomposition& sd, const VecC& a, const VecC& ad)
{
    double e = 0.0;
    for (int j = 0; j < sd.size(); ++j)
        e += std::norm(ad[j]) + sd.lambda[j] * std::norm(a[j]);
    return e;
}

inline double norm_M(const VecD& M, const VecC& u) { return std::sqrt((u.cwiseAbs2().array() * M.array()).sum()); }

// Fraction of |u^f(t)|_M lying outside the domain of influence of the source's spatial support.
inline double finite_speed_leakage(const SpectralDecomposition& sd, const ConformalMetric& metric, const Source& f, double t)
{
    if (t < 0.0)
        throw ConfigError("time must be non-negative");
    if (t == 0.0)
        return 0.0;
    auto w = solve_cauchy(sd, f, t);
    const double total = norm_M(sd.M, w.u);
    if (total == 0.0)
        return 0.0;
    auto supp = IndicatorSet::from_flags(f.mask, sd.M);
    auto dom = domain_of_influence(sd.grid, metric, supp, t);
    VecC out = w.u;
    for (int i = 0; i < sd.grid.nodes(); ++i)
        if (dom.contains(i))
            out[i] = 0.0;
    return norm_M(sd.M, out) / total;
}

// C^2 cosine bump ((1 + cos(pi u)) / 2)^2 on |u| < 1.
inline double bump(double u)
{
    u = std::abs(u);
    if (u >= 1.0)
        return 0.0;
    const double c = 0.5 * (1.0 + std::cos(M_PI * u));
    return c * c;
}

// Spatial bump of chart half-width w around a chart point.
inline VecC spatial_bump(const PeriodicGrid& g, std::array<double, 2> centre, double w)
{
    VecC s(g.nodes());
    for (int i = 0; i < g.nodes(); ++i)
        s[i] = bump(g.flat_distance(g.position(i), centre) / w);
    return s;
}

// Temporal bump sampled on t_i = i dt, i = 0..steps, cut to [lo, hi].
inline VecC temporal_bump(double dt, int steps, double tc, double w, double lo = 0.0,
                          double hi = std::numeric_limits<double>::infinity())
{
    VecC b(steps + 1);
    for (int i = 0; i <= steps; ++i) {
        double t = i * dt;
        b[i] = (t < lo - 1e-12 || t > hi + 1e-12) ? 0.0 : bump((t - tc) / w);
    }
    b[0] = 0.0;
    return b;
}

} // namespace bcm
