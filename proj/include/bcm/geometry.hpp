#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <vector>

#include "bcm/grid.hpp"

namespace bcm {

// First-order fast marching for |grad d|_g = 1, i.e. |grad d| = rho in the chart.
// In 1-D this is Dijkstra with edge length h * mean(rho), which is exact.
// Nodes with finite initial values act as sources with those arrival times.
inline VecD fast_march(const PeriodicGrid& grid, const ConformalMetric& metric, const VecD& initial)
{
    metric.validate(grid);
    const int n = grid.nodes();
    if (initial.size() != n)
        throw ConfigError("initial values do not match grid");
    const double inf = std::numeric_limits<double>::infinity();
    VecD d = VecD::Constant(n, inf);
    std::vector<char> done(static_cast<std::size_t>(n), 0);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    for (int i = 0; i < n; ++i)
        if (std::isfinite(initial[i])) {
            d[i] = initial[i];
            heap.push({d[i], i});
        }
    if (heap.empty())
        throw ConfigError("empty seed set");

    auto update = [&](int v) {
        if (grid.dim() == 1) {
            const double h = grid.spacing(0);
            double best = d[v];
            for (int step : {-1, 1}) {
                int u = grid.neighbor(v, 0, step);
                if (done[static_cast<std::size_t>(u)])
                    best = std::min(best, d[u] + h * 0.5 * (metric.rho[u] + metric.rho[v]));
            }
            return best;
        }
        // Upwind values per axis from accepted neighbours.
        double a[2];
        for (int ax = 0; ax < 2; ++ax) {
            a[ax] = inf;
            for (int step : {-1, 1}) {
                int u = grid.neighbor(v, ax, step);
                if (done[static_cast<std::size_t>(u)])
                    a[ax] = std::min(a[ax], d[u]);
            }
        }
        const double r = metric.rho[v];
        const double hx = grid.spacing(0), hy = grid.spacing(1);
        double best = std::min(a[0] + r * hx, a[1] + r * hy);
        if (std::isfinite(a[0]) && std::isfinite(a[1])) {
            // ((t-a0)/hx)^2 + ((t-a1)/hy)^2 = r^2
            const double wx = 1.0 / (hx * hx), wy = 1.0 / (hy * hy);
            const double A = wx + wy;
            const double B = -2.0 * (a[0] * wx + a[1] * wy);
            const double C = a[0] * a[0] * wx + a[1] * a[1] * wy - r * r;
            const double disc = B * B - 4.0 * A * C;
            if (disc >= 0.0) {
                double t = (-B + std::sqrt(disc)) / (2.0 * A);
                if (t >= std::max(a[0], a[1]))
                    best = std::min(best, t);
            }
        }
        return std::min(best, d[v]);
    };

    while (!heap.empty()) {
        auto [dist, v] = heap.top();
        heap.pop();
        if (done[static_cast<std::size_t>(v)] || dist > d[v])
            continue;
        done[static_cast<std::size_t>(v)] = 1;
        for (int ax = 0; ax < grid.dim(); ++ax)
            for (int step : {-1, 1}) {
                int u = grid.neighbor(v, ax, step);
                if (done[static_cast<std::size_t>(u)])
                    continue;
                double t = update(u);
                if (t < d[u]) {
                    d[u] = t;
                    heap.push({t, u});
                }
            }
    }
    return d;
}

inline VecD geodesic_distance_field(const PeriodicGrid& grid, const ConformalMetric& metric, const IndicatorSet& seed)
{
    if (seed.size() != grid.nodes())
        throw ConfigError("seed set does not match grid");
    if (seed.empty())
        throw ConfigError("empty seed set");
    VecD init = VecD::Constant(grid.nodes(), std::numeric_limits<double>::infinity());
    for (int i : seed.members())
        init[i] = 0.0;
    return fast_march(grid, metric, init);
}

// Distance from an off-grid chart point. Constant metrics are handled exactly (periodic images);
// otherwise nodes within two cells are initialized with local flat distances and marched outward.
inline VecD distance_from_point(const PeriodicGrid& grid, const ConformalMetric& metric, std::array<double, 2> p)
{
    metric.validate(grid);
    const int n = grid.nodes();
    VecD d(n);
    if (metric.is_constant()) {
        for (int i = 0; i < n; ++i)
            d[i] = metric.rho[0] * grid.flat_distance(grid.position(i), p);
        return d;
    }
    const int c = grid.nearest(p[0], p[1]);
    const double rc = metric.rho[c];
    VecD init = VecD::Constant(n, std::numeric_limits<double>::infinity());
    for (int i = 0; i < n; ++i) {
        double fd = grid.flat_distance(grid.position(i), p);
        if (fd <= 2.0 * grid.h())
            init[i] = 0.5 * (rc + metric.rho[i]) * fd;
    }
    return fast_march(grid, metric, init);
}

inline VecD distance_from_node(const PeriodicGrid& grid, const ConformalMetric& metric, int node)
{
    return geodesic_distance_field(grid, metric, IndicatorSet::single(grid.nodes(), node, metric.volumes(grid)));
}

inline double set_measure(const PeriodicGrid& grid, const ConformalMetric& metric, const IndicatorSet& s)
{
    double m = 0.0;
    for (int i : s.members())
        m += metric.volume(grid, i);
    return m;
}

// Nodes with d <= radius + h/2 (closed set, half-cell rule).
inline IndicatorSet sublevel_set(const PeriodicGrid& grid, const ConformalMetric& metric, const VecD& d, double radius)
{
    const double tol = 0.5 * grid.h() * metric.rho.maxCoeff() * (1.0 + 1e-12);
    std::vector<char> f(static_cast<std::size_t>(grid.nodes()));
    for (int i = 0; i < grid.nodes(); ++i)
        f[static_cast<std::size_t>(i)] = d[i] <= radius + tol ? 1 : 0;
    return IndicatorSet::from_flags(std::move(f), metric.volumes(grid));
}

// Nodes with d < radius (open set).
inline IndicatorSet open_sublevel_set(const PeriodicGrid& grid, const ConformalMetric& metric, const VecD& d, double radius)
{
    std::vector<char> f(static_cast<std::size_t>(grid.nodes()));
    for (int i = 0; i < grid.nodes(); ++i)
        f[static_cast<std::size_t>(i)] = d[i] < radius ? 1 : 0;
    return IndicatorSet::from_flags(std::move(f), metric.volumes(grid));
}

inline IndicatorSet domain_of_influence(const PeriodicGrid& grid, const ConformalMetric& metric, const IndicatorSet& y, double s)
{
    if (s < 0.0)
        throw ConfigError("domain of influence needs s >= 0");
    return sublevel_set(grid, metric, geodesic_distance_field(grid, metric, y), s);
}

inline IndicatorSet closed_ball(const PeriodicGrid& grid, const ConformalMetric& metric, int center, double r)
{
    return sublevel_set(grid, metric, distance_from_node(grid, metric, center), r);
}

// Closed ball around an off-grid chart point; only meaningful for constant rho (flat tori).
inline IndicatorSet flat_ball(const PeriodicGrid& grid, const ConformalMetric& metric, std::array<double, 2> center, double r)
{
    if (!metric.is_constant(1e-12))
        throw ConfigError("off-grid balls need a flat metric");
    const double c = metric.rho[0];
    const double tol = 0.5 * grid.h() * c * (1.0 + 1e-12);
    std::vector<char> f(static_cast<std::size_t>(grid.nodes()));
    for (int i = 0; i < grid.nodes(); ++i)
        f[static_cast<std::size_t>(i)] = c * grid.flat_distance(grid.position(i), center) <= r + tol ? 1 : 0;
    return IndicatorSet::from_flags(std::move(f), metric.volumes(grid));
}

inline IndicatorSet set_union(const IndicatorSet& a, const IndicatorSet& b, const VecD& volumes)
{
    std::vector<char> f(a.flags());
    for (int i = 0; i < a.size(); ++i)
        f[static_cast<std::size_t>(i)] = a.contains(i) || b.contains(i);
    return IndicatorSet::from_flags(std::move(f), volumes);
}

inline IndicatorSet set_minus(const IndicatorSet& a, const IndicatorSet& b, const VecD& volumes)
{
    std::vector<char> f(a.flags());
    for (int i = 0; i < a.size(); ++i)
        f[static_cast<std::size_t>(i)] = a.contains(i) && !b.contains(i);
    return IndicatorSet::from_flags(std::move(f), volumes);
}

inline IndicatorSet set_intersection(const IndicatorSet& a, const IndicatorSet& b, const VecD& volumes)
{
    std::vector<char> f(a.flags());
    for (int i = 0; i < a.size(); ++i)
        f[static_cast<std::size_t>(i)] = a.contains(i) && b.contains(i);
    return IndicatorSet::from_flags(std::move(f), volumes);
}

// Fraction of the cell around a node lying in {d <= sigma}, linear in d across one cell.
inline double cell_coverage(double d, double sigma, double cell)
{
    return std::clamp((sigma - d) / cell + 0.5, 0.0, 1.0);
}

// Largest pairwise chart distance between members (flat metric).
inline double set_diameter(const PeriodicGrid& grid, const IndicatorSet& s)
{
    auto m = s.members();
    double best = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = i + 1; j < m.size(); ++j)
            best = std::max(best, grid.flat_distance(grid.position(m[i]), grid.position(m[j])));
    return best;
}

struct ZDelta {
    IndicatorSet set;           // M(Y_delta, s + delta) minus M(Y_eps, s), half-cell membership
    double measure = 0.0;       // fractional-coverage g-measure of the crescent
    double node_measure = 0.0;  // plain sum of member volumes
    IndicatorSet y_delta;       // the small observation ball
    IndicatorSet y_eps;         // the fixed outer observation ball
    double s = 0.0;             // d(x0, y)
    double delta = 0.0;
    double eps = 0.0;
};

// Chart geometry of the straight segment from y to x0 on a flat torus.
struct FlatRay {
    std::array<double, 2> y{};
    std::array<double, 2> dir{};  // unit chart direction from y towards x0
    double chart_length = 0.0;
    double s = 0.0;               // g-length
};

inline FlatRay flat_ray(const PeriodicGrid& grid, const ConformalMetric& metric, int x0, int y)
{
    if (!metric.is_constant(1e-12))
        throw ConfigError("crescent construction needs a flat metric");
    auto px = grid.position(x0), py = grid.position(y);
    FlatRay r;
    r.y = py;
    double len2 = 0.0;
    for (int a = 0; a < grid.dim(); ++a) {
        double d = grid.periodic_delta(py[a], px[a], a);
        // A displacement of exactly half a period has two minimizers: y sits on the cut locus of x0.
        if (std::abs(std::abs(d) - 0.5 * grid.length(a)) < 0.5 * grid.spacing(a))
            throw ConfigError("y lies on the cut locus of x0");
        r.dir[a] = d;
        len2 += d * d;
    }
    r.chart_length = std::sqrt(len2);
    if (r.chart_length <= 0.0)
        throw ConfigError("x0 and y coincide");
    for (int a = 0; a < grid.dim(); ++a)
        r.dir[a] /= r.chart_length;
    r.s = metric.rho[0] * r.chart_length;
    return r;
}

// Default outer radius min((d(y, boundary of X) - h)/2, s/4). The ball Y_eps sits at distance eps behind y
// and its half-cell closure reaches 2 eps + h/2 from y, which the one-cell margin keeps inside X.
inline double default_crescent_eps(const PeriodicGrid& grid, const ConformalMetric& metric, const IndicatorSet& X, int x0, int y)
{
    std::vector<char> outside(static_cast<std::size_t>(grid.nodes()));
    for (int i = 0; i < grid.nodes(); ++i)
        outside[static_cast<std::size_t>(i)] = X.contains(i) ? 0 : 1;
    auto out = IndicatorSet::from_flags(std::move(outside), metric.volumes(grid));
    double dy = out.empty() ? std::numeric_limits<double>::infinity()
                            : geodesic_distance_field(grid, metric, out)[y];
    FlatRay ray = flat_ray(grid, metric, x0, y);
    return std::min(0.5 * (dy - grid.h() * metric.rho[y]), 0.25 * ray.s);
}

inline ZDelta z_delta(const PeriodicGrid& grid, const ConformalMetric& metric, const IndicatorSet& X, int x0, int y,
                      double eps, double delta)
{
    if (!(delta > 0.0) || !(eps > 0.0))
        throw ConfigError("crescent radii must be positive");
    if (delta > eps)
        throw ConfigError("delta must not exceed eps");
    if (!X.contains(y))
        throw ConfigError("y must lie in the observation set");
    FlatRay ray = flat_ray(grid, metric, x0, y);
    const double c = metric.rho[0];
    const VecD vol = metric.volumes(grid);

    auto centre = [&](double back) {
        std::array<double, 2> p = ray.y;
        for (int a = 0; a < grid.dim(); ++a)
            p[a] -= back / c * ray.dir[a];
        return p;
    };
    ZDelta z;
    z.s = ray.s;
    z.delta = delta;
    z.eps = eps;
    z.y_eps = flat_ball(grid, metric, centre(eps), eps);
    if (!z.y_eps.subset_of(X))
        throw ConfigError("observation ball not contained in X");
    z.y_delta = flat_ball(grid, metric, centre(delta), delta);

    const VecD d1 = geodesic_distance_field(grid, metric, z.y_delta);
    const VecD d2 = geodesic_distance_field(grid, metric, z.y_eps);
    const double s1 = ray.s + delta, s2 = ray.s;
    auto m1 = sublevel_set(grid, metric, d1, s1);
    auto m2 = sublevel_set(grid, metric, d2, s2);
    z.set = set_minus(m1, m2, vol);
    z.node_measure = z.set.measure();
    const double cell = grid.h() * c;
    double m = 0.0;
    for (int i = 0; i < grid.nodes(); ++i) {
        double w = cell_coverage(d1[i], s1, cell) * (1.0 - cell_coverage(d2[i], s2, cell));
        m += w * vol[i];
    }
    z.measure = m;
    if (!(m > 0.0))
        throw ComputeError("crescent has zero measure");
    return z;
}

inline std::vector<double> delta_ladder(double eps, int levels = 5)
{
    std::vector<double> out;
    for (int k = 0; k < levels; ++k)
        out.push_back(eps * std::ldexp(1.0, -k));
    return out;
}

// Cut time of a straight geodesic on the flat torus R^2 / (L0 Z x L1 Z) with direction xi:
// half the length of the shortest lattice vector's projection argument, computed by enumeration.
// tau = min over nonzero lattice vectors v with <v, xi> > 0 of |v|^2 / (2 <v, xi>).
inline double flat_torus_cut_time(double l0, double l1, std::array<double, 2> xi, int range = 8)
{
    double nrm = std::hypot(xi[0], xi[1]);
    xi = {xi[0] / nrm, xi[1] / nrm};
    double best = std::numeric_limits<double>::infinity();
    for (int a = -range; a <= range; ++a)
        for (int b = -range; b <= range; ++b) {
            if (a == 0 && b == 0)
                continue;
            double v0 = a * l0, v1 = b * l1;
            double p = v0 * xi[0] + v1 * xi[1];
            if (p <= 1e-14)
                continue;
            best = std::min(best, (v0 * v0 + v1 * v1) / (2.0 * p));
        }
    return best;
}

} // namespace bcm
