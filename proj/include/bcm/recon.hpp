#pragma once

#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bcm/control.hpp"

namespace bcm {

using Point = std::array<double, 2>;

// ---------------------------------------------------------------------------------------------
// Distances between observation points

struct DistanceEstimate {
    double value = 0.0;
    double uncertainty = 0.0;
    double onset = 0.0;  // time of the first prominent peak of the receiver rate
};

// Arrival time of a pulse from B(x, eps) at the observation node nearest y. The pulse is a bump of
// half-width eps in space and time centred at t = eps; its time derivative at the receiver peaks when
// the wave front has travelled d(x, y), so the first prominent peak of |d/dt Lambda| minus eps is the
// estimate. Spatial and temporal smearing are both bounded by eps, hence the reported 2 eps + 3h.
inline DistanceEstimate boundary_distance(S2SOperator& s2s, Point x, Point y, double eps, double peak_level = 0.5)
{
    const auto& g = s2s.grid();
    if (!(eps > 0.0))
        throw ConfigError("epsilon must be positive");
    if (!(peak_level > 0.0 && peak_level <= 1.0))
        throw ConfigError("peak level must lie in (0, 1]");
    const int N = s2s.steps();
    const double dt = s2s.dt();
    SpatialProfile p = SpatialProfile::from_dense(spatial_bump(g, x, eps), {}, 0.0);
    for (int node : p.nodes)
        if (!s2s.X().contains(node))
            throw ConfigError("B(x, eps) is not contained in X");
    const int ry = g.nearest(y[0], y[1]);
    if (!s2s.X().contains(ry))
        throw ConfigError("y is not an observation node");
    const double tw = std::max(eps, 2.0 * dt);
    Atom a{s2s.acquire(p), temporal_bump(dt, 2 * N, tw, tw)};
    MatC tr = s2s.trace(a);
    const int k = s2s.X().local(ry);
    VecD rate = VecD::Zero(2 * N + 1);
    for (int i = 1; i < 2 * N; ++i)
        rate[i] = std::abs(tr(i + 1, k) - tr(i - 1, k)) / (2.0 * dt);
    const double top = rate.maxCoeff();
    if (!(top > 0.0))
        throw ComputeError("no arrival within the horizon; increase horizon");
    for (int i = 1; i < 2 * N - 1; ++i) {
        if (rate[i] < peak_level * top || rate[i] < rate[i - 1] || rate[i] < rate[i + 1])
            continue;
        // Parabolic refinement of the peak position.
        const double den = rate[i - 1] - 2.0 * rate[i] + rate[i + 1];
        const double shift = den != 0.0 ? 0.5 * (rate[i - 1] - rate[i + 1]) / den : 0.0;
        DistanceEstimate e;
        e.onset = (i + shift) * dt;
        e.value = std::max(0.0, e.onset - tw);
        e.uncertainty = 2.0 * eps + 3.0 * g.h();
        return e;
    }
    throw ComputeError("no arrival within the horizon; increase horizon");
}

// ---------------------------------------------------------------------------------------------
// Inclusion engines: the data route decides inclusions from traces, the oracle route from distance fields.

class InclusionEngine {
public:
    virtual ~InclusionEngine() = default;
    virtual InclusionReport test(Point x, double lx, Point y, double ly, Point z, double lz, double eps) = 0;
    virtual const PeriodicGrid& grid() const = 0;
    virtual bool in_X(int node) const = 0;
    virtual double chart_speed(Point p) const = 0;  // rho at p, to convert g-lengths into chart lengths
    virtual double max_radius() const = 0;
    virtual std::string name() const = 0;
};

class DataInclusionEngine : public InclusionEngine {
public:
    DataInclusionEngine(S2SOperator& s2s, const ConformalMetric& metric_on_X, InclusionSettings cfg = {})
        : s2s_(s2s), metric_(metric_on_X), cfg_(cfg)
    {
    }
    InclusionReport test(Point x, double lx, Point y, double ly, Point z, double lz, double eps) override
    {
        return ball_inclusion_test(s2s_, x, lx, y, ly, z, lz, eps, cfg_);
    }
    const PeriodicGrid& grid() const override { return s2s_.grid(); }
    bool in_X(int node) const override { return s2s_.X().contains(node); }
    // The metric on X is recoverable from traces (boundary distances); it is passed in directly.
    double chart_speed(Point p) const override { return metric_.rho[grid().nearest(p[0], p[1])]; }
    double max_radius() const override { return s2s_.T(); }
    std::string name() const override { return "data"; }

private:
    S2SOperator& s2s_;
    ConformalMetric metric_;
    InclusionSettings cfg_;
};

// Geometric inclusion of balls using the model's distance fields: the verdict quantity is the
// largest excess max_{d_x <= l_x} min(d_y - l_y, d_z - l_z), compared against tol.
class OracleInclusionEngine : public InclusionEngine {
public:
    OracleInclusionEngine(PeriodicGrid grid, ConformalMetric metric, IndicatorSet X, double tol)
        : grid_(std::move(grid)), metric_(std::move(metric)), X_(std::move(X)), tol_(tol)
    {
    }
    InclusionReport test(Point x, double lx, Point y, double ly, Point z, double lz, double) override
    {
        const VecD& dx = field(x);
        const VecD& dy = field(y);
        const VecD& dz = field(z);
        double excess = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < grid_.nodes(); ++i)
            if (dx[i] <= lx)
                excess = std::max(excess, std::min(dy[i] - ly, dz[i] - lz));
        InclusionReport r;
        r.span_residual = r.per_atom_residual = std::max(0.0, excess);
        r.theta = tol_;
        r.included = excess <= tol_;
        return r;
    }
    const PeriodicGrid& grid() const override { return grid_; }
    bool in_X(int node) const override { return X_.contains(node); }
    double chart_speed(Point p) const override { return metric_.rho[grid_.nearest(p[0], p[1])]; }
    double max_radius() const override { return std::numeric_limits<double>::infinity(); }
    std::string name() const override { return "oracle"; }

private:
    const VecD& field(Point p)
    {
        auto key = std::make_pair(p[0], p[1]);
        auto it = cache_.find(key);
        if (it == cache_.end())
            it = cache_.emplace(key, distance_from_point(grid_, metric_, p)).first;
        return it->second;
    }
    PeriodicGrid grid_;
    ConformalMetric metric_;
    IndicatorSet X_;
    double tol_;
    std::map<std::pair<double, double>, VecD> cache_;
};

// gamma(t) = y + t xi / (rho |xi|) in the chart; valid while the metric is constant along the segment.
inline Point geodesic_point(const InclusionEngine& e, Point y, Point xi, double t)
{
    const double nrm = std::hypot(xi[0], e.grid().dim() == 2 ? xi[1] : 0.0);
    if (!(nrm > 0.0))
        throw ConfigError("direction must be non-zero");
    const double c = e.chart_speed(y);
    Point p = y;
    p[0] += t * xi[0] / (nrm * c);
    if (e.grid().dim() == 2)
        p[1] += t * xi[1] / (nrm * c);
    return p;
}

inline void check_segment_in_X(const InclusionEngine& e, Point y, Point xi, double s)
{
    const int samples = std::max(2, static_cast<int>(std::ceil(s / (0.25 * e.grid().h()))));
    for (int k = 0; k <= samples; ++k) {
        Point p = geodesic_point(e, y, xi, s * k / samples);
        if (!e.in_X(e.grid().nearest(p[0], p[1])))
            throw ConfigError("probe geodesic leaves X");
    }
}

struct ScanStep {
    double radius = 0.0;
    double residual = 0.0;
    bool included = false;
};

struct CutTimeResult {
    double tau = std::numeric_limits<double>::infinity();  // +inf when no scan point passes
    std::vector<ScanStep> scan;
};

// tau(y, xi) = inf { s + r : B(gamma(s), r + eps) is inside the closed ball B(y, s + r) }, over r_grid.
// With coarse_stride > 1 the grid is visited with that stride first; since the verdict is monotone in r,
// the first passing coarse point is then refined by bisection down to the grid step.
inline CutTimeResult cut_time(InclusionEngine& e, Point y, Point xi, double s_probe, const std::vector<double>& r_grid,
                              double eps, int coarse_stride = 1)
{
    if (!(s_probe > 0.0))
        throw ConfigError("probe length must be positive");
    check_segment_in_X(e, y, xi, s_probe);
    const Point x = geodesic_point(e, y, xi, s_probe);
    std::vector<double> rs;
    for (double r : r_grid)
        if (r >= 0.0 && s_probe + r <= e.max_radius() + 1e-12 && r + eps <= e.max_radius() + 1e-12)
            rs.push_back(r);
    CutTimeResult res;
    auto verdict = [&](std::size_t k) {
        InclusionReport rep = e.test(x, rs[k] + eps, y, s_probe + rs[k], y, s_probe + rs[k], eps);
        res.scan.push_back({rs[k], rep.span_residual, rep.included});
        return rep.included;
    };
    const std::size_t stride = static_cast<std::size_t>(std::max(1, coarse_stride));
    std::size_t last_fail = 0;
    bool any_fail = false;
    for (std::size_t k = 0; k < rs.size(); k += stride) {
        if (!verdict(k)) {
            last_fail = k;
            any_fail = true;
            continue;
        }
        std::size_t lo = last_fail, hi = k;
        if (!any_fail) {
            res.tau = s_probe + rs[k];
            return res;
        }
        while (hi - lo > 1) {
            std::size_t mid = (lo + hi) / 2;
            if (verdict(mid))
                hi = mid;
            else
                lo = mid;
        }
        res.tau = s_probe + rs[hi];
        return res;
    }
    // The coarse pass may have skipped the tail of the grid.
    if (!rs.empty() && (rs.size() - 1) % stride != 0 && verdict(rs.size() - 1)) {
        std::size_t lo = last_fail, hi = rs.size() - 1;
        while (hi - lo > 1) {
            std::size_t mid = (lo + hi) / 2;
            if (verdict(mid))
                hi = mid;
            else
                lo = mid;
        }
        res.tau = s_probe + rs[hi];
    }
    return res;
}

inline std::vector<double> uniform_grid(double lo, double hi, double step)
{
    std::vector<double> out;
    for (int k = 0; lo + k * step <= hi + 1e-12; ++k)
        out.push_back(lo + k * step);
    return out;
}

// ---------------------------------------------------------------------------------------------
// Hidden-point distances and travel time data

struct HiddenDistance {
    bool ok = false;
    double value = std::numeric_limits<double>::quiet_NaN();
    std::string status;
    std::vector<ScanStep> scan;
};

// d(gamma(r), x) = inf { R : B(gamma(s_split), r - s_split + eps) inside closure(B(y, r) u B(x, R)) }.
// The verdict is monotone in R, so the scan checks R_max first and then bisects the grid.
inline HiddenDistance hidden_distance(InclusionEngine& e, Point y, Point xi, double r, Point x, double s_split, double eps,
                                      const std::vector<double>& R_grid,
                                      double tau = std::numeric_limits<double>::infinity())
{
    if (!(r < tau))
        throw ConfigError("r is beyond the cut time");
    if (!(s_split > 0.0 && s_split < r))
        throw ConfigError("split point must satisfy 0 < s < r");
    if (R_grid.empty())
        throw ConfigError("empty R grid");
    check_segment_in_X(e, y, xi, s_split);
    if (!e.in_X(e.grid().nearest(x[0], x[1])))
        throw ConfigError("x must lie in X");
    const Point z = geodesic_point(e, y, xi, s_split);
    const double lz = r - s_split + eps;
    HiddenDistance out;
    auto probe = [&](std::size_t k) {
        InclusionReport rep = e.test(z, lz, y, r, x, R_grid[k], eps);
        out.scan.push_back({R_grid[k], rep.span_residual, rep.included});
        return rep.included;
    };
    std::size_t hi = R_grid.size() - 1;
    if (!probe(hi)) {
        out.status = "inclusion fails even at R_max";
        return out;
    }
    if (probe(0)) {
        out.ok = true;
        out.value = R_grid[0];
        out.status = "ok";
        return out;
    }
    std::size_t lo = 0;
    while (hi - lo > 1) {
        std::size_t mid = (lo + hi) / 2;
        if (probe(mid))
            hi = mid;
        else
            lo = mid;
    }
    out.ok = true;
    out.value = R_grid[hi];
    out.status = "ok";
    return out;
}

struct FanEntry {
    Point y{};
    Point xi{};
    double r = 0.0;
    double s_split = 0.0;
};

struct TravelTimeFunction {
    FanEntry entry;
    std::vector<int> nodes;      // observation nodes of U
    std::vector<double> values;  // d(gamma(r), node), NaN where unresolved
    std::vector<std::string> status;
    bool complete() const
    {
        for (double v : values)
            if (!std::isfinite(v))
                return false;
        return true;
    }
};

inline std::vector<TravelTimeFunction> travel_time_data(InclusionEngine& e, const std::vector<FanEntry>& fan,
                                                        const std::vector<int>& obs_nodes, double eps,
                                                        const std::vector<double>& R_grid)
{
    std::vector<TravelTimeFunction> out;
    for (const auto& f : fan) {
        TravelTimeFunction t;
        t.entry = f;
        for (int node : obs_nodes) {
            t.nodes.push_back(node);
            try {
                auto hd = hidden_distance(e, f.y, f.xi, f.r, e.grid().position(node), f.s_split, eps, R_grid);
                t.values.push_back(hd.value);
                t.status.push_back(hd.status);
            } catch (const std::exception& ex) {
                t.values.push_back(std::numeric_limits<double>::quiet_NaN());
                t.status.push_back(ex.what());
            }
        }
        out.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Localization and metric fit

// Estimate of the hidden point p from r = d(p, .) near z on a flat chart: p = z - r(z) grad_g r(z).
// Returns nothing when the smoothness gate rejects z (second differences above 1/h).
inline std::optional<Point> localize_from_travel_time(const PeriodicGrid& g, const VecD& r, int z, double rho_z)
{
    if (r.size() != g.nodes())
        throw ConfigError("travel time field does not match grid");
    Point grad{0.0, 0.0};
    for (int ax = 0; ax < g.dim(); ++ax) {
        const double hs = g.spacing(ax);
        const double rp = r[g.neighbor(z, ax, 1)], rm = r[g.neighbor(z, ax, -1)];
        if (!std::isfinite(rp) || !std::isfinite(rm) || !std::isfinite(r[z]))
            return std::nullopt;
        const double second = (rp - 2.0 * r[z] + rm) / (hs * hs);
        // A kink in r (cut locus or the source itself) shows up as |r''| of order 2 / h.
        if (std::abs(second) > 1.0 / hs)
            return std::nullopt;
        grad[static_cast<std::size_t>(ax)] = (rp - rm) / (2.0 * hs);
    }
    // Raising the index with g = rho^2 delta gives chart vector grad / rho^2.
    Point p = g.position(z);
    for (int ax = 0; ax < g.dim(); ++ax)
        p[static_cast<std::size_t>(ax)] -= r[z] * grad[static_cast<std::size_t>(ax)] / (rho_z * rho_z);
    return p;
}

// Least squares fit of the inverse metric from unit covectors: g^{ij} w_i w_j = 1.
inline MatD recover_metric_at_point(int dim, const std::vector<Point>& covectors)
{
    if (dim != 1 && dim != 2)
        throw ConfigError("dimension must be 1 or 2");
    const int unknowns = dim == 1 ? 1 : 3;
    if (static_cast<int>(covectors.size()) < unknowns)
        throw ConfigError("cone not open: too few covectors");
    MatD A(static_cast<Eigen::Index>(covectors.size()), unknowns);
    for (std::size_t k = 0; k < covectors.size(); ++k) {
        const auto& w = covectors[k];
        const auto i = static_cast<Eigen::Index>(k);
        if (dim == 1) {
            A(i, 0) = w[0] * w[0];
        } else {
            A(i, 0) = w[0] * w[0];
            A(i, 1) = 2.0 * w[0] * w[1];
            A(i, 2) = w[1] * w[1];
        }
    }
    Eigen::JacobiSVD<MatD> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VecD& sv = svd.singularValues();
    if (!(sv[sv.size() - 1] > 1e-8 * sv[0]))
        throw ConfigError("cone not open: covectors do not determine the metric");
    VecD x = svd.solve(VecD::Ones(A.rows()));
    MatD G(dim, dim);
    if (dim == 1)
        G(0, 0) = x[0];
    else
        G << x[0], x[1], x[1], x[2];
    Eigen::SelfAdjointEigenSolver<MatD> es(G);
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw ComputeError("fitted inverse metric is not positive definite");
    return G;
}

// ---------------------------------------------------------------------------------------------
// Cut-off inner products and pointwise products

struct CutoffBasisDesign {
    int space_stride = 1;
    int time_stride = 1;
    int max_atoms = 0;  // when positive, the spatial stride is raised until the basis fits
    double mu_rel = 1e-6;
};

// Nodal point sources in Y with time hats at t_i whose support (t_i - dt, t_i + dt) lies in (T - sigma, T].
inline std::vector<Atom> cutoff_basis(S2SOperator& s2s, const IndicatorSet& Y, double sigma, const CutoffBasisDesign& d = {})
{
    const int N = s2s.steps();
    const double dt = s2s.dt(), T = s2s.T();
    auto nodes = Y.members();
    if (nodes.empty())
        throw ConfigError("empty control set");
    const int ts = std::max(1, d.time_stride);
    int stride = std::max(1, d.space_stride);
    if (d.max_atoms > 0) {
        int hats = 0;
        for (int i = N - 1; i >= 1 && i * dt - dt > T - sigma + 1e-12; i -= ts)
            ++hats;
        while (stride < static_cast<int>(nodes.size()) &&
               static_cast<long>((nodes.size() + static_cast<std::size_t>(stride) - 1) / static_cast<std::size_t>(stride)) * hats > d.max_atoms)
            ++stride;
    }
    std::vector<SpatialProfile> profiles;
    for (std::size_t k = 0; k < nodes.size(); k += static_cast<std::size_t>(stride))
        profiles.push_back(SpatialProfile::point(nodes[k], s2s.volumes_on_X()[s2s.X().local(nodes[k])]));
    for (const auto& p : profiles)
        if (!s2s.X().contains(p.nodes[0]))
            throw ConfigError("control set is not contained in X");
    std::vector<int> ids = s2s.acquire(profiles);
    std::vector<Atom> atoms;
    for (int id : ids)
        for (int i = N - 1; i >= 1; i -= ts) {
            if (!(i * dt - dt > T - sigma + 1e-12))
                break;
            VecC b = VecC::Zero(N + 1);
            b[i] = 1.0;
            atoms.push_back({id, b});
        }
    if (atoms.empty())
        throw ConfigError("control window too short for the time grid");
    return atoms;
}

struct CutoffState {
    std::vector<Atom> basis;
    GramMatrix gram;
    ControlSolution control;
};

// Approximates 1_{M(Y, sigma)} u^f(T) by a combination of waves from (T - sigma, T] x Y.
inline CutoffState cutoff_state(S2SOperator& s2s, const Atom& f, const IndicatorSet& Y, double sigma,
                                const CutoffBasisDesign& d = {})
{
    CutoffState st;
    st.basis = cutoff_basis(s2s, Y, sigma, d);
    st.gram = assemble_gram(s2s, st.basis);
    st.control = approximate_cutoff_control(s2s, f, st.basis, st.gram.default_mu(d.mu_rel), &st.gram);
    return st;
}

// <w1, w2> for two approximated cut-off states.
inline cplx cutoff_pair(const S2SOperator& s2s, const CutoffState& a, const CutoffState& b)
{
    MatC B12 = blago_matrix(s2s, a.basis, b.basis);
    return (a.control.coef.transpose() * B12 * b.control.coef.conjugate())(0, 0);
}

// <w, u^h> for an approximated cut-off state.
inline cplx cutoff_against(const S2SOperator& s2s, const CutoffState& a, const Atom& h)
{
    VecC c = blago_matrix(s2s, a.basis, {h}).col(0);
    return (a.control.coef.transpose() * c)(0, 0);
}

struct CutoffInner {
    cplx nested;      // <1_{M(Y,s)} u^f, 1_{M(Yh,sh)} u^h>
    cplx difference;  // <1_{M(Y,s) \ M(Yh,sh)} u^f, u^h>  (the M(Y,s) part of u^f minus its overlap)
    cplx plain;       // <1_{M(Y,s)} u^f, u^h>
};

inline CutoffInner cutoff_inner(S2SOperator& s2s, const Atom& f, const Atom& h, const IndicatorSet& Y, double s,
                                const IndicatorSet& Yh, double sh, const CutoffBasisDesign& d = {})
{
    if (!(s > 0.0 && s <= s2s.T() + 1e-12 && sh > 0.0 && sh <= s2s.T() + 1e-12))
        throw ConfigError("cut-off radii must lie in (0, T]");
    CutoffState wf = cutoff_state(s2s, f, Y, s, d);
    CutoffState wh = cutoff_state(s2s, h, Yh, sh, d);
    CutoffInner out;
    out.plain = cutoff_against(s2s, wf, h);
    out.nested = cutoff_pair(s2s, wf, wh);
    out.difference = out.plain - out.nested;
    return out;
}

struct ProductSettings {
    double eps = 0.0;             // 0 selects min(d(y, boundary X)/2, s/4)
    int levels = 5;
    double min_delta_cells = 2.0; // ladder entries below this many cells are dropped
    double cauchy_tol = 0.1;      // relative jump allowed between the two finest quotients
    CutoffBasisDesign outer{};    // basis for the fixed ball Y_eps
    CutoffBasisDesign inner{};    // basis for the shrinking balls Y_delta
};

struct ProductResult {
    cplx value;
    bool from_trace = false;
    double eps = 0.0;
    std::vector<double> deltas;
    std::vector<cplx> quotients;
    std::vector<double> measures;
};

// u^f(T, x0) conj(u^h(T, x0)) from traces: Lebesgue differentiation over the crescents Z_delta,
// first-order Richardson on the two finest admissible delta.
inline ProductResult pointwise_product(S2SOperator& s2s, const ConformalMetric& metric, const Atom& f, const Atom& h,
                                       int x0, int y, const ProductSettings& cfg = {})
{
    const auto& g = s2s.grid();
    ProductResult out;
    if (s2s.X().contains(x0)) {
        const int k = s2s.X().local(x0), N = s2s.steps();
        out.value = s2s.trace(f)(N, k) * std::conj(s2s.trace(h)(N, k));
        out.from_trace = true;
        return out;
    }
    const IndicatorSet& X = s2s.X().set();
    const double eps = cfg.eps > 0.0 ? cfg.eps : default_crescent_eps(g, metric, X, x0, y);
    out.eps = eps;
    ZDelta outer = z_delta(g, metric, X, x0, y, eps, eps);
    if (outer.s + eps > s2s.T() + 1e-12)
        throw ConfigError("x0 is not inside M(X, T) with room for the crescent");
    CutoffState w2 = cutoff_state(s2s, h, outer.y_eps, outer.s, cfg.outer);
    const double floor = cfg.min_delta_cells * g.h() * metric.rho[y];
    for (double delta : delta_ladder(eps, cfg.levels)) {
        if (delta < floor * (1.0 - 1e-12))
            continue;
        ZDelta z = z_delta(g, metric, X, x0, y, eps, delta);
        CutoffState w1 = cutoff_state(s2s, f, z.y_delta, z.s + delta, cfg.inner);
        cplx num = cutoff_against(s2s, w1, h) - cutoff_pair(s2s, w1, w2);
        out.deltas.push_back(delta);
        out.measures.push_back(z.measure);
        out.quotients.push_back(num / z.measure);
    }
    const std::size_t m = out.quotients.size();
    if (m == 0)
        throw ConfigError("delta ladder has no entry above the resolution floor");
    if (m == 1) {
        out.value = out.quotients[0];
        return out;
    }
    const cplx qf = out.quotients[m - 1], qc = out.quotients[m - 2];
    if (std::abs(qf - qc) > cfg.cauchy_tol * std::abs(qf)) {
        std::ostringstream msg;
        msg << "crescent quotients are not converging:";
        for (std::size_t k = 0; k < m; ++k)
            msg << " (" << out.deltas[k] << ", " << out.quotients[k].real() << "+" << out.quotients[k].imag() << "i)";
        throw ComputeError(msg.str());
    }
    const double ratio = out.deltas[m - 2] / out.deltas[m - 1];
    out.value = (ratio * qf - qc) / (ratio - 1.0);
    return out;
}

// ---------------------------------------------------------------------------------------------
// Gauge recovery

class DistinguishableError : public ComputeError {
public:
    DistinguishableError(const std::string& what, int witness, double residual)
        : ComputeError(what), witness_probe(witness), witness_residual(residual)
    {
    }
    int witness_probe;
    double witness_residual;
};

struct DataEquality {
    double max_relative = 0.0;
    int witness = -1;
};

// Relative trace difference per probe between two source-to-solution maps.
inline DataEquality compare_data(S2SOperator& a, S2SOperator& b, const std::vector<SpatialProfile>& profiles,
                                 const std::vector<VecC>& temporals)
{
    if (profiles.size() != temporals.size())
        throw ConfigError("probe lists differ in length");
    DataEquality eq;
    for (std::size_t k = 0; k < profiles.size(); ++k) {
        MatC ta = a.trace({a.acquire(profiles[k]), temporals[k]});
        MatC tb = b.trace({b.acquire(profiles[k]), temporals[k]});
        const double scale = std::max(ta.norm(), tb.norm());
        const double rel = scale > 0.0 ? (ta - tb).norm() / scale : 0.0;
        if (rel > eq.max_relative) {
            eq.max_relative = rel;
            eq.witness = static_cast<int>(k);
        }
    }
    return eq;
}

struct GaugeField {
    VecC kappa;                    // on the grid, zero outside Omega or where unresolved
    std::vector<char> resolved;
    double max_modulus_defect = 0.0;
    double max_defect_on_X = 0.0;  // max |kappa - 1| on Omega intersect X
    double edge_residual = 0.0;    // max over Omega edges of |(A1 - A2) h + arg(kappa_{j+1} / kappa_j)| / h
    double potential_defect = 0.0;
    double data_equality = 0.0;
    int unresolved = 0;
};

struct GaugeSettings {
    double equality_tol = 1e-6;
    double floor = 1e-3;  // probe qualifies at x if |u1(T,x)| >= floor * max |u1(T)|
};

inline GaugeField recover_gauge(const Model& model1, const Model& model2, const SpectralDecomposition& sd1,
                                const SpectralDecomposition& sd2, S2SOperator& s2s1, S2SOperator& s2s2,
                                const IndicatorSet& omega, const std::vector<SpatialProfile>& probes,
                                const std::vector<VecC>& temporals, const GaugeSettings& cfg = {})
{
    const auto& g = model1.grid;
    if (!(g == model2.grid) || omega.size() != g.nodes())
        throw ConfigError("models and region must share one grid");
    DataEquality eq = compare_data(s2s1, s2s2, probes, temporals);
    if (eq.max_relative > cfg.equality_tol)
        throw DistinguishableError("models are distinguishable: probe " + std::to_string(eq.witness) +
                                       " differs by " + std::to_string(eq.max_relative),
                                   eq.witness, eq.max_relative);
    const int n = g.nodes();
    const double T = s2s1.T(), dt = s2s1.dt();
    VecC num = VecC::Zero(n);
    VecD den = VecD::Zero(n);
    for (std::size_t k = 0; k < probes.size(); ++k) {
        VecC s = probes[k].dense(n);
        VecC u1 = solve_separable(sd1, s, temporals[k], dt, T).u;
        VecC u2 = solve_separable(sd2, s, temporals[k], dt, T).u;
        const double top = u1.cwiseAbs().maxCoeff();
        for (int i : omega.members()) {
            if (std::abs(u1[i]) < cfg.floor * top || top == 0.0)
                continue;
            const cplx kap = std::conj(u2[i]) / std::conj(u1[i]);
            const double w = std::norm(u1[i]);
            num[i] += w * kap;
            den[i] += w;
        }
    }
    GaugeField gf;
    gf.data_equality = eq.max_relative;
    gf.kappa = VecC::Zero(n);
    gf.resolved.assign(static_cast<std::size_t>(n), 0);
    for (int i : omega.members()) {
        if (den[i] > 0.0) {
            gf.kappa[i] = num[i] / den[i];
            gf.resolved[static_cast<std::size_t>(i)] = 1;
            gf.max_modulus_defect = std::max(gf.max_modulus_defect, std::abs(std::abs(gf.kappa[i]) - 1.0));
        } else {
            ++gf.unresolved;
        }
    }
    for (int i : omega.members())
        if (gf.resolved[static_cast<std::size_t>(i)] && s2s1.X().contains(i))
            gf.max_defect_on_X = std::max(gf.max_defect_on_X, std::abs(gf.kappa[i] - 1.0));
    for (int i : omega.members()) {
        if (!gf.resolved[static_cast<std::size_t>(i)])
            continue;
        for (int ax = 0; ax < g.dim(); ++ax) {
            const int j = g.neighbor(i, ax, 1);
            if (!omega.contains(j) || !gf.resolved[static_cast<std::size_t>(j)])
                continue;
            const double hs = g.spacing(ax);
            const double dA = model1.A.value[static_cast<std::size_t>(ax)][i] - model2.A.value[static_cast<std::size_t>(ax)][i];
            const double phase = std::arg(gf.kappa[j] * std::conj(gf.kappa[i]));
            gf.edge_residual = std::max(gf.edge_residual, std::abs(std::remainder(dA * hs + phase, 2.0 * M_PI)) / hs);
        }
    }
    gf.potential_defect = (model1.V.value - model2.V.value).cwiseAbs().maxCoeff();
    return gf;
}

} // namespace bcm
