#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "bcm/geometry.hpp"
#include "bcm/s2s.hpp"

namespace bcm {

// Gram matrix of the time-T states of a source basis, assembled from traces only.
struct GramMatrix {
    MatC B;
    double mu = 0.0;
    double asymmetry = 0.0;  // relative defect of the two data-side estimates before averaging

    int size() const { return static_cast<int>(B.rows()); }
    double trace() const { return B.diagonal().real().sum(); }
    double default_mu(double rel = 1e-8) const { return size() ? rel * trace() / size() : 0.0; }
};

inline GramMatrix assemble_gram(const S2SOperator& s2s, const std::vector<Atom>& basis)
{
    GramMatrix g;
    MatC W = blago_raw_matrix(s2s, basis, basis);
    g.B = kJConstant * 0.5 * (W + W.adjoint());
    const double scale = W.norm();
    g.asymmetry = scale > 0.0 ? (W - W.adjoint()).norm() / scale : 0.0;
    return g;
}

namespace detail {

// Solves (B + mu I) alpha = c by Cholesky; with mu = 0 a failed or ill-conditioned
// factorization is reported instead of returning garbage.
inline MatC regularized_solve(const MatC& B, const MatC& c, double mu)
{
    const Eigen::Index n = B.rows();
    MatC A = B + mu * MatC::Identity(n, n);
    Eigen::LLT<MatC> llt(A);
    if (llt.info() == Eigen::Success) {
        if (mu > 0.0)
            return llt.solve(c);
        // Cholesky succeeded but the normal equations may still be numerically singular.
        Eigen::SelfAdjointEigenSolver<MatC> es(A, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
        if (lo > 1e-13 * hi)
            return llt.solve(c);
    }
    if (mu == 0.0)
        throw ComputeError("normal equations are singular with mu = 0; use a positive regularization mu");
    // Regularized but indefinite from quadrature noise: fall back to a pivoted factorization.
    return Eigen::LDLT<MatC>(A).solve(c);
}

} // namespace detail

struct ControlSolution {
    VecC coef;                // a_k with u^c(T) = sum_k a_k u^{h_k}(T)
    double residual = 0.0;    // |u^c(T) - target|^2 (NaN when the target norm is not observable)
    double relative = 0.0;    // residual / |target|^2
    double mu = 0.0;
    double state_norm2 = 0.0; // |u^c(T)|^2
    double target_norm2 = std::numeric_limits<double>::quiet_NaN();
};

// Least squares fit of a target with known inner products c_k = <u^{h_k}(T), target>.
// Minimizing |sum a_k u_k - t|^2 + mu |a|^2 gives (B + mu) conj(a) = c.
inline ControlSolution fit_control(const GramMatrix& g, const VecC& c, double mu, double target_norm2)
{
    if (c.size() != g.size())
        throw ConfigError("cross term vector does not match basis");
    ControlSolution s;
    s.mu = mu;
    VecC alpha = detail::regularized_solve(g.B, c, mu);
    s.coef = alpha.conjugate();
    s.state_norm2 = std::max(0.0, alpha.dot(g.B * alpha).real());
    s.target_norm2 = target_norm2;
    if (std::isfinite(target_norm2)) {
        // |w|^2 - 2 Re <w, t> + |t|^2 with <w, t> = sum a_k c_k
        const double cross = (s.coef.transpose() * c)(0, 0).real();
        s.residual = std::max(0.0, s.state_norm2 - 2.0 * cross + target_norm2);
        s.relative = target_norm2 > 0.0 ? s.residual / target_norm2 : 0.0;
    } else {
        s.residual = s.relative = std::numeric_limits<double>::quiet_NaN();
    }
    return s;
}

// Oracle mode: explicit target state. Cross terms use the forward model, so this is a calibration tool.
inline ControlSolution approximate_control(const S2SOperator& s2s, const SpectralDecomposition& sd, const VecC& target,
                                           const std::vector<Atom>& basis, double mu, const GramMatrix* gram = nullptr)
{
    if (target.size() != sd.grid.nodes())
        throw ConfigError("target does not match grid");
    GramMatrix local;
    if (!gram) {
        local = assemble_gram(s2s, basis);
        gram = &local;
    }
    VecC c(static_cast<Eigen::Index>(basis.size()));
    parallel_for(static_cast<int>(basis.size()), [&](int k) {
        const Atom& a = basis[static_cast<std::size_t>(k)];
        VecC s = s2s.profile(a.profile).dense(sd.grid.nodes());
        VecC b = VecC::Zero(s2s.steps() + 1);
        b.head(std::min<Eigen::Index>(b.size(), a.temporal.size())) = a.temporal.head(std::min<Eigen::Index>(b.size(), a.temporal.size()));
        auto w = solve_separable(sd, s, b, s2s.dt(), s2s.T());
        c[k] = (w.u.array() * target.conjugate().array() * sd.M.array().cast<cplx>()).sum();
    });
    const double tn = (target.cwiseAbs2().array() * sd.M.array()).sum();
    return fit_control(*gram, c, mu, tn);
}

// Data mode: target 1_{M(Y,s)} u^f(T) with the basis supported in (T - s, T] x Y.
// Such waves vanish outside M(Y,s), so <u^{h_k}, 1_M u^f> = <u^{h_k}, u^f>, a plain trace quantity.
inline ControlSolution approximate_cutoff_control(const S2SOperator& s2s, const Atom& f, const std::vector<Atom>& basis,
                                                  double mu, const GramMatrix* gram = nullptr)
{
    GramMatrix local;
    if (!gram) {
        local = assemble_gram(s2s, basis);
        gram = &local;
    }
    VecC c = blago_matrix(s2s, basis, {f}).col(0);
    return fit_control(*gram, c, mu, std::numeric_limits<double>::quiet_NaN());
}

struct ResidualReport {
    double raw = 0.0;       // quadratic form at the regularized minimizer
    double relative = 0.0;  // raw / |u^f(T)|^2
    double lower = 0.0;     // regularized objective at the minimizer minus mu |coef|^2 bound
    double mu = 0.0;
    double coef_norm2 = 0.0;
};

// min over h in span(admissible) of |u^f(T) - u^h(T)|^2, from the Gram of [admissible, f].
inline ResidualReport inclusion_residual(const S2SOperator& s2s, const Atom& f, const std::vector<Atom>& admissible,
                                         double mu)
{
    if (mu < 0.0)
        throw ConfigError("mu must be non-negative");
    std::vector<Atom> all = admissible;
    all.push_back(f);
    GramMatrix g = assemble_gram(s2s, all);
    const Eigen::Index k = static_cast<Eigen::Index>(admissible.size());
    MatC B = g.B.topLeftCorner(k, k);
    VecC c = g.B.block(0, k, k, 1);
    const double P = g.B(k, k).real();
    GramMatrix gb;
    gb.B = B;
    ControlSolution s = fit_control(gb, c, mu, P);
    ResidualReport r;
    r.raw = s.residual;
    r.relative = s.relative;
    r.mu = mu;
    r.coef_norm2 = s.coef.squaredNorm();
    r.lower = std::max(0.0, s.residual - mu * r.coef_norm2);
    return r;
}

// Cylinder basis parameters. Spatial centres fill B(x, eps); temporal centres fill the time window.
struct CylinderDesign {
    int spatial_points = 7;        // per axis
    double spatial_halfwidth = 2;  // in cells
    double temporal_halfwidth = 4; // in time steps
    double time_spacing = 0.5;     // fraction of the temporal half-width
};

// Atoms for the cylinder (T - l, T] x B(x, eps): bump profiles centred on a lattice in the ball,
// temporal bumps centred from T - (l - eps) to T and cut off before T.
inline std::vector<Atom> cylinder_basis(S2SOperator& s2s, std::array<double, 2> x, double l, double eps,
                                        const CylinderDesign& d = {})
{
    if (!(l > 0.0) || !(eps > 0.0))
        throw ConfigError("cylinder needs positive length and radius");
    const auto& g = s2s.grid();
    const double w = d.spatial_halfwidth * g.h();
    const int np = std::max(1, d.spatial_points);
    std::vector<std::array<double, 2>> centres;
    auto offsets = [&](int k) { return np == 1 ? 0.0 : -eps + 2.0 * eps * k / (np - 1); };
    if (g.dim() == 1) {
        for (int k = 0; k < np; ++k)
            centres.push_back({x[0] + offsets(k), 0.0});
    } else {
        for (int a = 0; a < np; ++a)
            for (int b = 0; b < np; ++b) {
                double ox = offsets(a), oy = offsets(b);
                if (ox * ox + oy * oy <= eps * eps * (1 + 1e-12))
                    centres.push_back({x[0] + ox, x[1] + oy});
            }
    }
    std::vector<SpatialProfile> profiles;
    for (const auto& c : centres) {
        VecC s = spatial_bump(g, c, w);
        profiles.push_back(SpatialProfile::from_dense(s, {}, 0.0));
    }
    for (const auto& p : profiles)
        for (int node : p.nodes)
            if (!s2s.X().contains(node))
                throw ConfigError("epsilon too large for X: cylinder atoms leave the observation set");
    std::vector<int> ids = s2s.acquire(profiles);

    const double dt = s2s.dt(), T = s2s.T();
    const double tw = d.temporal_halfwidth * dt;
    const double step = d.time_spacing * tw;
    const double t_first = std::max(T - (l - eps), tw);
    // Anchored at the start of the window so the reach of the basis varies continuously with l.
    std::vector<double> times;
    for (double tc = t_first; tc <= T + 1e-12; tc += step)
        times.push_back(tc);
    std::vector<Atom> atoms;
    for (int id : ids)
        for (double tc : times)
            atoms.push_back({id, temporal_bump(dt, s2s.steps(), tc, tw, 0.0, T - 0.5 * dt)});
    return atoms;
}

struct InclusionReport {
    bool included = false;
    double span_residual = 0.0;      // worst relative residual over the probe span (the verdict quantity)
    double raw_residual = 0.0;       // max squared distance of a single probe atom to the admissible span
    double per_atom_residual = 0.0;  // max relative residual over individual probe atoms
    double theta = 0.0;
    double mu = 0.0;
    int probe_atoms = 0;
    int admissible_atoms = 0;
};

// Worst case over the probe span of the relative distance to span(admissible), measured in |.|_{L^2} at time T.
inline InclusionReport inclusion_from_bases(const S2SOperator& s2s, const std::vector<Atom>& probes,
                                            const std::vector<Atom>& admissible, double theta, double mu_rel = 1e-8,
                                            double probe_cut = 1e-4)
{
    if (probes.empty() || admissible.empty())
        throw ConfigError("inclusion test needs probe and admissible atoms");
    std::vector<Atom> all = admissible;
    all.insert(all.end(), probes.begin(), probes.end());
    GramMatrix g = assemble_gram(s2s, all);
    const Eigen::Index ka = static_cast<Eigen::Index>(admissible.size());
    const Eigen::Index kp = static_cast<Eigen::Index>(probes.size());
    MatC B = g.B.topLeftCorner(ka, ka);
    MatC C = g.B.topRightCorner(ka, kp);
    MatC P = g.B.bottomRightCorner(kp, kp);
    const double mu = mu_rel * B.diagonal().real().sum() / static_cast<double>(ka);
    // For probe coefficients p (state sum p_j u_j) the residual is p^T conj(Res) conj(p); Res is Hermitian.
    MatC Res = P - C.adjoint() * detail::regularized_solve(B, C, mu);
    Res = 0.5 * (Res + Res.adjoint()).eval();

    InclusionReport r;
    r.theta = theta;
    r.mu = mu;
    r.probe_atoms = static_cast<int>(kp);
    r.admissible_atoms = static_cast<int>(ka);
    for (Eigen::Index j = 0; j < kp; ++j) {
        r.raw_residual = std::max(r.raw_residual, Res(j, j).real());
        r.per_atom_residual = std::max(r.per_atom_residual, Res(j, j).real() / P(j, j).real());
    }

    Eigen::SelfAdjointEigenSolver<MatC> es(P);
    const VecD& ev = es.eigenvalues();
    const double cut = probe_cut * ev.maxCoeff();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < ev.size(); ++j)
        if (ev[j] > cut)
            keep.push_back(j);
    MatC Q(kp, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j)
        Q.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(keep[j]) / std::sqrt(ev[keep[j]]);
    MatC W = Q.adjoint() * Res * Q;
    Eigen::SelfAdjointEigenSolver<MatC> ew(0.5 * (W + W.adjoint()), Eigen::EigenvaluesOnly);
    r.span_residual = std::max(0.0, ew.eigenvalues().maxCoeff());
    r.included = r.span_residual <= theta;
    return r;
}

struct InclusionSettings {
    double theta = 0.1;
    double mu_rel = 1e-8;
    double probe_cut = 1e-4;
    CylinderDesign design;
};

// Is B(x, l_x) contained in the closure of B(y, l_y) u B(z, l_z)? Decided from traces only.
inline InclusionReport ball_inclusion_test(S2SOperator& s2s, std::array<double, 2> x, double lx, std::array<double, 2> y,
                                           double ly, std::array<double, 2> z, double lz, double eps,
                                           const InclusionSettings& cfg = {})
{
    if (!(eps > 0.0))
        throw ConfigError("epsilon must be positive");
    const double T = s2s.T();
    if (lx > T + 1e-12 || ly > T + 1e-12 || lz > T + 1e-12)
        throw ConfigError("ball radii must not exceed T");
    auto probes = cylinder_basis(s2s, x, lx, eps, cfg.design);
    auto admissible = cylinder_basis(s2s, y, ly, eps, cfg.design);
    if (y != z || ly != lz) {
        auto more = cylinder_basis(s2s, z, lz, eps, cfg.design);
        admissible.insert(admissible.end(), more.begin(), more.end());
    }
    return inclusion_from_bases(s2s, probes, admissible, cfg.theta, cfg.mu_rel, cfg.probe_cut);
}

} // namespace bcm
