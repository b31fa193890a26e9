#pragma once

#include <array>
#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "bcm/parallel.hpp"
#include "bcm/wave.hpp"

namespace bcm {

class ObservationSet {
public:
    ObservationSet() = default;
    explicit ObservationSet(IndicatorSet set) : set_(std::move(set))
    {
        if (set_.empty())
            throw ConfigError("observation set is empty");
        nodes_ = set_.members();
        local_.assign(static_cast<std::size_t>(set_.size()), -1);
        for (std::size_t k = 0; k < nodes_.size(); ++k)
            local_[static_cast<std::size_t>(nodes_[k])] = static_cast<int>(k);
    }

    const IndicatorSet& set() const { return set_; }
    const std::vector<int>& nodes() const { return nodes_; }
    int count() const { return static_cast<int>(nodes_.size()); }
    bool contains(int node) const { return set_.contains(node); }
    // Position of a grid node inside the trace arrays, -1 when outside X.
    int local(int node) const { return local_[static_cast<std::size_t>(node)]; }

private:
    IndicatorSet set_;
    std::vector<int> nodes_;
    std::vector<int> local_;
};

// Sparse spatial factor of a source, supported in X.
struct SpatialProfile {
    std::vector<int> nodes;
    std::vector<cplx> values;
    std::string label;

    static SpatialProfile from_dense(const VecC& s, std::string label = {}, double cutoff = 0.0)
    {
        SpatialProfile p;
        p.label = std::move(label);
        for (Eigen::Index i = 0; i < s.size(); ++i)
            if (std::abs(s[i]) > cutoff) {
                p.nodes.push_back(static_cast<int>(i));
                p.values.push_back(s[i]);
            }
        return p;
    }

    // Unit point source at a node: integrates to one against dV_g.
    static SpatialProfile point(int node, double volume, std::string label = {})
    {
        return {{node}, {cplx(1.0 / volume)}, std::move(label)};
    }

    VecC dense(int n) const
    {
        VecC s = VecC::Zero(n);
        for (std::size_t k = 0; k < nodes.size(); ++k)
            s[nodes[k]] = values[k];
        return s;
    }
};

// Separable source atom: profile(x) * temporal(t), temporal sampled on t_i = i dt, i = 0..N (T = N dt).
struct Atom {
    int profile = 0;
    VecC temporal;
};

class S2SOperator;
MatC blago_matrix(const S2SOperator& s2s, const std::vector<Atom>& rows, const std::vector<Atom>& cols);

// Discrete local source-to-solution map on (0, 2T) x X. Holds traces only.
// Time invariance: an atom's trace is sum_k b_k R[i - k + 1], with R the response to a hat at t_1.
class S2SOperator {
public:
    S2SOperator() = default;

    double T() const { return T_; }
    double dt() const { return dt_; }
    int steps() const { return N_; }  // nodes per T
    const PeriodicGrid& grid() const { return grid_; }
    const ObservationSet& X() const { return X_; }
    const VecD& volumes_on_X() const { return MX_; }
    const std::string& provenance() const { return provenance_; }
    int profile_count() const { return static_cast<int>(profiles_.size()); }
    const SpatialProfile& profile(int m) const { return profiles_[static_cast<std::size_t>(m)]; }
    const MatC& response(int m) const { return responses_[static_cast<std::size_t>(m)]; }

    // Lambda(atom) on t_i, i = 0..2N (rows) and X (columns).
    MatC trace(const Atom& a) const
    {
        check_atom(a);
        const MatC& R = response(a.profile);
        MatC out = MatC::Zero(2 * N_ + 1, X_.count());
        for (Eigen::Index k = 1; k < a.temporal.size(); ++k) {
            if (a.temporal[k] == cplx(0.0))
                continue;
            const int shift = static_cast<int>(k) - 1;
            out.bottomRows(2 * N_ + 1 - shift) += a.temporal[k] * R.topRows(2 * N_ + 1 - shift);
        }
        return out;
    }

    // Q(i) = sum_x conj(s_m(x)) dV(x) R_{m'}(t_i, x)
    VecC profile_projection(int m, int mp) const
    {
        const auto& p = profile(m);
        const MatC& R = response(mp);
        VecC q = VecC::Zero(2 * N_ + 1);
        for (std::size_t k = 0; k < p.nodes.size(); ++k) {
            int l = X_.local(p.nodes[k]);
            q += std::conj(p.values[k]) * MX_[l] * R.col(l);
        }
        return q;
    }

    void check_atom(const Atom& a) const
    {
        if (a.profile < 0 || a.profile >= profile_count())
            throw ConfigError("atom refers to an unknown spatial profile");
        if (a.temporal.size() < 1 || a.temporal.size() > 2 * N_ + 1)
            throw ConfigError("atom temporal profile has the wrong length");
        if (a.temporal[0] != cplx(0.0))
            throw ConfigError("atom must vanish at t = 0");
    }

    // Sources for the Blagovestchenskii identity must live in [0, T].
    void check_blago_atom(const Atom& a) const
    {
        check_atom(a);
        // Piecewise-linear in time, so a non-zero value at t_N would leak into (T, T + dt).
        for (Eigen::Index k = N_; k < a.temporal.size(); ++k)
            if (a.temporal[k] != cplx(0.0))
                throw ConfigError("atom is not supported in (0, T)");
    }

    // Queries the map with a new source profile supported in X and returns its index.
    // Repeated queries with the same profile reuse the stored response.
    int acquire(const SpatialProfile& p)
    {
        const std::string key = profile_key(p);
        auto it = index_.find(key);
        if (it != index_.end())
            return it->second;
        acquire_batch({p});
        return index_.at(key);
    }

    std::vector<int> acquire(const std::vector<SpatialProfile>& ps)
    {
        std::vector<SpatialProfile> fresh;
        std::map<std::string, int> pending;
        for (const auto& p : ps) {
            const std::string key = profile_key(p);
            if (!index_.count(key) && !pending.count(key)) {
                pending[key] = 1;
                fresh.push_back(p);
            }
        }
        if (!fresh.empty())
            acquire_batch(fresh);
        std::vector<int> out;
        for (const auto& p : ps)
            out.push_back(index_.at(profile_key(p)));
        return out;
    }

    friend S2SOperator build_s2s(std::shared_ptr<const SpectralDecomposition>, const std::vector<SpatialProfile>&,
                                 const ObservationSet&, double, int);

private:
    static std::string profile_key(const SpatialProfile& p)
    {
        std::string key;
        char buf[64];
        for (std::size_t k = 0; k < p.nodes.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%d:%a:%a;", p.nodes[k], p.values[k].real(), p.values[k].imag());
            key += buf;
        }
        return key;
    }

    void acquire_batch(const std::vector<SpatialProfile>& profiles)
    {
        const int n = grid_.nodes();
        for (std::size_t a = 0; a < profiles.size(); ++a) {
            const auto& p = profiles[a];
            if (p.nodes.size() != p.values.size() || p.nodes.empty())
                throw ConfigError("malformed spatial profile " + p.label);
            for (int node : p.nodes)
                if (node < 0 || node >= n || !X_.contains(node))
                    throw ConfigError("atom " + (p.label.empty() ? std::to_string(profiles_.size() + a) : p.label) +
                                      " is not supported in X");
        }
        const std::size_t base = responses_.size();
        responses_.resize(base + profiles.size());
        parallel_for(static_cast<int>(profiles.size()), [&](int a) {
            VecC proj = model_->project(profiles[static_cast<std::size_t>(a)].dense(n));
            MatC weighted = hat_.cast<cplx>() * proj.asDiagonal();
            responses_[base + static_cast<std::size_t>(a)] = weighted * phiXt_;
        });
        for (const auto& p : profiles) {
            index_[profile_key(p)] = static_cast<int>(profiles_.size());
            profiles_.push_back(p);
        }
    }

    PeriodicGrid grid_;
    ObservationSet X_;
    VecD MX_;
    double T_ = 0.0, dt_ = 0.0;
    int N_ = 0;
    std::vector<SpatialProfile> profiles_;
    std::vector<MatC> responses_;
    std::map<std::string, int> index_;
    std::string provenance_;
    // The hidden model answers new queries; only traces on X leave this class.
    std::shared_ptr<const SpectralDecomposition> model_;
    MatD hat_;
    MatC phiXt_;
};

inline S2SOperator build_s2s(std::shared_ptr<const SpectralDecomposition> sd,
                             const std::vector<SpatialProfile>& profiles, const ObservationSet& X, double T,
                             int steps_per_T = 256)
{
    if (!(T > 0.0) || steps_per_T < 4)
        throw ConfigError("need T > 0 and at least 4 steps");
    if (X.set().size() != sd->grid.nodes())
        throw ConfigError("observation set does not match grid");
    S2SOperator op;
    op.grid_ = sd->grid;
    op.X_ = X;
    op.T_ = T;
    op.N_ = steps_per_T;
    op.dt_ = T / steps_per_T;
    op.provenance_ = sd->provenance;
    op.MX_.resize(X.count());
    for (int k = 0; k < X.count(); ++k)
        op.MX_[k] = sd->M[X.nodes()[static_cast<std::size_t>(k)]];
    op.hat_ = hat_response(*sd, op.dt_, 2 * op.N_);
    op.phiXt_.resize(sd->size(), X.count());
    for (int k = 0; k < X.count(); ++k)
        op.phiXt_.col(k) = sd->phi.row(X.nodes()[static_cast<std::size_t>(k)]).transpose();
    op.model_ = std::move(sd);
    op.acquire(profiles);
    return op;
}

inline S2SOperator build_s2s(const SpectralDecomposition& sd, const std::vector<SpatialProfile>& profiles,
                             const ObservationSet& X, double T, int steps_per_T = 256)
{
    return build_s2s(std::make_shared<const SpectralDecomposition>(sd), profiles, X, T, steps_per_T);
}

// J phi(t_i) = int_{t_i}^{2T - t_i} phi for i = 0..N by composite Simpson (always an even number of cells).
inline VecC apply_J(const VecC& series, double dt, int N)
{
    if (series.size() < 2 * N + 1)
        throw ConfigError("T lies outside the series horizon");
    const int L = 2 * N + 1;
    // Prefix sums of g and of (-1)^j g.
    VecC S(L + 1), A(L + 1);
    S[0] = A[0] = 0.0;
    for (int j = 0; j < L; ++j) {
        S[j + 1] = S[j] + series[j];
        A[j + 1] = A[j] + (j % 2 == 0 ? series[j] : -series[j]);
    }
    VecC out(N + 1);
    for (int i = 0; i <= N; ++i) {
        const int a = i, b = 2 * N - i;
        if (a == b) {
            out[i] = 0.0;
            continue;
        }
        cplx plain = S[b + 1] - S[a];
        cplx alt = A[b + 1] - A[a];
        if (a % 2 == 1)
            alt = -alt;
        out[i] = dt / 3.0 * (3.0 * plain - alt - series[a] - series[b]);
    }
    return out;
}

namespace detail {

// Cumulative integral C(t_i) = int_0^{t_i} g with a four-point cubic rule per cell.
inline VecC cumulative_integral(const VecC& g, double dt)
{
    const Eigen::Index L = g.size();
    VecC C(L);
    C[0] = 0.0;
    auto at = [&](Eigen::Index j) { return j < 0 ? cplx(0.0) : g[j]; };  // g vanishes before t = 0
    for (Eigen::Index i = 0; i + 1 < L; ++i) {
        cplx cell;
        if (i + 2 < L)
            cell = dt / 24.0 * (-at(i - 1) + 13.0 * g[i] + 13.0 * g[i + 1] - g[i + 2]);
        else
            cell = dt / 24.0 * (at(i - 2) - 5.0 * at(i - 1) + 19.0 * g[i] + 9.0 * g[i + 1]);
        C[i + 1] = C[i] + cell;
    }
    return C;
}

// Cubic Lagrange interpolation of nodal values at fractional index t (stencil clamped to the array).
inline cplx interp_cubic(const VecC& v, double t)
{
    const Eigen::Index L = v.size();
    Eigen::Index i0 = static_cast<Eigen::Index>(std::floor(t)) - 1;
    i0 = std::max<Eigen::Index>(0, std::min<Eigen::Index>(i0, L - 4));
    cplx s = 0.0;
    for (int a = 0; a < 4; ++a) {
        double w = 1.0;
        for (int b = 0; b < 4; ++b)
            if (b != a)
                w *= (t - static_cast<double>(i0 + b)) / static_cast<double>(a - b);
        s += w * v[i0 + a];
    }
    return s;
}

// Index range [lo, hi) of grid intervals on which a piecewise-linear temporal factor is non-zero.
struct Support {
    int lo = 0, hi = 0;
};

inline Support temporal_support(const VecC& b, int N)
{
    const int last = std::min<int>(N, static_cast<int>(b.size()) - 1);
    int first = -1, end = -1;
    for (int k = 0; k <= last; ++k)
        if (b[k] != cplx(0.0)) {
            if (first < 0)
                first = k;
            end = k;
        }
    if (first < 0)
        return {0, 0};
    return {std::max(0, first - 1), std::min(last, end + 1)};
}

// int b(t) conj(G(t)) dt over the support of b, b piecewise linear on the grid, G given by nodal
// samples and interpolated. When conj_b is set the integrand is conj(b) G instead.
inline cplx outer_integral(const VecC& b, Support sup, const VecC& G, double dt, bool conj_b)
{
    static const double gp[3] = {0.5 - 0.5 * std::sqrt(0.6), 0.5, 0.5 + 0.5 * std::sqrt(0.6)};
    static const double gw[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    // Lagrange weights on the stencil i-1..i+2 at i + gp[q].
    static const auto lw = [] {
        std::array<std::array<double, 4>, 3> w{};
        for (int q = 0; q < 3; ++q)
            for (int a = 0; a < 4; ++a) {
                double v = 1.0;
                for (int c = 0; c < 4; ++c)
                    if (c != a)
                        v *= (gp[q] - (c - 1)) / static_cast<double>(a - c);
                w[static_cast<std::size_t>(q)][static_cast<std::size_t>(a)] = v;
            }
        return w;
    }();
    const Eigen::Index L = G.size();
    cplx total = 0.0;
    for (int i = sup.lo; i < sup.hi; ++i) {
        const bool interior = i >= 1 && i + 2 < L;
        for (int q = 0; q < 3; ++q) {
            cplx bv = b[i] + gp[q] * (b[i + 1] - b[i]);
            cplx gv;
            if (interior) {
                const auto& w = lw[static_cast<std::size_t>(q)];
                gv = w[0] * G[i - 1] + w[1] * G[i] + w[2] * G[i + 1] + w[3] * G[i + 2];
            } else {
                gv = interp_cubic(G, i + gp[q]);
            }
            total += gw[q] * (conj_b ? std::conj(bv) * gv : bv * std::conj(gv));
        }
    }
    return total * dt;
}

// G(t_i) = sum_k b_k Q(i - k + 1), i = 0..2N.
inline VecC convolve_trace(const VecC& Q, const VecC& b, int N)
{
    VecC G = VecC::Zero(2 * N + 1);
    for (Eigen::Index k = 1; k < b.size(); ++k) {
        if (b[k] == cplx(0.0))
            continue;
        const int shift = static_cast<int>(k) - 1;
        G.tail(2 * N + 1 - shift) += b[k] * Q.head(2 * N + 1 - shift);
    }
    return G;
}

// J G on nodes 0..N+1 (J G is odd about T, which supplies the N+1 value).
inline VecC J_extended(const VecC& G, double dt, int N)
{
    VecC J = apply_J(G, dt, N);
    VecC out(N + 2);
    out.head(N + 1) = J;
    out[N + 1] = -J[N - 1];
    return out;
}

class ProjectionCache {
public:
    explicit ProjectionCache(const S2SOperator& op) : op_(op) {}
    const VecC& get(int m, int mp)
    {
        auto key = std::make_pair(m, mp);
        auto it = cache_.find(key);
        if (it == cache_.end())
            it = cache_.emplace(key, op_.profile_projection(m, mp)).first;
        return it->second;
    }

private:
    const S2SOperator& op_;
    std::map<std::pair<int, int>, VecC> cache_;
};

} // namespace detail

// Normalization of the identity: <u^f(T), u^h(T)> = kJConstant * [(f, J Lambda h) - (Lambda f, J h)].
constexpr double kJConstant = 0.5;

// Raw data-side matrix W(k, l) = (f_k, J Lambda f_l) - (Lambda f_k, J f_l) (no normalization, no symmetrization).
inline MatC blago_raw_matrix(const S2SOperator& s2s, const std::vector<Atom>& rows, const std::vector<Atom>& cols)
{
    for (const auto& a : rows)
        s2s.check_blago_atom(a);
    for (const auto& a : cols)
        s2s.check_blago_atom(a);
    const int N = s2s.steps();
    const double dt = s2s.dt();
    detail::ProjectionCache cache(s2s);
    MatC W = MatC::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));

    std::vector<detail::Support> rsup, csup;
    for (const auto& a : rows)
        rsup.push_back(detail::temporal_support(a.temporal, N));
    for (const auto& a : cols)
        csup.push_back(detail::temporal_support(a.temporal, N));

    std::map<int, std::vector<int>> rows_by_profile, cols_by_profile;
    for (std::size_t k = 0; k < rows.size(); ++k)
        rows_by_profile[rows[k].profile].push_back(static_cast<int>(k));
    for (std::size_t l = 0; l < cols.size(); ++l)
        cols_by_profile[cols[l].profile].push_back(static_cast<int>(l));

    // First term: (f_k, J Lambda f_l) = int b_k conj(J G_{m_k, l}).
    for (std::size_t l = 0; l < cols.size(); ++l)
        for (const auto& [m, ks] : rows_by_profile) {
            VecC G = detail::convolve_trace(cache.get(m, cols[l].profile), cols[l].temporal, N);
            VecC JG = detail::J_extended(G, dt, N);
            for (int k : ks)
                W(k, static_cast<Eigen::Index>(l)) +=
                    detail::outer_integral(rows[static_cast<std::size_t>(k)].temporal, rsup[static_cast<std::size_t>(k)], JG, dt, false);
        }
    // Second term: (Lambda f_k, J f_l) = int conj(b_l(s)) int_0^s G_{m_l, k}.
    for (std::size_t k = 0; k < rows.size(); ++k)
        for (const auto& [m, ls] : cols_by_profile) {
            VecC G = detail::convolve_trace(cache.get(m, rows[k].profile), rows[k].temporal, N);
            VecC C = detail::cumulative_integral(G, dt);
            for (int l : ls)
                W(static_cast<Eigen::Index>(k), l) -=
                    detail::outer_integral(cols[static_cast<std::size_t>(l)].temporal, csup[static_cast<std::size_t>(l)], C, dt, true);
        }
    return W;
}

// <u^{f_k}(T), u^{g_l}(T)> from traces only. Each entry averages the two data-side estimates
// W(f,g) and conj(W(g,f)), which makes the result exactly conjugate symmetric.
inline MatC blago_matrix(const S2SOperator& s2s, const std::vector<Atom>& rows, const std::vector<Atom>& cols)
{
    MatC a = blago_raw_matrix(s2s, rows, cols);
    MatC b = blago_raw_matrix(s2s, cols, rows);
    return kJConstant * 0.5 * (a + b.adjoint());
}

inline cplx blago_inner_product(const S2SOperator& s2s, const Atom& f, const Atom& h)
{
    return blago_matrix(s2s, {f}, {h})(0, 0);
}

} // namespace bcm
