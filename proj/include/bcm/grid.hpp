#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "bcm/error.hpp"

namespace bcm {

using cplx = std::complex<double>;
using VecD = Eigen::VectorXd;
using VecC = Eigen::VectorXcd;
using MatD = Eigen::MatrixXd;
using MatC = Eigen::MatrixXcd;

// Periodic tensor grid on a circle (dim 1) or a 2-torus (dim 2).
// Node (i0, i1) has flat index i0 + n0 * i1.
class PeriodicGrid {
public:
    PeriodicGrid() = default;

    static PeriodicGrid circle(int n, double length = 1.0) { return PeriodicGrid(1, {n, 1}, {length, 1.0}); }
    static PeriodicGrid torus(int n0, int n1, double l0 = 1.0, double l1 = 1.0)
    {
        return PeriodicGrid(2, {n0, n1}, {l0, l1});
    }

    PeriodicGrid(int dim, std::array<int, 2> n, std::array<double, 2> len) : dim_(dim), n_(n), len_(len)
    {
        if (dim != 1 && dim != 2)
            throw ConfigError("grid dimension must be 1 or 2");
        if (dim == 1) {
            n_[1] = 1;
            len_[1] = 1.0;
        }
        for (int a = 0; a < dim; ++a) {
            if (n_[a] < 8)
                throw ConfigError("grid needs at least 8 nodes per axis");
            if (!(len_[a] > 0.0))
                throw ConfigError("grid period must be positive");
        }
    }

    int dim() const { return dim_; }
    int size(int axis) const { return n_[axis]; }
    double length(int axis) const { return len_[axis]; }
    double spacing(int axis) const { return len_[axis] / n_[axis]; }
    int nodes() const { return n_[0] * n_[1]; }

    // Largest spacing; the natural resolution unit for tolerances.
    double h() const { return dim_ == 1 ? spacing(0) : std::max(spacing(0), spacing(1)); }
    double cell_volume() const { return dim_ == 1 ? spacing(0) : spacing(0) * spacing(1); }

    int index(int i0, int i1 = 0) const { return wrap(i0, 0) + n_[0] * wrap(i1, 1); }
    std::array<int, 2> coords(int idx) const { return {idx % n_[0], idx / n_[0]}; }

    int wrap(int i, int axis) const
    {
        const int n = n_[axis];
        int r = i % n;
        return r < 0 ? r + n : r;
    }

    // Neighbour along an axis, step = +1 or -1.
    int neighbor(int idx, int axis, int step) const
    {
        auto c = coords(idx);
        c[axis] += step;
        return index(c[0], c[1]);
    }

    std::array<double, 2> position(int idx) const
    {
        auto c = coords(idx);
        return {c[0] * spacing(0), dim_ == 2 ? c[1] * spacing(1) : 0.0};
    }

    // Nearest node to a chart point (periodic).
    int nearest(double x0, double x1 = 0.0) const
    {
        int i0 = static_cast<int>(std::lround(x0 / spacing(0)));
        int i1 = dim_ == 2 ? static_cast<int>(std::lround(x1 / spacing(1))) : 0;
        return index(i0, i1);
    }

    // Minimal-image displacement b - a along an axis.
    double periodic_delta(double a, double b, int axis) const
    {
        const double L = len_[axis];
        double d = std::fmod(b - a, L);
        if (d > 0.5 * L)
            d -= L;
        if (d < -0.5 * L)
            d += L;
        return d;
    }

    // Flat (rho = 1) minimal-image distance between chart points.
    double flat_distance(const std::array<double, 2>& a, const std::array<double, 2>& b) const
    {
        double s = 0.0;
        for (int ax = 0; ax < dim_; ++ax) {
            double d = periodic_delta(a[ax], b[ax], ax);
            s += d * d;
        }
        return std::sqrt(s);
    }

    bool operator==(const PeriodicGrid& o) const { return dim_ == o.dim_ && n_ == o.n_ && len_ == o.len_; }
    bool operator!=(const PeriodicGrid& o) const { return !(*this == o); }

private:
    int dim_ = 1;
    std::array<int, 2> n_{8, 1};
    std::array<double, 2> len_{1.0, 1.0};
};

// g = rho^2 * Euclidean.
struct ConformalMetric {
    VecD rho;

    static ConformalMetric flat(const PeriodicGrid& g, double c = 1.0) { return {VecD::Constant(g.nodes(), c)}; }

    void validate(const PeriodicGrid& g) const
    {
        if (rho.size() != g.nodes())
            throw ConfigError("metric size does not match grid");
        if ((rho.array() <= 0.0).any() || !rho.allFinite())
            throw ConfigError("metric not positive");
    }

    double volume(const PeriodicGrid& g, int node) const { return std::pow(rho[node], g.dim()) * g.cell_volume(); }

    VecD volumes(const PeriodicGrid& g) const
    {
        VecD v(g.nodes());
        for (int i = 0; i < g.nodes(); ++i)
            v[i] = volume(g, i);
        return v;
    }

    bool is_constant(double tol = 1e-14) const
    {
        return rho.size() == 0 || (rho.array() - rho[0]).abs().maxCoeff() <= tol * std::abs(rho[0]);
    }
};

// Real covector at edge midpoints: value[axis][node] lives on the edge node -> node + e_axis.
struct CovectorField {
    std::vector<VecD> value;

    static CovectorField zero(const PeriodicGrid& g)
    {
        return {std::vector<VecD>(static_cast<std::size_t>(g.dim()), VecD::Zero(g.nodes()))};
    }

    void validate(const PeriodicGrid& g) const
    {
        if (static_cast<int>(value.size()) != g.dim())
            throw ConfigError("covector field needs one component per axis");
        for (const auto& v : value)
            if (v.size() != g.nodes() || !v.allFinite())
                throw ConfigError("covector component size does not match grid");
    }
};

struct ScalarPotential {
    VecD value;

    static ScalarPotential zero(const PeriodicGrid& g) { return {VecD::Zero(g.nodes())}; }

    void validate(const PeriodicGrid& g) const
    {
        if (value.size() != g.nodes() || !value.allFinite())
            throw ConfigError("potential size does not match grid");
    }
};

// Node subset with its g-measure.
class IndicatorSet {
public:
    IndicatorSet() = default;
    IndicatorSet(std::vector<char> flags, double measure) : flags_(std::move(flags)), measure_(measure) {}

    static IndicatorSet from_flags(std::vector<char> flags, const VecD& volumes)
    {
        double m = 0.0;
        for (std::size_t i = 0; i < flags.size(); ++i)
            if (flags[i])
                m += volumes[static_cast<Eigen::Index>(i)];
        return IndicatorSet(std::move(flags), m);
    }

    static IndicatorSet single(int nodes, int node, const VecD& volumes)
    {
        std::vector<char> f(static_cast<std::size_t>(nodes), 0);
        f[static_cast<std::size_t>(node)] = 1;
        return from_flags(std::move(f), volumes);
    }

    bool contains(int node) const { return flags_[static_cast<std::size_t>(node)] != 0; }
    int size() const { return static_cast<int>(flags_.size()); }
    double measure() const { return measure_; }
    const std::vector<char>& flags() const { return flags_; }

    int count() const
    {
        int c = 0;
        for (char f : flags_)
            c += f ? 1 : 0;
        return c;
    }
    bool empty() const { return count() == 0; }

    std::vector<int> members() const
    {
        std::vector<int> m;
        for (int i = 0; i < size(); ++i)
            if (flags_[static_cast<std::size_t>(i)])
                m.push_back(i);
        return m;
    }

    bool subset_of(const IndicatorSet& o) const
    {
        for (int i = 0; i < size(); ++i)
            if (contains(i) && !o.contains(i))
                return false;
        return true;
    }

    VecD as_vector() const
    {
        VecD v(size());
        for (int i = 0; i < size(); ++i)
            v[i] = contains(i) ? 1.0 : 0.0;
        return v;
    }

private:
    std::vector<char> flags_;
    double measure_ = 0.0;
};

} // namespace bcm
