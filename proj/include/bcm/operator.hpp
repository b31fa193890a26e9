#pragma once

#include <Eigen/Sparse>

#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <cmath>
#include <string>
#include <vector>

#include "bcm/grid.hpp"

namespace bcm {

using SpMatC = Eigen::SparseMatrix<cplx>;

// The data (N, g, A, V) of one magnetic Schrodinger model.
struct Model {
    PeriodicGrid grid;
    ConformalMetric metric;
    CovectorField A;
    ScalarPotential V;
    std::string name = "model";

    static Model free(const PeriodicGrid& g, std::string name = "free")
    {
        return {g, ConformalMetric::flat(g), CovectorField::zero(g), ScalarPotential::zero(g), std::move(name)};
    }

    void validate() const
    {
        metric.validate(grid);
        A.validate(grid);
        V.validate(grid);
    }
};

// Hermitian stiffness form K and lumped mass M; the operator is L = M^-1 K.
struct Discretization {
    PeriodicGrid grid;
    SpMatC K;
    VecD M;
    bool real = true;  // K has no imaginary part

    VecC apply(const VecC& u) const
    {
        VecC Ku = K * u;
        return (Ku.array() / M.array()).matrix();
    }

    cplx inner(const VecC& u, const VecC& v) const { return (u.array() * v.conjugate().array() * M.array()).sum(); }
};

// Factored form L = (d + iA)^*(d + iA) + V with Peierls phases on edges:
// (D_A u)_e = (exp(i A_e h) u_{j+1} - u_j) / h.
inline Discretization assemble_operator(const Model& model)
{
    model.validate();
    const auto& g = model.grid;
    const int n = g.nodes();
    Discretization d;
    d.grid = g;
    d.M = model.metric.volumes(g);
    std::vector<Eigen::Triplet<cplx>> trip;
    trip.reserve(static_cast<std::size_t>(n) * (1 + 4 * g.dim()));
    bool real = true;
    for (int ax = 0; ax < g.dim(); ++ax) {
        const double h = g.spacing(ax);
        for (int j = 0; j < n; ++j) {
            const int k = g.neighbor(j, ax, +1);
            double w;
            if (g.dim() == 1)
                w = 1.0 / (0.5 * (model.metric.rho[j] + model.metric.rho[k])) / h;
            else
                w = g.cell_volume() / (h * h);
            const double phase = model.A.value[static_cast<std::size_t>(ax)][j] * h;
            if (phase != 0.0)
                real = false;
            const cplx p = std::polar(1.0, phase);
            trip.emplace_back(j, j, w);
            trip.emplace_back(k, k, w);
            trip.emplace_back(j, k, -w * p);
            trip.emplace_back(k, j, -w * std::conj(p));
        }
    }
    for (int j = 0; j < n; ++j)
        trip.emplace_back(j, j, model.V.value[j] * d.M[j]);
    d.K.resize(n, n);
    d.K.setFromTriplets(trip.begin(), trip.end());
    d.K.makeCompressed();
    d.real = real;
    return d;
}

// Largest |<Lu,v>_M - <u,Lv>_M| / (|u|_M |v|_M) over the given pairs.
inline double symmetry_defect(const Discretization& d, const VecC& u, const VecC& v)
{
    cplx a = d.inner(d.apply(u), v);
    cplx b = d.inner(u, d.apply(v));
    double nu = std::sqrt(d.inner(u, u).real()), nv = std::sqrt(d.inner(v, v).real());
    return std::abs(a - b) / (nu * nv);
}

struct SpectralDecomposition {
    PeriodicGrid grid;
    VecD M;            // mass weights
    VecD lambda;       // ascending
    MatC phi;          // columns are M-orthonormal eigenvectors
    double shift = 1;  // D with lambda_j + D > 0
    bool real = true;
    std::string provenance;

    int size() const { return static_cast<int>(lambda.size()); }

    // Modal coordinates <u, phi_j>_M.
    VecC project(const VecC& u) const { return phi.adjoint() * (M.cast<cplx>().asDiagonal() * u); }
};

constexpr int kDefaultEigenCap = 4096;

// Dense Hermitian eigensolve of M^-1/2 K M^-1/2 (LAPACK divide and conquer).
inline SpectralDecomposition eigendecompose(const Discretization& d, int cap = kDefaultEigenCap,
                                           std::string provenance = {})
{
    const int n = static_cast<int>(d.M.size());
    if (n > cap)
        throw ConfigError("eigensolve size " + std::to_string(n) + " exceeds the cap of " + std::to_string(cap) +
                          " unknowns");
    const VecD s = d.M.cwiseSqrt().cwiseInverse();
    SpectralDecomposition sd;
    sd.grid = d.grid;
    sd.M = d.M;
    sd.real = d.real;
    sd.provenance = std::move(provenance);
    sd.lambda.resize(n);
    if (d.real) {
        MatD a = MatD(d.K.real());
        a = s.asDiagonal() * a * s.asDiagonal();
        int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, a.data(), n, sd.lambda.data());
        if (info != 0)
            throw ComputeError("dsyevd failed with info " + std::to_string(info));
        sd.phi = (s.asDiagonal() * a).cast<cplx>();
    } else {
        MatC a = MatC(d.K);
        a = s.cast<cplx>().asDiagonal() * a * s.cast<cplx>().asDiagonal();
        int info = LAPACKE_zheevd(LAPACK_COL_MAJOR, 'V', 'U', n, a.data(), n, sd.lambda.data());
        if (info != 0)
            throw ComputeError("zheevd failed with info " + std::to_string(info));
        sd.phi = s.cast<cplx>().asDiagonal() * a;
    }
    sd.shift = std::max(0.0, -sd.lambda[0]) + 1.0;
    return sd;
}

inline SpectralDecomposition decompose(const Model& m, int cap = kDefaultEigenCap)
{
    return eigendecompose(assemble_operator(m), cap, m.name);
}

// max |Phi^H M Phi - I|
inline double orthonormality_defect(const SpectralDecomposition& sd)
{
    MatC G = sd.phi.adjoint() * sd.M.cast<cplx>().asDiagonal() * sd.phi;
    G -= MatC::Identity(G.rows(), G.cols());
    return G.cwiseAbs().maxCoeff();
}

// max_j |K phi_j - lambda_j M phi_j| / |K|_inf
inline double eigen_residual(const Discretization& d, const SpectralDecomposition& sd)
{
    MatC KP = d.K * sd.phi;
    MatC R = KP - d.M.cast<cplx>().asDiagonal() * sd.phi * sd.lambda.cast<cplx>().asDiagonal();
    double knorm = 0.0;
    for (int k = 0; k < d.K.outerSize(); ++k) {
        double row = 0.0;
        for (SpMatC::InnerIterator it(d.K, k); it; ++it)
            row += std::abs(it.value());
        knorm = std::max(knorm, row);
    }
    return R.colwise().norm().maxCoeff() / knorm;
}

// Gauge transform by kappa = exp(i theta): i kappa^-1 d kappa = -d theta, so A -> A - d theta.
// Phase differences are taken modulo 2 pi into (-pi, pi], which handles winding phases.
inline CovectorField gauge_conjugate(const PeriodicGrid& grid, const CovectorField& A, const VecD& theta)
{
    A.validate(grid);
    if (theta.size() != grid.nodes())
        throw ConfigError("theta size does not match grid");
    CovectorField out = A;
    for (int ax = 0; ax < grid.dim(); ++ax) {
        const double h = grid.spacing(ax);
        for (int j = 0; j < grid.nodes(); ++j) {
            const int k = grid.neighbor(j, ax, +1);
            double dth = std::remainder(theta[k] - theta[j], 2.0 * M_PI);
            out.value[static_cast<std::size_t>(ax)][j] -= dth / h;
        }
    }
    return out;
}

} // namespace bcm
