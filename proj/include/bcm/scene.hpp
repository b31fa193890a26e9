#pragma once

#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "bcm/operator.hpp"
#include "bcm/wave.hpp"

namespace bcm {

// Random trigonometric field mean + amp * sum_k c_k cos(2 pi <k, x> / L + phi_k), normalized so
// that the oscillating part is bounded by amp.
inline VecD smooth_field(const PeriodicGrid& g, std::mt19937_64& rng, double mean, double amp, int modes = 3)
{
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<std::array<double, 4>> terms;  // k0, k1, weight, phase
    double wsum = 0.0;
    for (int m = 0; m < modes; ++m) {
        double k0 = std::floor(U(rng) * 3.0) + (g.dim() == 1 ? 1.0 : 0.0);
        double k1 = g.dim() == 2 ? std::floor(U(rng) * 3.0) : 0.0;
        if (k0 == 0.0 && k1 == 0.0)
            k0 = 1.0;
        double w = U(rng) * 2.0 - 1.0;
        terms.push_back({k0, k1, w, 2.0 * M_PI * U(rng)});
        wsum += std::abs(w);
    }
    VecD f(g.nodes());
    for (int i = 0; i < g.nodes(); ++i) {
        auto p = g.position(i);
        double v = 0.0;
        for (const auto& t : terms)
            v += t[2] * std::cos(2.0 * M_PI * (t[0] * p[0] / g.length(0) + (g.dim() == 2 ? t[1] * p[1] / g.length(1) : 0.0)) + t[3]);
        f[i] = mean + (wsum > 0.0 ? amp * v / wsum : 0.0);
    }
    return f;
}

// Random smooth (rho, A, V) with rho in [1 - rho_amp, 1 + rho_amp].
inline Model random_model(const PeriodicGrid& g, std::mt19937_64& rng, double rho_amp, double A_amp, double V_amp,
                          std::string name = "random")
{
    Model m = Model::free(g, std::move(name));
    m.metric.rho = smooth_field(g, rng, 1.0, rho_amp);
    for (int ax = 0; ax < g.dim(); ++ax)
        m.A.value[static_cast<std::size_t>(ax)] = smooth_field(g, rng, 0.0, A_amp);
    m.V.value = smooth_field(g, rng, 0.0, V_amp);
    return m;
}

// Nodes within chart distance radius of a centre.
inline IndicatorSet chart_ball(const PeriodicGrid& g, const VecD& volumes, std::array<double, 2> centre, double radius)
{
    std::vector<char> f(static_cast<std::size_t>(g.nodes()));
    for (int i = 0; i < g.nodes(); ++i)
        f[static_cast<std::size_t>(i)] = g.flat_distance(g.position(i), centre) < radius ? 1 : 0;
    return IndicatorSet::from_flags(std::move(f), volumes);
}

// Smooth gauge phase supported in a chart ball away from the observation set.
inline VecD bump_phase(const PeriodicGrid& g, std::array<double, 2> centre, double width, double amplitude)
{
    VecD th(g.nodes());
    for (int i = 0; i < g.nodes(); ++i)
        th[i] = amplitude * bump(g.flat_distance(g.position(i), centre) / width);
    return th;
}

} // namespace bcm
