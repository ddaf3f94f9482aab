#pragma once

// Euler-Maruyama simulation of the controlled bridge diffusion
//   dx = sqrt(eps) u(t, x) dt + sqrt(eps) dw
// and empirical validation of density steering.  Every normal draw comes from
// a counter-based generator keyed by (seed, particle, step, draw), so a
// particle's path is reproducible independent of the ensemble size and of any
// scheduling order.  Particles reflect at the box faces; a step that would
// carry one beyond 10% of the box width past a face aborts with diagnostics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "casb/common.hpp"
#include "casb/field.hpp"
#include "casb/grid.hpp"
#include "casb/sb_solver.hpp"

namespace casb {

// Particle positions at one time index, particle-major: positions[p * dim + a].
struct EnsembleState {
    std::vector<double> positions;
    std::size_t count = 0;
    std::uint64_t seed = 0;
    std::size_t time_index = 0;
};

struct EnsembleOptions {
    bool record_trajectory = false;  // keep a snapshot per slice (memory-heavy)
    double escape_pad = 0.1;         // blow-up threshold, fraction of box width
};

// Trajectory is empty unless requested; histogram is probability mass per
// node cell (sums to one over the grid).
struct EnsembleResult {
    EnsembleState terminal;
    std::vector<EnsembleState> trajectory;
    ScalarField histogram;
};

namespace detail {

// SplitMix64 finalizer: the standard 64-bit avalanche round.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Uniform in (0, 1], keyed by the draw path.  The +1 keeps log() finite.
inline double counter_uniform(std::uint64_t seed, std::uint64_t particle,
                              std::uint64_t step, std::uint64_t draw) {
    const std::uint64_t z = mix64(mix64(mix64(mix64(seed) ^ particle) ^ step) ^ draw);
    return (static_cast<double>(z >> 11) + 1.0) * 0x1p-53;
}

// One standard normal per key via Box-Muller (two uniforms per draw index).
inline double counter_normal(std::uint64_t seed, std::uint64_t particle,
                             std::uint64_t step, std::uint64_t draw) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    const double u1 = counter_uniform(seed, particle, step, 2 * draw);
    const double u2 = counter_uniform(seed, particle, step, 2 * draw + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

// Step index reserved for the initial-position draws.
constexpr std::uint64_t kInitStep = ~0ull;

}  // namespace detail

// Draw `count` independent positions from the piecewise-constant density the
// grid samples represent: pick a node cell by its probability mass, then
// place the particle uniformly inside that cell (clipped to the box).  This
// is an exact sampler of the discrete density, reused as the Monte-Carlo
// oracle for histogram checks.
inline EnsembleState sample_density(const ScalarField& rho, std::size_t count,
                                    std::uint64_t seed) {
    if (count == 0) throw ConfigError("sample_density: need at least one particle");
    const Grid& g = rho.grid();
    const int dim = g.dim();
    std::vector<double> cum(g.size());
    double total = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double mass = std::max(rho[k], 0.0) * g.quad_weight(k);
        total += mass;
        cum[k] = total;
    }
    if (!(total > 0.0)) throw ConfigError("sample_density: density has no mass");

    EnsembleState state;
    state.count = count;
    state.seed = seed;
    state.time_index = 0;
    state.positions.resize(count * static_cast<std::size_t>(dim));
    for (std::size_t p = 0; p < count; ++p) {
        const double target =
            detail::counter_uniform(seed, p, detail::kInitStep, 0) * total;
        const std::size_t cell = static_cast<std::size_t>(
            std::lower_bound(cum.begin(), cum.end(), target) - cum.begin());
        const std::size_t k = std::min(cell, g.size() - 1);
        for (int a = 0; a < dim; ++a) {
            const double jitter =
                detail::counter_uniform(seed, p, detail::kInitStep,
                                        1 + static_cast<std::uint64_t>(a)) -
                0.5;
            const double x = g.node_coord(k, a) + jitter * g.spacing(a);
            state.positions[p * dim + a] =
                std::clamp(x, g.lower(a), g.upper(a));
        }
    }
    return state;
}

// Probability mass per node cell (nearest-node binning), normalized to one.
inline ScalarField node_histogram(const EnsembleState& state, const Grid& g) {
    if (state.count == 0) throw ConfigError("node_histogram: empty ensemble");
    const int dim = g.dim();
    ScalarField hist(g);
    for (std::size_t p = 0; p < state.count; ++p) {
        std::size_t idx[2] = {0, 0};
        for (int a = 0; a < dim; ++a) {
            const double t =
                (state.positions[p * dim + a] - g.lower(a)) / g.spacing(a);
            const double r = std::round(t);
            idx[a] = static_cast<std::size_t>(
                std::clamp(r, 0.0, static_cast<double>(g.extent(a) - 1)));
        }
        const std::size_t k = dim == 1 ? g.index(idx[0]) : g.index(idx[0], idx[1]);
        hist[k] += 1.0;
    }
    const double inv = 1.0 / static_cast<double>(state.count);
    for (std::size_t k = 0; k < g.size(); ++k) hist[k] *= inv;
    return hist;
}

// L1 distance between a cell-mass histogram and the mass a density places in
// each cell.  Identical distributions give 0, disjoint supports give 2.
inline double histogram_distance(const ScalarField& hist, const ScalarField& rho) {
    if (hist.grid() != rho.grid())
        throw ConfigError("histogram_distance: histogram and density grids differ");
    const Grid& g = hist.grid();
    double dist = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k)
        dist += std::fabs(hist[k] - rho[k] * g.quad_weight(k));
    return dist;
}

// Simulate `count` particles of dx = sqrt(eps) u dt + sqrt(eps) dw from
// rho0 over the problem's time grid, using the control series slice j on
// step j -> j+1.  Positions reflect at the box faces; a proposed position
// beyond escape_pad * width past a face raises NumericalError with the
// particle, step, and coordinates.  Returns the terminal state and its
// node-cell histogram (plus per-slice snapshots when recording).
inline EnsembleResult simulate(const ProblemData& data,
                               const TimeSeries<VectorField>& u,
                               std::size_t count, std::uint64_t seed,
                               const EnsembleOptions& opts = {}) {
    const Grid& g = data.grid;
    const int dim = g.dim();
    if (count == 0) throw ConfigError("simulate: need at least one particle");
    if (data.eps < 0.0) throw ConfigError("simulate: noise level must be >= 0");
    if (u.slice(0).grid() != g)
        throw ConfigError("simulate: control grid differs from problem grid");
    if (u.time_grid() != data.time)
        throw ConfigError("simulate: control clock differs from problem clock");

    const double dt = data.time.dt();
    const double root_eps = std::sqrt(data.eps);
    const double noise = root_eps * std::sqrt(dt);
    double width[2] = {0.0, 0.0};
    for (int a = 0; a < dim; ++a) width[a] = g.upper(a) - g.lower(a);

    EnsembleState state = sample_density(data.rho0, count, seed);
    EnsembleResult result;
    if (opts.record_trajectory) result.trajectory.push_back(state);

    const std::size_t steps = data.time.steps();
    for (std::size_t j = 0; j < steps; ++j) {
        const VectorField& uj = u.slice(j);
        for (std::size_t p = 0; p < count; ++p) {
            double* x = &state.positions[p * dim];
            const Vec2 uv = eval_interp(uj, Vec2{x[0], dim == 2 ? x[1] : 0.0});
            for (int a = 0; a < dim; ++a) {
                const double drift = root_eps * (a == 0 ? uv.x0 : uv.x1);
                const double xi = detail::counter_normal(
                    seed, p, j, static_cast<std::uint64_t>(a));
                double xn = x[a] + drift * dt + noise * xi;
                const double pad = opts.escape_pad * width[a];
                if (xn < g.lower(a) - pad || xn > g.upper(a) + pad)
                    throw NumericalError(
                        "simulate: particle " + std::to_string(p) + " escaped at step " +
                        std::to_string(j) + " (axis " + std::to_string(a) + ", x=" +
                        std::to_string(xn) + ", box [" + std::to_string(g.lower(a)) +
                        ", " + std::to_string(g.upper(a)) + "])");
                // Reflect strays back into the box (at most one bounce within
                // the pad since escape_pad < 1).
                if (xn < g.lower(a)) xn = 2.0 * g.lower(a) - xn;
                if (xn > g.upper(a)) xn = 2.0 * g.upper(a) - xn;
                x[a] = xn;
            }
        }
        state.time_index = j + 1;
        if (opts.record_trajectory) result.trajectory.push_back(state);
    }

    result.histogram = node_histogram(state, g);
    result.terminal = std::move(state);
    return result;
}

}  // namespace casb
