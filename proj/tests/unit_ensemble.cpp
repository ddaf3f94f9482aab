#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "casb/ensemble.hpp"
#include "support/oracles.hpp"

using namespace casb;

namespace {

ScalarField gaussian_density(const Grid& g, double mean, double var) {
    return normalize_density(ScalarField::sample(g, [&](double x, double) {
        return std::exp(-(x - mean) * (x - mean) / (2.0 * var));
    }));
}

TimeSeries<VectorField> zero_control(const Grid& g, const TimeGrid& tg) {
    return TimeSeries<VectorField>(tg,
                                   std::vector<VectorField>(tg.slices(), VectorField(g)));
}

double sample_mean(const EnsembleState& s) {
    double m = 0.0;
    for (double x : s.positions) m += x;
    return m / static_cast<double>(s.count);
}

double sample_variance(const EnsembleState& s) {
    const double m = sample_mean(s);
    double v = 0.0;
    for (double x : s.positions) v += (x - m) * (x - m);
    return v / static_cast<double>(s.count - 1);
}

}  // namespace

TEST_CASE("particles stay put with zero control and zero noise", "[ensemble]") {
    Grid g(-3.0, 3.0, 64);
    TimeGrid tg(0.0, 1.0, 16);
    ProblemData data{g, tg, 0.0, gaussian_density(g, 0.0, 0.5),
                     gaussian_density(g, 0.0, 0.5)};
    const EnsembleState start = sample_density(data.rho0, 500, 11);
    const EnsembleResult run = simulate(data, zero_control(g, tg), 500, 11);
    REQUIRE(run.terminal.count == start.count);
    for (std::size_t i = 0; i < start.positions.size(); ++i)
        REQUIRE(run.terminal.positions[i] == start.positions[i]);
}

TEST_CASE("free diffusion variance grows linearly at the noise rate", "[ensemble]") {
    Grid g(-8.0, 8.0, 256);
    TimeGrid tg(0.0, 1.0, 50);
    const double eps = 0.5, var0 = 0.04;
    const std::size_t n = 20000;
    ProblemData data{g, tg, eps, gaussian_density(g, 0.0, var0),
                     gaussian_density(g, 0.0, var0)};
    const EnsembleResult run = simulate(data, zero_control(g, tg), n, 29);
    // Brownian increments are exact in distribution under Euler steps, so the
    // terminal variance is var0 + eps * T up to sampling error (the cell
    // jitter of the initial sampler adds h^2/12, well inside tolerance).
    const double want = var0 + eps * 1.0;
    const double got = sample_variance(run.terminal);
    const double se = want * std::sqrt(2.0 / static_cast<double>(n - 1));
    REQUIRE(std::fabs(got - want) <= 3.0 * se + 0.01);
}

TEST_CASE("trajectories are reproducible by seed and differ across seeds", "[ensemble]") {
    Grid g(-4.0, 4.0, 96);
    TimeGrid tg(0.0, 0.5, 20);
    ProblemData data{g, tg, 0.3, gaussian_density(g, -0.5, 0.2),
                     gaussian_density(g, 0.5, 0.2)};
    EnsembleOptions opts;
    opts.record_trajectory = true;
    const EnsembleResult a = simulate(data, zero_control(g, tg), 300, 7, opts);
    const EnsembleResult b = simulate(data, zero_control(g, tg), 300, 7, opts);
    REQUIRE(a.trajectory.size() == tg.slices());
    for (std::size_t j = 0; j < a.trajectory.size(); ++j)
        for (std::size_t i = 0; i < a.trajectory[j].positions.size(); ++i)
            REQUIRE(a.trajectory[j].positions[i] == b.trajectory[j].positions[i]);

    const EnsembleResult c = simulate(data, zero_control(g, tg), 300, 8);
    bool any_differ = false;
    for (std::size_t i = 0; i < c.terminal.positions.size(); ++i)
        any_differ = any_differ || c.terminal.positions[i] != a.terminal.positions[i];
    REQUIRE(any_differ);
}

TEST_CASE("a particle's path does not depend on the ensemble size", "[ensemble]") {
    Grid g(-4.0, 4.0, 96);
    TimeGrid tg(0.0, 0.5, 16);
    ProblemData data{g, tg, 0.4, gaussian_density(g, 0.0, 0.3),
                     gaussian_density(g, 0.0, 0.3)};
    const EnsembleResult small = simulate(data, zero_control(g, tg), 50, 13);
    const EnsembleResult large = simulate(data, zero_control(g, tg), 400, 13);
    for (std::size_t p = 0; p < 50; ++p)
        REQUIRE(small.terminal.positions[p] == large.terminal.positions[p]);
}

TEST_CASE("histogram distance is zero for matching mass and two for disjoint supports",
          "[ensemble]") {
    Grid g(-2.0, 2.0, 33);
    ScalarField rho = gaussian_density(g, 0.0, 0.3);
    ScalarField hist(g);
    for (std::size_t k = 0; k < g.size(); ++k) hist[k] = rho[k] * g.quad_weight(k);
    REQUIRE(histogram_distance(hist, rho) == 0.0);

    ScalarField left(g), right_density(g);
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double x = g.node_coord(k, 0);
        if (x < -0.5) left[k] = 1.0;
        if (x > 0.5) right_density[k] = 1.0;
    }
    double mass = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) mass += left[k];
    for (std::size_t k = 0; k < g.size(); ++k) left[k] /= mass;
    const ScalarField right = normalize_density(right_density);
    REQUIRE(histogram_distance(left, right) == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("exact sampler reproduces its density within the Monte-Carlo budget",
          "[ensemble]") {
    Grid g(-6.0, 6.0, 256);
    const ScalarField rho = gaussian_density(g, 0.7, 0.4);
    const EnsembleState s = sample_density(rho, 100000, 101);
    const ScalarField hist = node_histogram(s, g);
    const double dist = histogram_distance(hist, rho);
    INFO("sampler L1 " << dist);
    REQUIRE(dist <= 0.05);  // hard bound; typical ~0.02 at this grid
}

TEST_CASE("steered ensemble lands on the target within the sampling bound", "[ensemble]") {
    Grid g(-6.0, 6.0, 512);
    TimeGrid tg(0.0, 1.0, 200);
    ProblemData data{g, tg, 0.5, gaussian_density(g, -1.0, 0.25),
                     gaussian_density(g, 1.0, 0.25)};
    const BridgeSolution sol = solve_bridge(data);
    const TimeSeries<VectorField> u = optimal_control_series(sol);

    const double h = g.spacing(0);
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const EnsembleResult coarse = simulate(data, u, 10000, seed);
        const EnsembleResult fine = simulate(data, u, 100000, seed);
        const double d_coarse = histogram_distance(coarse.histogram, data.rho1);
        const double d_fine = histogram_distance(fine.histogram, data.rho1);
        INFO("seed " << seed << " L1 at 1e4 " << d_coarse << ", at 1e5 " << d_fine);
        // Monte-Carlo scaling: calibrate C from the coarse run, then demand
        // the fine run obey C/sqrt(N) plus the binning width.
        const double c = std::max(d_coarse - 2.0 * h, 0.0) * std::sqrt(10000.0);
        REQUIRE(d_fine <= c / std::sqrt(100000.0) + 2.0 * h);
        REQUIRE(d_fine < d_coarse);
    }
}

TEST_CASE("ensemble rejects bad inputs and flags escaping particles", "[ensemble]") {
    Grid g(-2.0, 2.0, 32);
    TimeGrid tg(0.0, 1.0, 8);
    ProblemData data{g, tg, 0.5, gaussian_density(g, 0.0, 0.3),
                     gaussian_density(g, 0.0, 0.3)};
    REQUIRE_THROWS_AS(simulate(data, zero_control(g, tg), 0, 1), ConfigError);

    Grid other(-2.0, 2.0, 48);
    REQUIRE_THROWS_AS(simulate(data, zero_control(other, tg), 10, 1), ConfigError);

    TimeGrid wrong(0.0, 2.0, 8);
    REQUIRE_THROWS_AS(simulate(data, zero_control(g, wrong), 10, 1), ConfigError);

    ScalarField empty(g);
    REQUIRE_THROWS_AS(sample_density(empty, 10, 1), ConfigError);

    // Noise far above the box scale must trip the escape guard.
    ProblemData wild{g, tg, 400.0, gaussian_density(g, 0.0, 0.3),
                     gaussian_density(g, 0.0, 0.3)};
    REQUIRE_THROWS_AS(simulate(wild, zero_control(g, tg), 200, 5), NumericalError);
}
