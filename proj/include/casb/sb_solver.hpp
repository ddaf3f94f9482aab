#pragma once

// Grid solver for the entropic bridge between two endpoint densities under
// isotropic diffusion of intensity eps (drift-free prior).  The solution is
// represented by two positive potentials phi, phi_hat with
//   rho(t) = phi(t) * phi_hat(t),
//   phi running backward and phi_hat forward under the heat flow
//   d(phi_hat)/dt = (eps/2) Lap(phi_hat),  d(phi)/dt = -(eps/2) Lap(phi).
// The endpoint factors are found by alternating marginal fitting, a strict
// contraction; the log-potential S = log(phi) is the dual value whose
// gradient steers the bridge: optimal control u = sqrt(eps) grad S.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "casb/calculus.hpp"
#include "casb/common.hpp"
#include "casb/field.hpp"
#include "casb/grid.hpp"

namespace casb {

// Endpoint-constrained diffusion steering problem on a grid.
struct ProblemData {
    Grid grid;
    TimeGrid time;
    double eps = 1.0;
    ScalarField rho0;
    ScalarField rho1;
};

struct SolveOptions {
    double tol = 1e-9;        // L1 marginal mismatch at both endpoints
    std::size_t max_iters = 50;
};

struct BridgeSolution {
    Grid grid;
    TimeGrid time;
    double eps = 1.0;
    TimeSeries<ScalarField> rho;  // rho(t_j) = phi * phi_hat
    TimeSeries<ScalarField> S;    // log phi  (dual value; gauge S(t0, center) = 0)
    TimeSeries<ScalarField> R;    // (1/2) log rho
    std::vector<IterationRecord> iterations;
};

// Convolution with the (truncated, renormalized) Gaussian kernel of the
// given variance along every axis; zero padding outside the box.  Exact
// identity for var == 0.
inline ScalarField heat_propagate(const ScalarField& f, double var) {
    if (var < 0.0) throw NumericalError("heat_propagate: negative kernel variance");
    if (var == 0.0) return f;
    const Grid& g = f.grid();
    double sigma = std::sqrt(var);
    ScalarField cur = f;
    for (int a = 0; a < g.dim(); ++a) {
        double h = g.spacing(a);
        if (sigma < 0.5 * h)
            throw NumericalError("heat_propagate: kernel variance unresolved by grid spacing");
        if (8.0 * sigma > g.upper(a) - g.lower(a))
            throw NumericalError("heat_propagate: diffusion length exceeds the box");
        std::size_t K = static_cast<std::size_t>(std::ceil(8.0 * sigma / h));
        std::vector<double> w(2 * K + 1);
        double s = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            double d = (static_cast<double>(k) - static_cast<double>(K)) * h;
            w[k] = std::exp(-d * d / (2.0 * var));
            s += w[k];
        }
        for (double& wk : w) wk /= s;

        std::size_t n = g.extent(a);
        std::size_t stride = (a == 0) ? 1 : g.extent(0);
        std::size_t lines = g.size() / n;
        ScalarField next(g, 0.0);
        for (std::size_t line = 0; line < lines; ++line) {
            std::size_t base = (a == 0) ? line * n : line;
            for (std::size_t i = 0; i < n; ++i) {
                long kmin = -static_cast<long>(std::min(K, i));
                long kmax = static_cast<long>(std::min(K, n - 1 - i));
                double acc = 0.0;
                for (long k = kmin; k <= kmax; ++k) {
                    std::size_t src = static_cast<std::size_t>(static_cast<long>(i) + k);
                    acc += w[static_cast<std::size_t>(k + static_cast<long>(K))] *
                           cur[base + src * stride];
                }
                next[base + i * stride] = acc;
            }
        }
        cur = next;
    }
    return cur;
}

namespace detail {

// Divide num by den with a relative floor on the divisor; counts floored nodes.
inline ScalarField floored_divide(const ScalarField& num, const ScalarField& den,
                                  long& floored) {
    double dmax = 0.0;
    for (std::size_t k = 0; k < den.size(); ++k) dmax = std::max(dmax, den[k]);
    double floor = kRelDensityFloor * dmax;
    if (!(floor > 0.0))
        throw NumericalError("bridge iteration: divisor field vanished");
    ScalarField out(num.grid());
    for (std::size_t k = 0; k < num.size(); ++k) {
        double d = den[k];
        if (d < floor) {
            d = floor;
            ++floored;
        }
        out[k] = num[k] / d;
    }
    return out;
}

inline ScalarField log_floored(const ScalarField& f, double scale = 1.0) {
    return map_field(f, [scale](double v) {
        return scale * std::log(std::max(v, kAbsDensityFloor));
    });
}

inline ScalarField hadamard(const ScalarField& a, const ScalarField& b) {
    return zip_fields(a, b, [](double x, double y) { return x * y; });
}

}  // namespace detail

// Clock running at the diffusion rate: same number of steps over
// [t0, t0 + eps * (t1 - t0)].  The heat factors advance by variance
// eps * dt per physical step, i.e. by dtau per diffusion-clock step.
inline TimeGrid diffusion_clock(const TimeGrid& tg, double eps) {
    return TimeGrid(tg.t0(), tg.t0() + eps * (tg.t1() - tg.t0()), tg.steps());
}

inline BridgeSolution solve_bridge(const ProblemData& prob, const SolveOptions& opts = {}) {
    const Grid& g = prob.grid;
    if (prob.rho0.grid() != g || prob.rho1.grid() != g)
        throw ConfigError("solve_bridge: endpoint densities must live on the problem grid");
    if (!(prob.eps > 0.0) || !std::isfinite(prob.eps))
        throw ConfigError("solve_bridge: eps must be positive and finite");

    ScalarField rho0 = normalize_density(prob.rho0);
    ScalarField rho1 = normalize_density(prob.rho1);
    const double c = prob.eps * (prob.time.t1() - prob.time.t0());

    ScalarField phi1(g, 1.0), phi0(g, 1.0);
    ScalarField phih0(g, 1.0), phih1(g, 1.0);
    bool have_phih0 = false;
    std::vector<IterationRecord> log;
    bool converged = false;

    for (std::size_t it = 1; it <= opts.max_iters; ++it) {
        IterationRecord rec;
        rec.iteration = static_cast<int>(it);
        phi1 = detail::floored_divide(rho1, phih1, rec.floored_nodes);
        phi0 = heat_propagate(phi1, c);
        rec.err_initial =
            have_phih0 ? l1_distance(detail::hadamard(phi0, phih0), rho0)
                       : l1_distance(phi0, rho0);
        phih0 = detail::floored_divide(rho0, phi0, rec.floored_nodes);
        have_phih0 = true;
        phih1 = heat_propagate(phih0, c);
        rec.err_terminal = l1_distance(detail::hadamard(phi1, phih1), rho1);
        log.push_back(rec);
        if (std::max(rec.err_initial, rec.err_terminal) <= opts.tol) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw ConvergenceError(
            "solve_bridge: marginal fitting did not reach tol " +
                std::to_string(opts.tol) + " within " + std::to_string(opts.max_iters) +
                " iterations",
            log);

    // Gauge: scale phi so that phi(t0) = 1 at the box-center node.
    std::size_t center = g.dim() == 1 ? g.index(g.extent(0) / 2)
                                      : g.index(g.extent(0) / 2, g.extent(1) / 2);
    double a = phi0[center];
    if (!(a > 0.0) || !std::isfinite(a))
        throw NumericalError("solve_bridge: dual potential vanished at the gauge node");
    phi1 = map_field(phi1, [a](double v) { return v / a; });
    phih0 = map_field(phih0, [a](double v) { return v * a; });

    // Fill interior slices by stepping the factors with per-step kernels.
    const std::size_t M = prob.time.steps();
    const double step_var = prob.eps * prob.time.dt();
    std::vector<ScalarField> phi(M + 1, ScalarField(g, 0.0));
    std::vector<ScalarField> phih(M + 1, ScalarField(g, 0.0));
    phi[M] = phi1;
    for (std::size_t j = M; j-- > 0;) phi[j] = heat_propagate(phi[j + 1], step_var);
    phih[0] = phih0;
    for (std::size_t j = 1; j <= M; ++j) phih[j] = heat_propagate(phih[j - 1], step_var);

    std::vector<ScalarField> rho_s, S_s, R_s;
    rho_s.reserve(M + 1);
    S_s.reserve(M + 1);
    R_s.reserve(M + 1);
    for (std::size_t j = 0; j <= M; ++j) {
        ScalarField rho_j = detail::hadamard(phi[j], phih[j]);
        S_s.push_back(detail::log_floored(phi[j]));
        R_s.push_back(detail::log_floored(rho_j, 0.5));
        rho_s.push_back(std::move(rho_j));
    }
    return BridgeSolution{g,
                          prob.time,
                          prob.eps,
                          TimeSeries<ScalarField>(prob.time, std::move(rho_s)),
                          TimeSeries<ScalarField>(prob.time, std::move(S_s)),
                          TimeSeries<ScalarField>(prob.time, std::move(R_s)),
                          std::move(log)};
}

// Optimal feedback control u(t_j) = g^T grad S(t_j) = sqrt(eps) grad S(t_j).
inline VectorField optimal_control(const BridgeSolution& sol, std::size_t j) {
    VectorField grad = gradient(sol.S.slice(j));
    double root = std::sqrt(sol.eps);
    for (int a = 0; a < sol.grid.dim(); ++a)
        grad.comp(a) = map_field(grad.comp(a), [root](double v) { return root * v; });
    return grad;
}

// The control on every slice of the solution clock.
inline TimeSeries<VectorField> optimal_control_series(const BridgeSolution& sol) {
    std::vector<VectorField> u;
    u.reserve(sol.time.slices());
    for (std::size_t j = 0; j < sol.time.slices(); ++j)
        u.push_back(optimal_control(sol, j));
    return TimeSeries<VectorField>(sol.time, std::move(u));
}

}  // namespace casb
