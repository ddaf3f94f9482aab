#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "casb/calculus.hpp"
#include "casb/common.hpp"
#include "casb/field.hpp"
#include "casb/grid.hpp"

namespace casb {

// Catalog of one-dimensional problems with an analytically chosen phase.
enum class CaseTag { kConstantQuadratic, kTimeVaryingQuadratic, kStateDependentSigma };

inline std::string to_string(CaseTag tag) {
    switch (tag) {
        case CaseTag::kConstantQuadratic: return "quad-const";
        case CaseTag::kTimeVaryingQuadratic: return "quad-tvar";
        case CaseTag::kStateDependentSigma: return "sine-sigma";
    }
    return "unknown";
}

inline CaseTag case_tag_from_string(const std::string& s) {
    if (s == "quad-const") return CaseTag::kConstantQuadratic;
    if (s == "quad-tvar") return CaseTag::kTimeVaryingQuadratic;
    if (s == "sine-sigma") return CaseTag::kStateDependentSigma;
    throw ConfigError("manufactured case: unknown tag '" + s +
                      "' (expected quad-const, quad-tvar, or sine-sigma)");
}

// A problem whose phase S(t,x) is known in closed form together with its
// exact derivatives, so the state cost can be derived instead of solved for.
struct ManufacturedCase {
    std::string tag;
    Grid grid;
    TimeGrid time;
    std::function<double(double, double)> phase;      // S(t, x)
    std::function<double(double, double)> phase_dt;   // exact dS/dt
    std::function<double(double, double)> phase_dx;   // exact dS/dx
    std::function<double(double, double)> phase_dxx;  // exact d2S/dx2
    std::function<double(double)> drift;              // f(x)
    std::function<double(double)> input;              // g(x)
    std::function<double(double)> noise;              // sigma(x); Sigma = sigma^2
    ScalarField rho0;
};

struct PrimalIntegration {
    TimeSeries<ScalarField> rho;
    std::vector<double> mass_drift;  // pre-renormalization |mass - 1| per stored interval
    long substeps = 0;               // total explicit substeps taken
    double courant = 0.0;            // realized max Courant number over all substeps
};

// State cost that makes the chosen phase solve the value-function PDE
// exactly:  q = dS/dt + <grad S, f> + 1/2 <grad S, g g' grad S>
//               + 1/2 <Sigma, Hess S>,  all derivatives analytic.
inline TimeSeries<ScalarField> derive_q(const ManufacturedCase& c) {
    const Grid& g = c.grid;
    std::vector<ScalarField> slices;
    slices.reserve(c.time.slices());
    for (std::size_t j = 0; j < c.time.slices(); ++j) {
        double t = c.time.time(j);
        ScalarField q(g);
        for (std::size_t k = 0; k < g.size(); ++k) {
            double x = g.node_coord(k, 0);
            double sx = c.phase_dx(t, x);
            double gg = c.input(x) * c.input(x);
            double sig = c.noise(x) * c.noise(x);
            q[k] = c.phase_dt(t, x) + sx * c.drift(x) + 0.5 * gg * sx * sx +
                   0.5 * sig * c.phase_dxx(t, x);
        }
        slices.push_back(std::move(q));
    }
    return TimeSeries<ScalarField>(c.time, std::move(slices));
}

// Grid samples of the analytic phase and of the problem coefficients.
inline TimeSeries<ScalarField> sample_phase(const ManufacturedCase& c) {
    std::vector<ScalarField> slices;
    slices.reserve(c.time.slices());
    for (std::size_t j = 0; j < c.time.slices(); ++j) {
        double t = c.time.time(j);
        slices.push_back(ScalarField::sample(
            c.grid, [&](double x, double) { return c.phase(t, x); }));
    }
    return TimeSeries<ScalarField>(c.time, std::move(slices));
}

inline VectorField drift_field(const ManufacturedCase& c) {
    VectorField f(c.grid);
    for (std::size_t k = 0; k < c.grid.size(); ++k)
        f.set(k, Vec2{c.drift(c.grid.node_coord(k, 0)), 0.0});
    return f;
}

inline GenMatrixField input_field(const ManufacturedCase& c) {
    return GenMatrixField::sample(
        c.grid, [&](double x, double) { return Mat2::scalar(c.input(x)); });
}

inline SymMatrixField noise_field(const ManufacturedCase& c) {
    return SymMatrixField::sample(c.grid, [&](double x, double) {
        double s = c.noise(x);
        return SymMat2{s * s, 0.0, 0.0};
    });
}

// Explicit forward-time central-space integration of the density transport
//   d rho/dt = -d/dx( rho (f + g g' dS/dx) ) + 1/2 d2/dx2( Sigma rho )
// from rho0.  Each reporting interval is subdivided so the explicit step
// satisfies  dt <= 0.9 min(h^2 / max Sigma, h / max|drift|);  boundary nodes
// are held fixed (densities are assumed negligible at the box faces) and the
// mass is renormalized after every substep, with the pre-normalization drift
// logged per interval.
inline PrimalIntegration integrate_primal(const ManufacturedCase& c,
                                          long max_substeps_per_interval = 200000) {
    const Grid& g = c.grid;
    if (g.dim() != 1)
        throw ConfigError("primal integrator: catalog cases are one-dimensional");
    const std::size_t n = g.size();
    const double h = g.spacing(0);
    const double dt = c.time.dt();

    ScalarField sig(g);
    for (std::size_t k = 0; k < n; ++k) {
        double s = c.noise(g.node_coord(k, 0));
        sig[k] = s * s;
    }
    double sig_max = max_abs(sig);

    ScalarField rho = normalize_density(c.rho0);
    std::vector<ScalarField> slices;
    slices.reserve(c.time.slices());
    slices.push_back(rho);

    PrimalIntegration out;
    out.mass_drift.reserve(c.time.slices() - 1);

    auto drift_at = [&](double t, std::size_t k) {
        double x = g.node_coord(k, 0);
        double gg = c.input(x) * c.input(x);
        return c.drift(x) + gg * c.phase_dx(t, x);
    };

    for (std::size_t j = 0; j + 1 < c.time.slices(); ++j) {
        double t0 = c.time.time(j);

        // Conservative speed bound for the interval: sample the analytic
        // drift at its endpoints and midpoint.
        double umax = 0.0;
        for (double t : {t0, t0 + 0.5 * dt, t0 + dt})
            for (std::size_t k = 0; k < n; ++k)
                umax = std::max(umax, std::abs(drift_at(t, k)));

        double limit = std::numeric_limits<double>::infinity();
        if (sig_max > 0.0) limit = std::min(limit, h * h / sig_max);
        if (umax > 0.0) limit = std::min(limit, h / umax);
        limit *= 0.9;

        long steps = 1;
        if (std::isfinite(limit)) steps = std::max<long>(1, static_cast<long>(std::ceil(dt / limit)));
        if (steps > max_substeps_per_interval)
            throw NumericalError("primal integrator: interval needs " + std::to_string(steps) +
                                 " substeps, over the limit of " +
                                 std::to_string(max_substeps_per_interval));
        double delta = dt / static_cast<double>(steps);
        out.courant = std::max({out.courant, delta * sig_max / (h * h), delta * umax / h});

        // Interior rate of change  -d1(rho u) + (1/2) d2(sigma rho); boundary
        // nodes are frozen.
        auto rate = [&](double t, const ScalarField& state) {
            ScalarField flux(g);
            ScalarField diffused =
                zip_fields(sig, state, [](double a, double b) { return a * b; });
            for (std::size_t k = 0; k < n; ++k) flux[k] = state[k] * drift_at(t, k);
            ScalarField adv = detail::d1_axis(flux, 0);
            ScalarField wdif = detail::d2_axis(diffused, 0);
            ScalarField r(g);
            for (std::size_t k = 1; k + 1 < n; ++k) r[k] = -adv[k] + 0.5 * wdif[k];
            return r;
        };

        double worst_drift = 0.0;
        for (long s = 0; s < steps; ++s) {
            double t = t0 + delta * static_cast<double>(s);

            // Explicit midpoint: second order in the substep, so the stored
            // slices track the semi-discrete flow to O(delta^2).
            const ScalarField r1 = rate(t, rho);
            ScalarField half = rho;
            for (std::size_t k = 1; k + 1 < n; ++k) half[k] = rho[k] + 0.5 * delta * r1[k];
            const ScalarField r2 = rate(t + 0.5 * delta, half);
            ScalarField next = rho;
            for (std::size_t k = 1; k + 1 < n; ++k) next[k] = rho[k] + delta * r2[k];

            double low = 0.0;
            for (std::size_t k = 0; k < n; ++k) low = std::min(low, next[k]);
            if (low < -1e-10)
                throw NumericalError(
                    "primal integrator: density fell below -1e-10 (unstable step)");

            double mass = integrate(next);
            worst_drift = std::max(worst_drift, std::abs(mass - 1.0));
            if (!(mass > 0.0))
                throw NumericalError("primal integrator: mass became non-positive");
            for (std::size_t k = 0; k < n; ++k) next[k] /= mass;
            rho = std::move(next);
            ++out.substeps;
        }
        out.mass_drift.push_back(worst_drift);
        slices.push_back(rho);
    }

    out.rho = TimeSeries<ScalarField>(c.time, std::move(slices));
    return out;
}

namespace detail {

inline ManufacturedCase quadratic_case(std::string tag, std::size_t n, std::size_t m,
                                       double alpha) {
    Grid grid(-9.0, 9.0, n);
    TimeGrid time(0.0, 0.6, m);
    const double a = 0.25, b = 0.1;
    ManufacturedCase c{
        std::move(tag),
        grid,
        time,
        [=](double, double x) { return 0.5 * a * x * x + b * x; },
        [](double, double) { return 0.0; },
        [=](double, double x) { return a * x + b; },
        [=](double, double) { return a; },
        [](double) { return 0.0; },
        [](double) { return 1.0; },
        [=](double x) { return 1.0 + alpha * std::sin(x); },
        normalize_density(ScalarField::sample(
            grid, [](double x, double) { return std::exp(-x * x / 0.5); })),
    };
    return c;
}

}  // namespace detail

// State-dependent-noise variant; alpha = 0 degenerates to the constant case.
inline ManufacturedCase sine_sigma_case(double alpha, std::size_t n, std::size_t m) {
    if (!(std::abs(alpha) < 1.0))
        throw ConfigError("manufactured case: |alpha| must be < 1 to keep the noise "
                          "covariance positive");
    return detail::quadratic_case(to_string(CaseTag::kStateDependentSigma), n, m, alpha);
}

inline ManufacturedCase build_case(CaseTag tag, std::size_t n, std::size_t m) {
    switch (tag) {
        case CaseTag::kConstantQuadratic:
            return detail::quadratic_case(to_string(tag), n, m, 0.0);
        case CaseTag::kStateDependentSigma:
            return sine_sigma_case(0.35, n, m);
        case CaseTag::kTimeVaryingQuadratic: {
            Grid grid(-9.0, 9.0, n);
            TimeGrid time(0.0, 0.6, m);
            auto a = [](double t) { return 0.25 + 0.125 * std::sin(3.0 * t); };
            auto ap = [](double t) { return 0.375 * std::cos(3.0 * t); };
            auto b = [](double t) { return 0.1 * std::cos(2.0 * t); };
            auto bp = [](double t) { return -0.2 * std::sin(2.0 * t); };
            ManufacturedCase c{
                to_string(tag),
                grid,
                time,
                [=](double t, double x) { return 0.5 * a(t) * x * x + b(t) * x; },
                [=](double t, double x) { return 0.5 * ap(t) * x * x + bp(t) * x; },
                [=](double t, double x) { return a(t) * x + b(t); },
                [=](double t, double) { return a(t); },
                [](double x) { return -0.4 * x; },
                [](double) { return 0.8; },
                [](double) { return 0.9; },
                normalize_density(ScalarField::sample(
                    grid, [](double x, double) { return std::exp(-x * x / 0.5); })),
            };
            return c;
        }
    }
    throw ConfigError("manufactured case: unknown tag");
}

}  // namespace casb
