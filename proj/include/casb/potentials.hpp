#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "casb/calculus.hpp"
#include "casb/common.hpp"
#include "casb/field.hpp"
#include "casb/grid.hpp"

namespace casb {

// Which complex-potential assembly produced a PotentialField.
enum class PotentialVariant { kCaSB, kCaSBLambda, kCaSBOne, kSB, kBohmReal };

inline std::string to_string(PotentialVariant v) {
    switch (v) {
        case PotentialVariant::kCaSB: return "caSB";
        case PotentialVariant::kCaSBLambda: return "caSB_lambda";
        case PotentialVariant::kCaSBOne: return "caSB_one";
        case PotentialVariant::kSB: return "SB";
        case PotentialVariant::kBohmReal: return "bohm_real";
    }
    return "unknown";
}

// Complex potential evaluated on every time slice of a bridge solution.
struct PotentialField {
    PotentialVariant variant = PotentialVariant::kSB;
    TimeSeries<ComplexField> values;
};

// Problem coefficient that is either steady (a single field reused on every
// time slice) or time varying (one field per slice).
template <class FieldT>
class CoefficientSeries {
public:
    CoefficientSeries(FieldT steady) { slices_.push_back(std::move(steady)); }

    explicit CoefficientSeries(std::vector<FieldT> per_slice) : slices_(std::move(per_slice)) {
        if (slices_.empty())
            throw ConfigError("coefficient series: needs at least one slice");
        for (const FieldT& s : slices_)
            if (s.grid() != slices_.front().grid())
                throw ConfigError("coefficient series: slices live on different grids");
    }

    explicit CoefficientSeries(const TimeSeries<FieldT>& s) {
        for (std::size_t j = 0; j < s.time_grid().slices(); ++j)
            slices_.push_back(s.slice(j));
    }

    bool steady() const { return slices_.size() == 1; }
    std::size_t slices() const { return slices_.size(); }
    const Grid& grid() const { return slices_.front().grid(); }
    const FieldT& at(std::size_t j) const { return steady() ? slices_.front() : slices_.at(j); }

private:
    std::vector<FieldT> slices_;
};

// ---- shared per-node formula kernels ----
// These carry the scalar arithmetic of the potential formulas so that the
// residual checks can evaluate the identical expressions, making identity
// comparisons exact up to rounding.

namespace formulas {

// Real/imaginary parts of the zero-drift unit-noise potential.
inline double vsb_re(double lap_r, double grad_r_sq, double lap_s) {
    return 0.5 * lap_r + 0.5 * grad_r_sq + 0.5 * lap_s;
}

inline double vsb_im(double lap_r, double grad_r_sq) {
    return 0.5 * lap_r + grad_r_sq;
}

// Right-hand side of the log-density identity
//   (1/(4 rho)) (weighted laplacian of rho)
//     = 1/2 (weighted laplacian of R) + grad(R)' Sigma grad(R)
//       + (1/4 - R/2) double_divergence(Sigma),   R = log(rho)/2.
inline double half_log_identity_rhs(double wlap_r, double quad_r, double r, double ddiv) {
    return 0.5 * wlap_r + quad_r + (0.25 - 0.5 * r) * ddiv;
}

inline double half_log_identity_lhs(double wlap_rho, double rho) {
    return wlap_rho / (4.0 * rho);
}

}  // namespace formulas

namespace detail {

inline void require_same_grid(const Grid& a, const Grid& b, const char* who) {
    if (a != b) throw ConfigError(std::string(who) + ": field grids differ");
}

inline void require_lambda(double lambda, const char* who) {
    if (!std::isfinite(lambda) || lambda <= 0.0)
        throw ConfigError(std::string(who) + ": lambda must be a positive finite number");
}

inline void require_spd(const SymMatrixField& sig, const char* who) {
    if (!(sig.min_eigenvalue() > 0.0))
        throw ConfigError(std::string(who) +
                          ": noise covariance must be positive definite at every node");
}

inline SymMatrixField scaled(const SymMatrixField& m, double c) {
    SymMatrixField out = m;
    for (std::size_t k = 0; k < m.grid().size(); ++k) {
        SymMat2 s = m.at(k);
        out.set(k, SymMat2{c * s.s00, c * s.s01, c * s.s11});
    }
    return out;
}

}  // namespace detail

// ---- single-slice potential assemblies ----
// Each evaluator sums its terms in a fixed documented order; the proportional
// and unit-ratio variants are separate assemblies (not substitutions into the
// general one), so that their agreement on matched inputs is a genuine check.

// General control-affine bridge potential for diffusion coefficient sig,
// drift f, input matrix g, state cost q, and scale lambda > 0.
inline ComplexField v_casb_slice(const ScalarField& R, const ScalarField& S,
                                 const VectorField& f, const GenMatrixField& g,
                                 const SymMatrixField& sig, const ScalarField& q,
                                 double lambda) {
    const Grid& grid = R.grid();
    detail::require_same_grid(grid, S.grid(), "v_casb");
    detail::require_same_grid(grid, f.grid(), "v_casb");
    detail::require_same_grid(grid, g.grid(), "v_casb");
    detail::require_same_grid(grid, sig.grid(), "v_casb");
    detail::require_same_grid(grid, q.grid(), "v_casb");
    detail::require_lambda(lambda, "v_casb");
    detail::require_spd(sig, "v_casb");

    const int dim = grid.dim();
    const double l2 = lambda * lambda;

    VectorField grad_r = gradient(R);
    VectorField grad_s = gradient(S);
    SymMatrixField hess_r = hessian(R);
    SymMatrixField hess_s = hessian(S);
    ScalarField ddiv = double_divergence(sig);
    VectorField div_sig = matrix_divergence(sig);
    ScalarField wlap_r = weighted_laplacian(R, sig);
    SymMatrixField gg = g.gram();
    VectorField div_gg = matrix_divergence(gg);
    ScalarField div_f = divergence(f);

    ComplexField out(grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const SymMat2 sg = sig.at(k);
        const SymMat2 hr = hess_r.at(k);
        const SymMat2 hs = hess_s.at(k);
        const SymMat2 ggk = gg.at(k);
        const Vec2 gr = grad_r.at(k);
        const Vec2 gs = grad_s.at(k);
        const Vec2 fk = f.at(k);
        const Vec2 dsg = div_sig.at(k);
        const Vec2 gg_gs = sym_apply(ggk, gs, dim);
        const Vec2 drift{fk.x0 + gg_gs.x0, fk.x1 + gg_gs.x1};

        double re = 0.5 * l2 * ddiv[k];
        re += 0.5 * l2 * frobenius(sg, hr, dim);
        re += dot(gs, fk, dim);
        re += 0.5 * l2 * quad_form(sg, gr, dim);
        re -= 0.5 * quad_form(sg, gs, dim);
        re += l2 * dot(dsg, gr, dim);
        re += 0.5 * dot(gs, gg_gs, dim);
        re += 0.5 * frobenius(sg, hs, dim);
        re -= q[k];

        // Divergence of the controlled drift; the matrix part is expanded via
        // the product rule so the proportional-noise case cancels exactly.
        const double div_drift =
            div_f[k] + dot(div_gg.at(k), gs, dim) + frobenius(ggk, hs, dim);

        double im = 0.5 * frobenius(sg, hs, dim);
        im += bilinear(gr, sg, gs, dim);
        im += dot(dsg, gs, dim);
        im -= dot(gr, drift, dim);
        im -= 0.5 * div_drift;
        im += 0.5 * wlap_r[k];
        im += quad_form(sg, gr, dim);
        im += (0.25 - 0.5 * R[k]) * ddiv[k];
        im *= lambda;

        out.re()[k] = re;
        out.im()[k] = im;
    }
    return out;
}

// Potential for noise proportional to the input channel: sig = lambda g g'.
inline ComplexField v_casb_lambda_slice(const ScalarField& R, const ScalarField& S,
                                        const VectorField& f, const GenMatrixField& g,
                                        const ScalarField& q, double lambda) {
    const Grid& grid = R.grid();
    detail::require_same_grid(grid, S.grid(), "v_casb_lambda");
    detail::require_same_grid(grid, f.grid(), "v_casb_lambda");
    detail::require_same_grid(grid, g.grid(), "v_casb_lambda");
    detail::require_same_grid(grid, q.grid(), "v_casb_lambda");
    detail::require_lambda(lambda, "v_casb_lambda");

    const SymMatrixField sig = detail::scaled(g.gram(), lambda);
    detail::require_spd(sig, "v_casb_lambda");

    const int dim = grid.dim();
    const double l2 = lambda * lambda;

    VectorField grad_r = gradient(R);
    VectorField grad_s = gradient(S);
    SymMatrixField hess_r = hessian(R);
    SymMatrixField hess_s = hessian(S);
    ScalarField ddiv = double_divergence(sig);
    VectorField div_sig = matrix_divergence(sig);
    ScalarField wlap_r = weighted_laplacian(R, sig);
    ScalarField div_f = divergence(f);

    ComplexField out(grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const SymMat2 sg = sig.at(k);
        const SymMat2 hr = hess_r.at(k);
        const SymMat2 hs = hess_s.at(k);
        const Vec2 gr = grad_r.at(k);
        const Vec2 gs = grad_s.at(k);
        const Vec2 fk = f.at(k);
        const Vec2 dsg = div_sig.at(k);

        double re = 0.5 * l2 * ddiv[k];
        re += 0.5 * l2 * frobenius(sg, hr, dim);
        re += 0.5 * l2 * quad_form(sg, gr, dim);
        re += l2 * dot(dsg, gr, dim);
        re += dot(gs, fk, dim);
        re += (0.5 / lambda - 0.5) * quad_form(sg, gs, dim);
        re += 0.5 * frobenius(sg, hs, dim);
        re -= q[k];

        double im = 0.5 * (lambda - 1.0) * frobenius(sg, hs, dim);
        im += (lambda - 1.0) * bilinear(gr, sg, gs, dim);
        im += (lambda - 0.5) * dot(dsg, gs, dim);
        im -= lambda * dot(gr, fk, dim);
        im -= 0.5 * lambda * div_f[k];
        im += 0.5 * lambda * wlap_r[k];
        im += lambda * quad_form(sg, gr, dim);
        im += (0.25 * lambda - 0.5 * lambda * R[k]) * ddiv[k];

        out.re()[k] = re;
        out.im()[k] = im;
    }
    return out;
}

// Proportional-noise potential at unit ratio: sig = g g'.
inline ComplexField v_casb_one_slice(const ScalarField& R, const ScalarField& S,
                                     const VectorField& f, const GenMatrixField& g,
                                     const ScalarField& q) {
    const Grid& grid = R.grid();
    detail::require_same_grid(grid, S.grid(), "v_casb_one");
    detail::require_same_grid(grid, f.grid(), "v_casb_one");
    detail::require_same_grid(grid, g.grid(), "v_casb_one");
    detail::require_same_grid(grid, q.grid(), "v_casb_one");

    const SymMatrixField sig = g.gram();
    detail::require_spd(sig, "v_casb_one");

    const int dim = grid.dim();

    VectorField grad_r = gradient(R);
    VectorField grad_s = gradient(S);
    SymMatrixField hess_r = hessian(R);
    SymMatrixField hess_s = hessian(S);
    ScalarField ddiv = double_divergence(sig);
    VectorField div_sig = matrix_divergence(sig);
    ScalarField wlap_r = weighted_laplacian(R, sig);
    ScalarField div_f = divergence(f);

    ComplexField out(grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const SymMat2 sg = sig.at(k);
        const SymMat2 hr = hess_r.at(k);
        const SymMat2 hs = hess_s.at(k);
        const Vec2 gr = grad_r.at(k);
        const Vec2 gs = grad_s.at(k);
        const Vec2 fk = f.at(k);
        const Vec2 dsg = div_sig.at(k);

        double re = 0.5 * ddiv[k];
        re += 0.5 * frobenius(sg, hr, dim);
        re += 0.5 * quad_form(sg, gr, dim);
        re += dot(dsg, gr, dim);
        re += dot(gs, fk, dim);
        re += 0.5 * frobenius(sg, hs, dim);
        re -= q[k];

        double im = 0.5 * dot(dsg, gs, dim);
        im -= dot(gr, fk, dim);
        im -= 0.5 * div_f[k];
        im += 0.5 * wlap_r[k];
        im += quad_form(sg, gr, dim);
        im += (0.25 - 0.5 * R[k]) * ddiv[k];

        out.re()[k] = re;
        out.im()[k] = im;
    }
    return out;
}

// Plain-bridge potential (zero drift, identity input and noise, zero cost).
inline ComplexField v_sb_slice(const ScalarField& R, const ScalarField& S) {
    const Grid& grid = R.grid();
    detail::require_same_grid(grid, S.grid(), "v_sb");

    const int dim = grid.dim();
    VectorField grad_r = gradient(R);
    ScalarField lap_r = laplacian(R);
    ScalarField lap_s = laplacian(S);

    ComplexField out(grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const Vec2 gr = grad_r.at(k);
        const double grad_r_sq = dot(gr, gr, dim);
        out.re()[k] = formulas::vsb_re(lap_r[k], grad_r_sq, lap_s[k]);
        out.im()[k] = formulas::vsb_im(lap_r[k], grad_r_sq);
    }
    return out;
}

// Classical real-valued quantum correction term: laplacian(R) / 4.
inline ScalarField bohm_potential_slice(const ScalarField& R) {
    return map_field(laplacian(R), [](double v) { return 0.25 * v; });
}

// ---- time-series drivers ----

namespace detail {

inline void require_series_shape(const TimeSeries<ScalarField>& R,
                                 const TimeSeries<ScalarField>& S, const char* who) {
    if (R.time_grid() != S.time_grid())
        throw ConfigError(std::string(who) + ": log-density and phase clocks differ");
    if (R.slice(0).grid() != S.slice(0).grid())
        throw ConfigError(std::string(who) + ": log-density and phase grids differ");
}

template <class FieldT>
void require_coeff_shape(const CoefficientSeries<FieldT>& c, const Grid& grid,
                         std::size_t slices, const char* who, const char* name) {
    if (c.grid() != grid)
        throw ConfigError(std::string(who) + ": " + name + " lives on a different grid");
    if (!c.steady() && c.slices() != slices)
        throw ConfigError(std::string(who) + ": " + name +
                          " must supply one slice or one per time node");
}

}  // namespace detail

inline PotentialField v_casb(const TimeSeries<ScalarField>& R, const TimeSeries<ScalarField>& S,
                             const CoefficientSeries<VectorField>& f,
                             const CoefficientSeries<GenMatrixField>& g,
                             const CoefficientSeries<SymMatrixField>& sig,
                             const CoefficientSeries<ScalarField>& q, double lambda) {
    detail::require_series_shape(R, S, "v_casb");
    const Grid& grid = R.slice(0).grid();
    const std::size_t m = R.time_grid().slices();
    detail::require_coeff_shape(f, grid, m, "v_casb", "drift");
    detail::require_coeff_shape(g, grid, m, "v_casb", "input matrix");
    detail::require_coeff_shape(sig, grid, m, "v_casb", "noise covariance");
    detail::require_coeff_shape(q, grid, m, "v_casb", "state cost");

    std::vector<ComplexField> slices;
    slices.reserve(m);
    for (std::size_t j = 0; j < m; ++j)
        slices.push_back(v_casb_slice(R.slice(j), S.slice(j), f.at(j), g.at(j), sig.at(j),
                                      q.at(j), lambda));
    return PotentialField{PotentialVariant::kCaSB,
                          TimeSeries<ComplexField>(R.time_grid(), std::move(slices))};
}

inline PotentialField v_casb_lambda(const TimeSeries<ScalarField>& R,
                                    const TimeSeries<ScalarField>& S,
                                    const CoefficientSeries<VectorField>& f,
                                    const CoefficientSeries<GenMatrixField>& g,
                                    const CoefficientSeries<ScalarField>& q, double lambda) {
    detail::require_series_shape(R, S, "v_casb_lambda");
    const Grid& grid = R.slice(0).grid();
    const std::size_t m = R.time_grid().slices();
    detail::require_coeff_shape(f, grid, m, "v_casb_lambda", "drift");
    detail::require_coeff_shape(g, grid, m, "v_casb_lambda", "input matrix");
    detail::require_coeff_shape(q, grid, m, "v_casb_lambda", "state cost");

    std::vector<ComplexField> slices;
    slices.reserve(m);
    for (std::size_t j = 0; j < m; ++j)
        slices.push_back(
            v_casb_lambda_slice(R.slice(j), S.slice(j), f.at(j), g.at(j), q.at(j), lambda));
    return PotentialField{PotentialVariant::kCaSBLambda,
                          TimeSeries<ComplexField>(R.time_grid(), std::move(slices))};
}

inline PotentialField v_casb_one(const TimeSeries<ScalarField>& R,
                                 const TimeSeries<ScalarField>& S,
                                 const CoefficientSeries<VectorField>& f,
                                 const CoefficientSeries<GenMatrixField>& g,
                                 const CoefficientSeries<ScalarField>& q) {
    detail::require_series_shape(R, S, "v_casb_one");
    const Grid& grid = R.slice(0).grid();
    const std::size_t m = R.time_grid().slices();
    detail::require_coeff_shape(f, grid, m, "v_casb_one", "drift");
    detail::require_coeff_shape(g, grid, m, "v_casb_one", "input matrix");
    detail::require_coeff_shape(q, grid, m, "v_casb_one", "state cost");

    std::vector<ComplexField> slices;
    slices.reserve(m);
    for (std::size_t j = 0; j < m; ++j)
        slices.push_back(v_casb_one_slice(R.slice(j), S.slice(j), f.at(j), g.at(j), q.at(j)));
    return PotentialField{PotentialVariant::kCaSBOne,
                          TimeSeries<ComplexField>(R.time_grid(), std::move(slices))};
}

inline PotentialField v_sb(const TimeSeries<ScalarField>& R, const TimeSeries<ScalarField>& S) {
    detail::require_series_shape(R, S, "v_sb");
    const std::size_t m = R.time_grid().slices();
    std::vector<ComplexField> slices;
    slices.reserve(m);
    for (std::size_t j = 0; j < m; ++j) slices.push_back(v_sb_slice(R.slice(j), S.slice(j)));
    return PotentialField{PotentialVariant::kSB,
                          TimeSeries<ComplexField>(R.time_grid(), std::move(slices))};
}

inline PotentialField bohm_potential(const TimeSeries<ScalarField>& R) {
    const std::size_t m = R.time_grid().slices();
    const Grid& grid = R.slice(0).grid();
    std::vector<ComplexField> slices;
    slices.reserve(m);
    for (std::size_t j = 0; j < m; ++j)
        slices.push_back(ComplexField(bohm_potential_slice(R.slice(j)), ScalarField(grid)));
    return PotentialField{PotentialVariant::kBohmReal,
                          TimeSeries<ComplexField>(R.time_grid(), std::move(slices))};
}

}  // namespace casb
