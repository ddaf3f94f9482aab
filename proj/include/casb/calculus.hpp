#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "casb/field.hpp"
#include "casb/grid.hpp"

namespace casb {

// How boundary nodes participate in residual norms. Derivative stencils
// themselves always close the boundary with second-order one-sided rows.
enum class BoundaryNorms { kIncludeBoundary, kDropBand };

struct DiffOpts {
    BoundaryNorms norms = BoundaryNorms::kDropBand;
    std::size_t band = 3;  // nodes dropped per side when kDropBand
};

namespace detail {

// Second-order first derivative along one axis: central interior, one-sided
// rows at both faces.
inline ScalarField d1_axis(const ScalarField& f, int axis) {
    const Grid& g = f.grid();
    double h = g.spacing(axis);
    std::size_t n = g.extent(axis);
    if (n < 3) throw std::invalid_argument("d1: need at least 3 nodes per axis");
    ScalarField out(g);
    std::size_t stride = axis == 0 ? 1 : g.extent(0);
    std::size_t lines = g.size() / n;
    for (std::size_t line = 0; line < lines; ++line) {
        std::size_t base = axis == 0 ? line * g.extent(0) : line;
        auto at = [&](std::size_t i) { return f[base + i * stride]; };
        out[base] = (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
        for (std::size_t i = 1; i + 1 < n; ++i)
            out[base + i * stride] = (at(i + 1) - at(i - 1)) / (2.0 * h);
        out[base + (n - 1) * stride] =
            (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h);
    }
    return out;
}

// Second-order second derivative along one axis.
inline ScalarField d2_axis(const ScalarField& f, int axis) {
    const Grid& g = f.grid();
    double h = g.spacing(axis);
    double h2 = h * h;
    std::size_t n = g.extent(axis);
    if (n < 4) throw std::invalid_argument("d2: need at least 4 nodes per axis");
    ScalarField out(g);
    std::size_t stride = axis == 0 ? 1 : g.extent(0);
    std::size_t lines = g.size() / n;
    for (std::size_t line = 0; line < lines; ++line) {
        std::size_t base = axis == 0 ? line * g.extent(0) : line;
        auto at = [&](std::size_t i) { return f[base + i * stride]; };
        out[base] = (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / h2;
        for (std::size_t i = 1; i + 1 < n; ++i)
            out[base + i * stride] = (at(i + 1) - 2.0 * at(i) + at(i - 1)) / h2;
        out[base + (n - 1) * stride] =
            (2.0 * at(n - 1) - 5.0 * at(n - 2) + 4.0 * at(n - 3) - at(n - 4)) / h2;
    }
    return out;
}

}  // namespace detail

inline VectorField gradient(const ScalarField& f) {
    VectorField out(f.grid());
    for (int a = 0; a < f.grid().dim(); ++a) out.comp(a) = detail::d1_axis(f, a);
    return out;
}

// Nested central differences, explicitly symmetrized for the mixed entry.
inline SymMatrixField hessian(const ScalarField& f) {
    const Grid& g = f.grid();
    SymMatrixField out(g);
    out.comp00() = detail::d2_axis(f, 0);
    if (g.dim() == 2) {
        out.comp11() = detail::d2_axis(f, 1);
        ScalarField d01 = detail::d1_axis(detail::d1_axis(f, 1), 0);
        ScalarField d10 = detail::d1_axis(detail::d1_axis(f, 0), 1);
        for (std::size_t k = 0; k < g.size(); ++k)
            out.comp01()[k] = 0.5 * (d01[k] + d10[k]);
    }
    return out;
}

inline ScalarField laplacian(const ScalarField& f) {
    ScalarField out = detail::d2_axis(f, 0);
    if (f.grid().dim() == 2) {
        ScalarField d2y = detail::d2_axis(f, 1);
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += d2y[k];
    }
    return out;
}

// (div M)_i = sum_j d/dx_j M_ij for a symmetric matrix field.
inline VectorField matrix_divergence(const SymMatrixField& m) {
    const Grid& g = m.grid();
    VectorField out(g);
    if (g.dim() == 1) {
        out.comp(0) = detail::d1_axis(m.comp00(), 0);
        return out;
    }
    ScalarField d00 = detail::d1_axis(m.comp00(), 0);
    ScalarField d01_1 = detail::d1_axis(m.comp01(), 1);
    ScalarField d01_0 = detail::d1_axis(m.comp01(), 0);
    ScalarField d11 = detail::d1_axis(m.comp11(), 1);
    for (std::size_t k = 0; k < g.size(); ++k) {
        out.comp(0)[k] = d00[k] + d01_1[k];
        out.comp(1)[k] = d01_0[k] + d11[k];
    }
    return out;
}

inline ScalarField divergence(const VectorField& v) {
    ScalarField out = detail::d1_axis(v.comp(0), 0);
    if (v.grid().dim() == 2) {
        ScalarField d1 = detail::d1_axis(v.comp(1), 1);
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += d1[k];
    }
    return out;
}

// Weighted Laplacian: sum_ij d2/dx_i dx_j (S_ij * rho), differentiating the
// per-node products (no product-rule expansion).
inline ScalarField weighted_laplacian(const ScalarField& rho, const SymMatrixField& sig) {
    const Grid& g = rho.grid();
    if (g != sig.grid()) throw std::invalid_argument("weighted_laplacian: grids differ");
    ScalarField p00 = zip_fields(rho, sig.comp00(), [](double r, double s) { return s * r; });
    ScalarField out = detail::d2_axis(p00, 0);
    if (g.dim() == 2) {
        ScalarField p11 = zip_fields(rho, sig.comp11(), [](double r, double s) { return s * r; });
        ScalarField d11 = detail::d2_axis(p11, 1);
        ScalarField p01 = zip_fields(rho, sig.comp01(), [](double r, double s) { return s * r; });
        ScalarField m01 = detail::d1_axis(detail::d1_axis(p01, 1), 0);
        ScalarField m10 = detail::d1_axis(detail::d1_axis(p01, 0), 1);
        for (std::size_t k = 0; k < g.size(); ++k)
            out[k] += d11[k] + (m01[k] + m10[k]);
    }
    return out;
}

// sum_ij d2/dx_i dx_j S_ij; identical code path to weighted_laplacian with
// a unit density.
inline ScalarField double_divergence(const SymMatrixField& sig) {
    return weighted_laplacian(ScalarField(sig.grid(), 1.0), sig);
}

namespace detail {

template <class FieldT>
struct SliceAxpy;

template <>
struct SliceAxpy<ScalarField> {
    static void accum(ScalarField& out, double c, const ScalarField& f) {
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += c * f[k];
    }
};

template <>
struct SliceAxpy<ComplexField> {
    static void accum(ComplexField& out, double c, const ComplexField& f) {
        for (std::size_t k = 0; k < out.re().size(); ++k) {
            out.re()[k] += c * f.re()[k];
            out.im()[k] += c * f.im()[k];
        }
    }
};

}  // namespace detail

// Time derivative of a series: central interior, second-order one-sided at
// the first and last slices.
template <class FieldT>
inline TimeSeries<FieldT> time_derivative(const TimeSeries<FieldT>& s) {
    const TimeGrid& tg = s.time_grid();
    double dt = tg.dt();
    std::size_t m = tg.steps();
    TimeSeries<FieldT> out(tg, s.grid());
    using A = detail::SliceAxpy<FieldT>;
    A::accum(out.slice(0), -1.5 / dt, s.slice(0));
    A::accum(out.slice(0), 2.0 / dt, s.slice(1));
    A::accum(out.slice(0), -0.5 / dt, s.slice(2));
    for (std::size_t j = 1; j < m; ++j) {
        A::accum(out.slice(j), 0.5 / dt, s.slice(j + 1));
        A::accum(out.slice(j), -0.5 / dt, s.slice(j - 1));
    }
    A::accum(out.slice(m), 1.5 / dt, s.slice(m));
    A::accum(out.slice(m), -2.0 / dt, s.slice(m - 1));
    A::accum(out.slice(m), 0.5 / dt, s.slice(m - 2));
    return out;
}

// ---- small per-node algebra used by the potential assembly ----

inline double frobenius(const SymMat2& a, const SymMat2& b, int dim) {
    if (dim == 1) return a.s00 * b.s00;
    return a.s00 * b.s00 + 2.0 * a.s01 * b.s01 + a.s11 * b.s11;
}

inline double quad_form(const SymMat2& m, const Vec2& v, int dim) {
    if (dim == 1) return m.s00 * v.x0 * v.x0;
    return m.s00 * v.x0 * v.x0 + 2.0 * m.s01 * v.x0 * v.x1 + m.s11 * v.x1 * v.x1;
}

inline double bilinear(const Vec2& u, const SymMat2& m, const Vec2& v, int dim) {
    if (dim == 1) return u.x0 * m.s00 * v.x0;
    return u.x0 * (m.s00 * v.x0 + m.s01 * v.x1) + u.x1 * (m.s01 * v.x0 + m.s11 * v.x1);
}

inline double dot(const Vec2& a, const Vec2& b, int dim) {
    return dim == 1 ? a.x0 * b.x0 : a.x0 * b.x0 + a.x1 * b.x1;
}

inline Vec2 sym_apply(const SymMat2& m, const Vec2& v, int dim) {
    if (dim == 1) return Vec2{m.s00 * v.x0, 0.0};
    return Vec2{m.s00 * v.x0 + m.s01 * v.x1, m.s01 * v.x0 + m.s11 * v.x1};
}

}  // namespace casb
