#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "casb/common.hpp"
#include "casb/grid.hpp"

namespace casb {

// Small fixed-capacity vector/matrix used for per-node values (dim <= 2).
struct Vec2 {
    double x0 = 0.0, x1 = 0.0;
    double& operator[](int a) { return a == 0 ? x0 : x1; }
    double operator[](int a) const { return a == 0 ? x0 : x1; }
};

struct Mat2 {
    // Row-major entries; a 1x1 matrix uses m00 only.
    double m00 = 0.0, m01 = 0.0, m10 = 0.0, m11 = 0.0;

    static Mat2 scalar(double v) { return Mat2{v, 0.0, 0.0, 0.0}; }
    static Mat2 identity(int dim, double scale = 1.0) {
        return dim == 1 ? Mat2{scale, 0, 0, 0} : Mat2{scale, 0, 0, scale};
    }
    Vec2 apply(const Vec2& v, int dim) const {
        if (dim == 1) return Vec2{m00 * v.x0, 0.0};
        return Vec2{m00 * v.x0 + m01 * v.x1, m10 * v.x0 + m11 * v.x1};
    }
    Vec2 tapply(const Vec2& v, int dim) const {
        if (dim == 1) return Vec2{m00 * v.x0, 0.0};
        return Vec2{m00 * v.x0 + m10 * v.x1, m01 * v.x0 + m11 * v.x1};
    }
};

// Symmetric per-node matrix value, packed (s00, s01, s11).
struct SymMat2 {
    double s00 = 0.0, s01 = 0.0, s11 = 0.0;
};

class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(const Grid& g, double fill = 0.0)
        : grid_(g), v_(g.size(), fill) {}
    ScalarField(const Grid& g, std::vector<double> values)
        : grid_(g), v_(std::move(values)) {
        if (v_.size() != grid_.size())
            throw ConfigError("scalar field: value count does not match grid");
    }

    template <class Fn>
    static ScalarField sample(const Grid& g, Fn&& fn) {
        ScalarField f(g);
        for (std::size_t k = 0; k < g.size(); ++k)
            f.v_[k] = fn(g.node_coord(k, 0), g.dim() == 2 ? g.node_coord(k, 1) : 0.0);
        return f;
    }

    const Grid& grid() const { return grid_; }
    std::size_t size() const { return v_.size(); }
    double operator[](std::size_t k) const { return v_[k]; }
    double& operator[](std::size_t k) { return v_[k]; }
    const std::vector<double>& values() const { return v_; }
    std::vector<double>& values() { return v_; }

private:
    Grid grid_;
    std::vector<double> v_;
};

class VectorField {
public:
    VectorField() = default;
    explicit VectorField(const Grid& g) : grid_(g) {
        for (int a = 0; a < g.dim(); ++a) comp_[a] = ScalarField(g);
    }

    const Grid& grid() const { return grid_; }
    ScalarField& comp(int a) { return comp_[a]; }
    const ScalarField& comp(int a) const { return comp_[a]; }
    Vec2 at(std::size_t k) const {
        Vec2 v;
        v.x0 = comp_[0][k];
        if (grid_.dim() == 2) v.x1 = comp_[1][k];
        return v;
    }
    void set(std::size_t k, const Vec2& v) {
        comp_[0][k] = v.x0;
        if (grid_.dim() == 2) comp_[1][k] = v.x1;
    }

private:
    Grid grid_;
    std::array<ScalarField, 2> comp_;
};

// Symmetric matrix field; construction from full entries rejects asymmetry.
class SymMatrixField {
public:
    SymMatrixField() = default;
    explicit SymMatrixField(const Grid& g) : grid_(g) {
        c00_ = ScalarField(g);
        if (g.dim() == 2) {
            c01_ = ScalarField(g);
            c11_ = ScalarField(g);
        }
    }

    static SymMatrixField from_entries(const Grid& g, const ScalarField& e00,
                                       const ScalarField& e01, const ScalarField& e10,
                                       const ScalarField& e11) {
        double scale = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k)
            scale = std::max({scale, std::fabs(e00[k]), std::fabs(e01[k]),
                              std::fabs(e10[k]), std::fabs(e11[k])});
        for (std::size_t k = 0; k < g.size(); ++k)
            if (std::fabs(e01[k] - e10[k]) > 1e-12 * std::max(scale, 1.0))
                throw ConfigError("matrix field: input is not symmetric");
        SymMatrixField m(g);
        m.c00_ = e00;
        m.c01_ = e01;
        m.c11_ = e11;
        return m;
    }

    template <class Fn>
    static SymMatrixField sample(const Grid& g, Fn&& fn) {
        SymMatrixField m(g);
        for (std::size_t k = 0; k < g.size(); ++k) {
            SymMat2 s = fn(g.node_coord(k, 0), g.dim() == 2 ? g.node_coord(k, 1) : 0.0);
            m.c00_[k] = s.s00;
            if (g.dim() == 2) {
                m.c01_[k] = s.s01;
                m.c11_[k] = s.s11;
            }
        }
        return m;
    }

    const Grid& grid() const { return grid_; }
    SymMat2 at(std::size_t k) const {
        SymMat2 s;
        s.s00 = c00_[k];
        if (grid_.dim() == 2) {
            s.s01 = c01_[k];
            s.s11 = c11_[k];
        }
        return s;
    }
    void set(std::size_t k, const SymMat2& s) {
        c00_[k] = s.s00;
        if (grid_.dim() == 2) {
            c01_[k] = s.s01;
            c11_[k] = s.s11;
        }
    }
    // Packed component fields: (0,0), (0,1), (1,1).
    ScalarField& comp00() { return c00_; }
    ScalarField& comp01() { return c01_; }
    ScalarField& comp11() { return c11_; }
    const ScalarField& comp00() const { return c00_; }
    const ScalarField& comp01() const { return c01_; }
    const ScalarField& comp11() const { return c11_; }

    // Smallest eigenvalue over all nodes (closed form for 2x2).
    double min_eigenvalue() const {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < grid_.size(); ++k) {
            SymMat2 s = at(k);
            if (grid_.dim() == 1) {
                m = std::min(m, s.s00);
            } else {
                double tr = s.s00 + s.s11;
                double det = s.s00 * s.s11 - s.s01 * s.s01;
                double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
                m = std::min(m, tr / 2.0 - disc);
            }
        }
        return m;
    }

private:
    Grid grid_;
    ScalarField c00_, c01_, c11_;
};

// General (possibly non-symmetric) square matrix field, used for the input
// channel matrix g.
class GenMatrixField {
public:
    GenMatrixField() = default;
    explicit GenMatrixField(const Grid& g) : grid_(g) {
        e_[0] = ScalarField(g);
        if (g.dim() == 2)
            for (int i = 1; i < 4; ++i) e_[i] = ScalarField(g);
    }

    template <class Fn>
    static GenMatrixField sample(const Grid& g, Fn&& fn) {
        GenMatrixField m(g);
        for (std::size_t k = 0; k < g.size(); ++k) {
            Mat2 v = fn(g.node_coord(k, 0), g.dim() == 2 ? g.node_coord(k, 1) : 0.0);
            m.set(k, v);
        }
        return m;
    }

    const Grid& grid() const { return grid_; }
    Mat2 at(std::size_t k) const {
        Mat2 v;
        v.m00 = e_[0][k];
        if (grid_.dim() == 2) {
            v.m01 = e_[1][k];
            v.m10 = e_[2][k];
            v.m11 = e_[3][k];
        }
        return v;
    }
    void set(std::size_t k, const Mat2& v) {
        e_[0][k] = v.m00;
        if (grid_.dim() == 2) {
            e_[1][k] = v.m01;
            e_[2][k] = v.m10;
            e_[3][k] = v.m11;
        }
    }

    // g g^T as a symmetric field.
    SymMatrixField gram() const {
        SymMatrixField s(grid_);
        for (std::size_t k = 0; k < grid_.size(); ++k) {
            Mat2 g = at(k);
            SymMat2 v;
            if (grid_.dim() == 1) {
                v.s00 = g.m00 * g.m00;
            } else {
                v.s00 = g.m00 * g.m00 + g.m01 * g.m01;
                v.s01 = g.m00 * g.m10 + g.m01 * g.m11;
                v.s11 = g.m10 * g.m10 + g.m11 * g.m11;
            }
            s.set(k, v);
        }
        return s;
    }

private:
    Grid grid_;
    std::array<ScalarField, 4> e_;
};

class ComplexField {
public:
    ComplexField() = default;
    explicit ComplexField(const Grid& g) : re_(g), im_(g) {}
    ComplexField(ScalarField re, ScalarField im) : re_(std::move(re)), im_(std::move(im)) {
        if (re_.grid() != im_.grid())
            throw ConfigError("complex field: component grids differ");
    }

    const Grid& grid() const { return re_.grid(); }
    ScalarField& re() { return re_; }
    ScalarField& im() { return im_; }
    const ScalarField& re() const { return re_; }
    const ScalarField& im() const { return im_; }

private:
    ScalarField re_, im_;
};

// M+1 slices over a shared spatial grid.
template <class FieldT>
class TimeSeries {
public:
    TimeSeries() = default;
    TimeSeries(const TimeGrid& tg, std::vector<FieldT> slices)
        : tgrid_(tg), slices_(std::move(slices)) {
        if (slices_.size() != tg.slices())
            throw ConfigError("time series: slice count must be steps+1");
        for (const auto& s : slices_)
            if (s.grid() != slices_.front().grid())
                throw ConfigError("time series: slices must share one grid");
    }
    TimeSeries(const TimeGrid& tg, const Grid& g)
        : tgrid_(tg), slices_(tg.slices(), FieldT(g)) {}

    const TimeGrid& time_grid() const { return tgrid_; }
    const Grid& grid() const { return slices_.front().grid(); }
    std::size_t slices() const { return slices_.size(); }
    FieldT& slice(std::size_t j) { return slices_[j]; }
    const FieldT& slice(std::size_t j) const { return slices_[j]; }

    // Same fields viewed on a different (equally sized) time grid.
    TimeSeries restamped(const TimeGrid& tg) const {
        return TimeSeries(tg, slices_);
    }

private:
    TimeGrid tgrid_;
    std::vector<FieldT> slices_;
};

// ---- pointwise helpers ----

inline ScalarField map_field(const ScalarField& a, const std::function<double(double)>& fn) {
    ScalarField out(a.grid());
    for (std::size_t k = 0; k < a.size(); ++k) out[k] = fn(a[k]);
    return out;
}

inline ScalarField zip_fields(const ScalarField& a, const ScalarField& b,
                              const std::function<double(double, double)>& fn) {
    if (a.grid() != b.grid()) throw std::invalid_argument("zip: grids differ");
    ScalarField out(a.grid());
    for (std::size_t k = 0; k < a.size(); ++k) out[k] = fn(a[k], b[k]);
    return out;
}

// Trapezoid quadrature of a scalar field over the box.
inline double integrate(const ScalarField& f) {
    double s = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) s += f.grid().quad_weight(k) * f[k];
    return s;
}

inline double l1_distance(const ScalarField& a, const ScalarField& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        s += a.grid().quad_weight(k) * std::fabs(a[k] - b[k]);
    return s;
}

// Scales a nonnegative field to unit trapezoid mass.
inline ScalarField normalize_density(const ScalarField& rho) {
    for (std::size_t k = 0; k < rho.size(); ++k)
        if (rho[k] < 0.0)
            throw std::domain_error("normalize_density: negative value encountered");
    double mass = integrate(rho);
    if (!(mass > 0.0))
        throw std::domain_error("normalize_density: degenerate (zero-mass) density");
    ScalarField out = rho;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] /= mass;
    return out;
}

// Multilinear interpolation; exact at nodes, error for out-of-box points.
inline double eval_interp(const ScalarField& f, const Vec2& x) {
    const Grid& g = f.grid();
    std::array<std::size_t, 2> cell{0, 0};
    std::array<double, 2> frac{0.0, 0.0};
    for (int a = 0; a < g.dim(); ++a) {
        double xa = x[a];
        if (xa < g.lower(a) || xa > g.upper(a))
            throw std::domain_error("eval_interp: point outside grid box");
        double t = (xa - g.lower(a)) / g.spacing(a);
        auto i = static_cast<std::size_t>(std::min<double>(std::floor(t),
                                          static_cast<double>(g.extent(a) - 2)));
        cell[a] = i;
        frac[a] = t - static_cast<double>(i);
    }
    if (g.dim() == 1) {
        double v0 = f[g.index(cell[0])], v1 = f[g.index(cell[0] + 1)];
        return (1.0 - frac[0]) * v0 + frac[0] * v1;
    }
    double v00 = f[g.index(cell[0], cell[1])];
    double v10 = f[g.index(cell[0] + 1, cell[1])];
    double v01 = f[g.index(cell[0], cell[1] + 1)];
    double v11 = f[g.index(cell[0] + 1, cell[1] + 1)];
    double a0 = (1.0 - frac[0]) * v00 + frac[0] * v10;
    double a1 = (1.0 - frac[0]) * v01 + frac[0] * v11;
    return (1.0 - frac[1]) * a0 + frac[1] * a1;
}

inline Vec2 eval_interp(const VectorField& f, const Vec2& x) {
    Vec2 v;
    v.x0 = eval_interp(f.comp(0), x);
    if (f.grid().dim() == 2) v.x1 = eval_interp(f.comp(1), x);
    return v;
}

inline double max_abs(const ScalarField& f) {
    double m = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) m = std::max(m, std::fabs(f[k]));
    return m;
}

}  // namespace casb
