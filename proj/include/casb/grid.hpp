#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include "casb/common.hpp"

namespace casb {

// Uniform node-centered lattice over a closed box in one or two dimensions.
// Spacing along axis k is (upper - lower) / (n_k - 1); nodes include both
// box faces.
class Grid {
public:
    Grid() = default;

    Grid(double lower, double upper, std::size_t n)
        : dim_(1), lo_{lower, 0.0}, hi_{upper, 0.0}, n_{n, 1} {
        validate();
    }

    Grid(std::array<double, 2> lower, std::array<double, 2> upper,
         std::array<std::size_t, 2> n)
        : dim_(2), lo_(lower), hi_(upper), n_(n) {
        validate();
    }

    int dim() const { return dim_; }
    std::size_t extent(int axis) const { return n_[axis]; }
    double lower(int axis) const { return lo_[axis]; }
    double upper(int axis) const { return hi_[axis]; }
    double spacing(int axis) const {
        return (hi_[axis] - lo_[axis]) / static_cast<double>(n_[axis] - 1);
    }

    std::size_t size() const { return n_[0] * n_[1]; }

    // Flat index; axis 0 varies fastest.
    std::size_t index(std::size_t i0, std::size_t i1 = 0) const {
        return i0 + n_[0] * i1;
    }
    std::size_t axis_index(std::size_t node, int axis) const {
        return axis == 0 ? node % n_[0] : node / n_[0];
    }

    double coord(std::size_t i, int axis) const {
        if (i + 1 == n_[axis]) return hi_[axis];
        return lo_[axis] + static_cast<double>(i) * spacing(axis);
    }
    double node_coord(std::size_t node, int axis) const {
        return coord(axis_index(node, axis), axis);
    }

    // Trapezoid quadrature weight of a node (product over axes).
    double quad_weight(std::size_t node) const {
        double w = 1.0;
        for (int a = 0; a < dim_; ++a) {
            std::size_t i = axis_index(node, a);
            double wa = spacing(a);
            if (i == 0 || i + 1 == n_[a]) wa *= 0.5;
            w *= wa;
        }
        return w;
    }

    bool operator==(const Grid& o) const {
        return dim_ == o.dim_ && lo_ == o.lo_ && hi_ == o.hi_ && n_ == o.n_;
    }
    bool operator!=(const Grid& o) const { return !(*this == o); }

private:
    void validate() const {
        for (int a = 0; a < dim_; ++a) {
            if (!(hi_[a] > lo_[a]) || !std::isfinite(lo_[a]) || !std::isfinite(hi_[a]))
                throw ConfigError("grid: box bounds must be finite with upper > lower");
            if (n_[a] < 16)
                throw ConfigError("grid: at least 16 nodes per axis required");
        }
    }

    int dim_ = 1;
    std::array<double, 2> lo_{0.0, 0.0};
    std::array<double, 2> hi_{1.0, 0.0};
    std::array<std::size_t, 2> n_{16, 1};
};

// Uniform partition of [t0, t1] into steps intervals (steps + 1 slice times).
class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double t0, double t1, std::size_t steps) : t0_(t0), t1_(t1), m_(steps) {
        if (!(t1 > t0)) throw ConfigError("time grid: t1 must exceed t0");
        if (m_ < 8) throw ConfigError("time grid: at least 8 steps required");
    }

    double t0() const { return t0_; }
    double t1() const { return t1_; }
    std::size_t steps() const { return m_; }
    std::size_t slices() const { return m_ + 1; }
    double dt() const { return (t1_ - t0_) / static_cast<double>(m_); }
    double time(std::size_t j) const {
        if (j == m_) return t1_;
        return t0_ + static_cast<double>(j) * dt();
    }

    bool operator==(const TimeGrid& o) const {
        return t0_ == o.t0_ && t1_ == o.t1_ && m_ == o.m_;
    }

private:
    double t0_ = 0.0;
    double t1_ = 1.0;
    std::size_t m_ = 8;
};

}  // namespace casb
