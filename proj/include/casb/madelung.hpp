#pragma once

// Log-polar (amplitude/phase) transform between the bridge variables (R, S)
// and a complex wave field psi = exp(R + i S / lambda), plus the inverse
// readout of the steering control from psi alone.  Phase fields are
// reconstructed by axis-sweep unwrapping, valid while the phase increment
// between adjacent nodes stays below pi.

#include <cmath>
#include <cstddef>

#include "casb/calculus.hpp"
#include "casb/common.hpp"
#include "casb/field.hpp"
#include "casb/grid.hpp"

namespace casb {

inline ComplexField to_wave(const ScalarField& R, const ScalarField& S, double lambda) {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw ConfigError("to_wave: lambda must be positive and finite");
    if (R.grid() != S.grid()) throw ConfigError("to_wave: R and S grids differ");
    ScalarField re = zip_fields(
        R, S, [lambda](double r, double s) { return std::exp(r) * std::cos(s / lambda); });
    ScalarField im = zip_fields(
        R, S, [lambda](double r, double s) { return std::exp(r) * std::sin(s / lambda); });
    return ComplexField(std::move(re), std::move(im));
}

inline TimeSeries<ComplexField> to_wave(const TimeSeries<ScalarField>& R,
                                        const TimeSeries<ScalarField>& S, double lambda) {
    std::vector<ComplexField> slices;
    slices.reserve(R.time_grid().slices());
    for (std::size_t j = 0; j < R.time_grid().slices(); ++j)
        slices.push_back(to_wave(R.slice(j), S.slice(j), lambda));
    return TimeSeries<ComplexField>(R.time_grid(), std::move(slices));
}

inline ScalarField born_density(const ComplexField& psi) {
    return zip_fields(psi.re(), psi.im(), [](double a, double b) { return a * a + b * b; });
}

namespace detail {

inline double wrap_to_pi(double d) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    d = std::fmod(d, two_pi);
    if (d > 3.141592653589793238462643383279) d -= two_pi;
    if (d <= -3.141592653589793238462643383279) d += two_pi;
    return d;
}

// Unwrap a raw (-pi, pi] phase field: integrate wrapped increments along
// axis 0 on the first row, then along axis 1 within each column.
inline ScalarField unwrap_phase(const ScalarField& raw) {
    const Grid& g = raw.grid();
    ScalarField out = raw;
    std::size_t n0 = g.extent(0);
    for (std::size_t i = 1; i < n0; ++i)
        out[g.index(i)] = out[g.index(i - 1)] + wrap_to_pi(raw[g.index(i)] - raw[g.index(i - 1)]);
    if (g.dim() == 2) {
        std::size_t n1 = g.extent(1);
        for (std::size_t i0 = 0; i0 < n0; ++i0)
            for (std::size_t i1 = 1; i1 < n1; ++i1)
                out[g.index(i0, i1)] = out[g.index(i0, i1 - 1)] +
                                       wrap_to_pi(raw[g.index(i0, i1)] - raw[g.index(i0, i1 - 1)]);
    }
    return out;
}

}  // namespace detail

// Steering control read off a wave field:
//   u = -(i lambda / 2) g^T grad log(psi / conj(psi)).
// Both branch logs are formed explicitly (amplitude + unwrapped phase) and
// differenced, so the imaginary output reports how far the readout is from
// real rather than being dropped.
struct ControlField {
    VectorField re;
    VectorField im;
};

inline ControlField recover_control(const ComplexField& psi, const GenMatrixField& gmat,
                                    double lambda) {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw ConfigError("recover_control: lambda must be positive and finite");
    const Grid& g = psi.re().grid();
    if (gmat.grid() != g) throw ConfigError("recover_control: psi and g grids differ");

    ScalarField amp_fwd = zip_fields(psi.re(), psi.im(), [](double a, double b) {
        return 0.5 * std::log(std::max(a * a + b * b, kAbsDensityFloor * kAbsDensityFloor));
    });
    ScalarField amp_bwd = zip_fields(psi.re(), psi.im(), [](double a, double b) {
        double nb = -b;
        return 0.5 * std::log(std::max(a * a + nb * nb, kAbsDensityFloor * kAbsDensityFloor));
    });
    ScalarField th_fwd = detail::unwrap_phase(
        zip_fields(psi.re(), psi.im(), [](double a, double b) { return std::atan2(b, a); }));
    ScalarField th_bwd = detail::unwrap_phase(
        zip_fields(psi.re(), psi.im(), [](double a, double b) { return std::atan2(-b, a); }));

    VectorField d_re_fwd = gradient(amp_fwd), d_re_bwd = gradient(amp_bwd);
    VectorField d_im_fwd = gradient(th_fwd), d_im_bwd = gradient(th_bwd);

    ControlField out{VectorField(g), VectorField(g)};
    for (std::size_t k = 0; k < g.size(); ++k) {
        Vec2 dre{d_re_fwd.comp(0)[k] - d_re_bwd.comp(0)[k],
                 g.dim() == 2 ? d_re_fwd.comp(1)[k] - d_re_bwd.comp(1)[k] : 0.0};
        Vec2 dim{d_im_fwd.comp(0)[k] - d_im_bwd.comp(0)[k],
                 g.dim() == 2 ? d_im_fwd.comp(1)[k] - d_im_bwd.comp(1)[k] : 0.0};
        // -(i lambda / 2) (dre + i dim) = (lambda/2) dim - i (lambda/2) dre
        Mat2 gm = gmat.at(k);
        Vec2 ure = gm.tapply(Vec2{0.5 * lambda * dim.x0, 0.5 * lambda * dim.x1}, g.dim());
        Vec2 uim = gm.tapply(Vec2{-0.5 * lambda * dre.x0, -0.5 * lambda * dre.x1}, g.dim());
        out.re.set(k, ure);
        out.im.set(k, uim);
    }
    return out;
}

}  // namespace casb
