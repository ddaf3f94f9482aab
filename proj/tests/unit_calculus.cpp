#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "casb/calculus.hpp"
#include "casb/field.hpp"
#include "casb/grid.hpp"
#include "support/oracles.hpp"

using namespace casb;
using testsupport::fit_slope;

namespace {

double interior_max(const ScalarField& f, int band) {
    const Grid& g = f.grid();
    double m = 0.0;
    for (std::size_t n = 0; n < g.size(); ++n) {
        bool in = true;
        for (int a = 0; a < g.dim(); ++a) {
            std::size_t i = g.axis_index(n, a);
            if (i < std::size_t(band) || i + std::size_t(band) >= g.extent(a)) in = false;
        }
        if (in) m = std::max(m, std::fabs(f[n]));
    }
    return m;
}

}  // namespace

TEST_CASE("derivative stencils are exact on quadratic polynomials", "[calculus]") {
    Grid g(-1.0, 2.0, 20);
    ScalarField f =
        ScalarField::sample(g, [](double x, double) { return 2.0 + 3.0 * x + 0.5 * x * x; });
    VectorField grad = gradient(f);
    ScalarField lap = laplacian(f);
    for (std::size_t n = 0; n < g.size(); ++n) {
        double x = g.node_coord(n, 0);
        REQUIRE(grad.comp(0)[n] == Catch::Approx(3.0 + x).margin(1e-12));
        REQUIRE(lap[n] == Catch::Approx(1.0).margin(1e-11));
    }

    Grid g2({-1.0, 0.0}, {1.0, 2.0}, {18, 22});
    ScalarField f2 = ScalarField::sample(g2, [](double x, double y) {
        return 1.0 + 2.0 * x - y + 0.3 * x * x + 0.7 * y * y + 0.4 * x * y;
    });
    VectorField grad2 = gradient(f2);
    SymMatrixField hess2 = hessian(f2);
    for (std::size_t n = 0; n < g2.size(); ++n) {
        double x = g2.node_coord(n, 0), y = g2.node_coord(n, 1);
        REQUIRE(grad2.comp(0)[n] == Catch::Approx(2.0 + 0.6 * x + 0.4 * y).margin(1e-11));
        REQUIRE(grad2.comp(1)[n] == Catch::Approx(-1.0 + 1.4 * y + 0.4 * x).margin(1e-11));
        REQUIRE(hess2.comp00()[n] == Catch::Approx(0.6).margin(1e-10));
        REQUIRE(hess2.comp01()[n] == Catch::Approx(0.4).margin(1e-10));
        REQUIRE(hess2.comp11()[n] == Catch::Approx(1.4).margin(1e-10));
    }
}

TEST_CASE("derivative stencils converge at second order on trig fields", "[calculus]") {
    std::mt19937_64 rng(42);
    auto fn = testsupport::random_smooth(rng, 2, 0.8, 1.5, 4);
    std::vector<double> hs, eg, eh, el;
    for (std::size_t n : {48, 96, 192}) {
        Grid g({-2.0, -2.0}, {2.0, 2.0}, {n, n});
        ScalarField f = ScalarField::sample(g, [&](double x, double y) { return fn.value(x, y); });
        VectorField grad = gradient(f);
        SymMatrixField hess = hessian(f);
        ScalarField lap = laplacian(f);
        double mg = 0, mh = 0, ml = 0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            double x = g.node_coord(k, 0), y = g.node_coord(k, 1);
            Vec2 gr = fn.grad(x, y);
            SymMat2 he = fn.hess(x, y);
            mg = std::max({mg, std::fabs(grad.comp(0)[k] - gr.x0),
                           std::fabs(grad.comp(1)[k] - gr.x1)});
            mh = std::max({mh, std::fabs(hess.comp00()[k] - he.s00),
                           std::fabs(hess.comp01()[k] - he.s01),
                           std::fabs(hess.comp11()[k] - he.s11)});
            ml = std::max(ml, std::fabs(lap[k] - fn.laplace(x, y)));
        }
        hs.push_back(g.spacing(0));
        eg.push_back(mg);
        eh.push_back(mh);
        el.push_back(ml);
    }
    REQUIRE(fit_slope(hs, eg) == Catch::Approx(2.0).margin(0.3));
    REQUIRE(fit_slope(hs, eh) == Catch::Approx(2.0).margin(0.3));
    REQUIRE(fit_slope(hs, el) == Catch::Approx(2.0).margin(0.3));
}

TEST_CASE("laplacian equals the hessian trace to rounding", "[calculus]") {
    std::mt19937_64 rng(7);
    auto fn = testsupport::random_smooth(rng, 2, 1.0, 1.4, 5);
    Grid g({-3.0, -2.0}, {3.0, 2.0}, {64, 48});
    ScalarField f = ScalarField::sample(g, [&](double x, double y) { return fn.value(x, y); });
    ScalarField lap = laplacian(f);
    SymMatrixField hess = hessian(f);
    for (std::size_t k = 0; k < g.size(); ++k)
        REQUIRE(lap[k] == Catch::Approx(hess.comp00()[k] + hess.comp11()[k]).margin(1e-13));
}

TEST_CASE("weighted laplacian with identity weight reduces to the laplacian", "[calculus]") {
    std::mt19937_64 rng(9);
    auto fn = testsupport::random_smooth(rng, 2, 1.0, 1.4, 5);
    Grid g({-3.0, -3.0}, {3.0, 3.0}, {48, 48});
    ScalarField f = ScalarField::sample(g, [&](double x, double y) { return fn.value(x, y); });
    SymMatrixField eye =
        SymMatrixField::sample(g, [](double, double) { return SymMat2{1.0, 0.0, 1.0}; });
    ScalarField a = weighted_laplacian(f, eye);
    ScalarField b = laplacian(f);
    for (std::size_t k = 0; k < g.size(); ++k) REQUIRE(a[k] == b[k]);
}

TEST_CASE("double divergence equals the weighted laplacian of a unit density", "[calculus]") {
    std::mt19937_64 rng(13);
    auto spd = testsupport::random_spd(rng, 2);
    Grid g({-2.0, -2.0}, {2.0, 2.0}, {40, 40});
    SymMatrixField sig = testsupport::sample_spd(g, spd);
    ScalarField ones(g, 1.0);
    ScalarField a = double_divergence(sig);
    ScalarField b = weighted_laplacian(ones, sig);
    for (std::size_t k = 0; k < g.size(); ++k) REQUIRE(a[k] == b[k]);
}

TEST_CASE("matrix divergence is exact on affine matrix entries", "[calculus]") {
    Grid g({-1.0, -1.0}, {1.0, 1.0}, {24, 24});
    SymMatrixField m = SymMatrixField::sample(g, [](double x, double y) {
        return SymMat2{1.0 + 0.5 * x, 0.2 * y + 0.1 * x, 2.0 - 0.3 * y};
    });
    VectorField div = matrix_divergence(m);
    for (std::size_t k = 0; k < g.size(); ++k) {
        REQUIRE(div.comp(0)[k] == Catch::Approx(0.5 + 0.2).margin(1e-12));
        REQUIRE(div.comp(1)[k] == Catch::Approx(0.1 - 0.3).margin(1e-12));
    }
}

TEST_CASE("divergence is exact on affine vector fields", "[calculus]") {
    Grid g({0.0, 0.0}, {1.0, 1.0}, {20, 20});
    VectorField v(g);
    v.comp(0) = ScalarField::sample(g, [](double x, double y) { return 1.0 + 2.0 * x - y; });
    v.comp(1) = ScalarField::sample(g, [](double x, double y) { return 0.5 * y + 3.0 * x; });
    ScalarField d = divergence(v);
    for (std::size_t k = 0; k < g.size(); ++k)
        REQUIRE(d[k] == Catch::Approx(2.5).margin(1e-12));
}

TEST_CASE("weighted laplacian matches its product-rule expansion at second order",
          "[calculus]") {
    std::mt19937_64 rng(21);
    auto fn = testsupport::random_smooth(rng, 2, 0.7, 1.2, 4);
    auto spd = testsupport::random_spd(rng, 2);
    std::vector<double> hs, errs;
    for (std::size_t n : {32, 64, 128}) {
        Grid g({-2.0, -2.0}, {2.0, 2.0}, {n, n});
        ScalarField rho = testsupport::sample_exp_density(g, fn);
        SymMatrixField sig = testsupport::sample_spd(g, spd);
        ScalarField lhs = weighted_laplacian(rho, sig);
        ScalarField ddiv = double_divergence(sig);
        VectorField divs = matrix_divergence(sig);
        SymMatrixField hess = hessian(rho);
        VectorField grad = gradient(rho);
        ScalarField resid(g);
        for (std::size_t k = 0; k < g.size(); ++k) {
            double rhs = rho[k] * ddiv[k] + frobenius(sig.at(k), hess.at(k), 2) +
                         2.0 * dot(divs.at(k), grad.at(k), 2);
            resid[k] = lhs[k] - rhs;
        }
        hs.push_back(g.spacing(0));
        errs.push_back(interior_max(resid, 3));
    }
    REQUIRE(fit_slope(hs, errs) > 1.7);
    REQUIRE(fit_slope(hs, errs) < 2.3);
}

TEST_CASE("time derivative is exact on quadratic clock signals", "[calculus]") {
    Grid g(0.0, 1.0, 16);
    TimeGrid tg(0.2, 1.0, 10);
    std::vector<ScalarField> slices;
    for (std::size_t j = 0; j < tg.slices(); ++j) {
        double t = tg.time(j);
        slices.push_back(ScalarField::sample(
            g, [&](double x, double) { return (1.0 + x) * (0.3 + 2.0 * t - 0.7 * t * t); }));
    }
    TimeSeries<ScalarField> s(tg, slices);
    auto ds = time_derivative(s);
    for (std::size_t j = 0; j < tg.slices(); ++j) {
        double t = tg.time(j);
        for (std::size_t k = 0; k < g.size(); ++k) {
            double x = g.node_coord(k, 0);
            REQUIRE(ds.slice(j)[k] ==
                    Catch::Approx((1.0 + x) * (2.0 - 1.4 * t)).margin(1e-10));
        }
    }
}

TEST_CASE("time derivative of a constant series vanishes", "[calculus]") {
    Grid g(0.0, 1.0, 16);
    TimeGrid tg(0.0, 2.0, 8);
    std::vector<ScalarField> slices(tg.slices(), ScalarField(g, 3.25));
    TimeSeries<ScalarField> s(tg, slices);
    auto ds = time_derivative(s);
    for (std::size_t j = 0; j < tg.slices(); ++j)
        for (std::size_t k = 0; k < g.size(); ++k)
            REQUIRE(ds.slice(j)[k] == Catch::Approx(0.0).margin(1e-13));
}

TEST_CASE("time derivative handles complex series componentwise", "[calculus]") {
    Grid g(0.0, 1.0, 16);
    TimeGrid tg(0.0, 1.0, 8);
    std::vector<ComplexField> slices;
    for (std::size_t j = 0; j < tg.slices(); ++j) {
        double t = tg.time(j);
        ComplexField c(ScalarField(g, t * t), ScalarField(g, 1.0 - t));
        slices.push_back(c);
    }
    TimeSeries<ComplexField> s(tg, slices);
    auto ds = time_derivative(s);
    for (std::size_t j = 0; j < tg.slices(); ++j) {
        double t = tg.time(j);
        REQUIRE(ds.slice(j).re()[0] == Catch::Approx(2.0 * t).margin(1e-12));
        REQUIRE(ds.slice(j).im()[0] == Catch::Approx(-1.0).margin(1e-12));
    }
}

TEST_CASE("per-node algebra matches hand evaluation", "[calculus]") {
    SymMat2 m{2.0, 0.5, 3.0};
    Vec2 u{1.0, -2.0}, v{0.5, 4.0};
    // 2-D forms
    REQUIRE(quad_form(m, u, 2) == Catch::Approx(2.0 * 1 + 2 * 0.5 * 1 * (-2) + 3.0 * 4).margin(1e-14));
    REQUIRE(bilinear(u, m, v, 2) ==
            Catch::Approx(u.x0 * (2.0 * 0.5 + 0.5 * 4.0) + u.x1 * (0.5 * 0.5 + 3.0 * 4.0))
                .margin(1e-14));
    REQUIRE(dot(u, v, 2) == Catch::Approx(0.5 - 8.0).margin(1e-14));
    Vec2 mv = sym_apply(m, v, 2);
    REQUIRE(mv.x0 == Catch::Approx(2.0 * 0.5 + 0.5 * 4.0).margin(1e-14));
    REQUIRE(mv.x1 == Catch::Approx(0.5 * 0.5 + 3.0 * 4.0).margin(1e-14));
    SymMat2 b{1.0, -1.0, 0.5};
    REQUIRE(frobenius(m, b, 2) == Catch::Approx(2.0 * 1.0 + 2.0 * 0.5 * (-1.0) + 3.0 * 0.5)
                                      .margin(1e-14));
    // 1-D forms ignore the second component
    REQUIRE(quad_form(m, u, 1) == Catch::Approx(2.0).margin(1e-14));
    REQUIRE(dot(u, v, 1) == Catch::Approx(0.5).margin(1e-14));
    REQUIRE(frobenius(m, b, 1) == Catch::Approx(2.0).margin(1e-14));
}
