#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <random>
#include <vector>

#include "casb/calculus.hpp"
#include "casb/field.hpp"
#include "casb/grid.hpp"
#include "casb/potentials.hpp"
#include "support/oracles.hpp"

using namespace casb;
using testsupport::SmoothFn;

namespace {

ScalarField sample_fn(const Grid& g, const SmoothFn& f) {
    return ScalarField::sample(g, [&](double x, double y) { return f.value(x, y); });
}

double complex_max_abs_diff(const ComplexField& a, const ComplexField& b) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.grid().size(); ++k) {
        worst = std::max(worst, std::abs(a.re()[k] - b.re()[k]));
        worst = std::max(worst, std::abs(a.im()[k] - b.im()[k]));
    }
    return worst;
}

double complex_scale(const ComplexField& a) {
    return std::max({max_abs(a.re()), max_abs(a.im()), 1.0});
}

GenMatrixField smooth_gmat(const Grid& g) {
    if (g.dim() == 1)
        return GenMatrixField::sample(
            g, [](double x, double) { return Mat2::scalar(1.1 + 0.25 * std::sin(0.8 * x)); });
    return GenMatrixField::sample(g, [](double x, double y) {
        return Mat2{1.2 + 0.2 * std::sin(0.7 * x + 0.3 * y), 0.15 * std::cos(0.5 * x - 0.4 * y),
                    -0.1 * std::sin(0.6 * x + 0.2 * y), 0.9 + 0.1 * std::cos(0.8 * y)};
    });
}

VectorField smooth_drift(const Grid& g) {
    VectorField f(g);
    for (std::size_t k = 0; k < g.size(); ++k) {
        double x = g.node_coord(k, 0);
        double y = g.dim() == 2 ? g.node_coord(k, 1) : 0.0;
        Vec2 v{-0.4 * x + 0.2 * std::sin(0.5 * y), 0.3 * std::cos(0.4 * x) - 0.2 * y};
        if (g.dim() == 1) v.x1 = 0.0;
        f.set(k, v);
    }
    return f;
}

Grid test_grid(int dim) {
    if (dim == 1) return Grid(-2.0, 2.0, 96);
    return Grid({-2.0, -2.0}, {2.0, 2.0}, {40, 40});
}

}  // namespace

TEST_CASE("constant fields produce an identically zero potential", "[potentials]") {
    for (int dim : {1, 2}) {
        Grid g = test_grid(dim);
        ScalarField r(g, 0.3);
        ScalarField s(g, -0.7);
        ScalarField q(g, 0.0);
        VectorField f(g);
        GenMatrixField gm = GenMatrixField::sample(
            g, [&](double, double) { return Mat2::identity(g.dim(), 1.1); });
        SymMatrixField sig = SymMatrixField::sample(
            g, [](double, double) { return SymMat2{0.9, 0.1, 1.3}; });

        // One-sided boundary stencils round on non-dyadic constants, so the
        // zero is exact only up to a few ulps of the stencil arithmetic.
        ComplexField v = v_casb_slice(r, s, f, gm, sig, q, 0.8);
        CHECK(max_abs(v.re()) <= 1e-12);
        CHECK(max_abs(v.im()) <= 1e-12);

        ComplexField v1 = v_casb_one_slice(r, s, f, gm, q);
        CHECK(max_abs(v1.re()) <= 1e-12);
        CHECK(max_abs(v1.im()) <= 1e-12);
    }
}

TEST_CASE("general potential at plain-bridge inputs matches the plain assembly",
          "[potentials]") {
    std::mt19937_64 rng(2024);
    for (int dim : {1, 2}) {
        Grid g = test_grid(dim);
        SmoothFn rf = testsupport::random_smooth(rng, dim);
        SmoothFn sf = testsupport::random_smooth(rng, dim);
        ScalarField r = sample_fn(g, rf);
        ScalarField s = sample_fn(g, sf);
        ScalarField q(g, 0.0);
        VectorField f(g);
        GenMatrixField gm = GenMatrixField::sample(
            g, [&](double, double) { return Mat2::identity(g.dim()); });
        SymMatrixField sig = SymMatrixField::sample(g, [&](double, double) {
            return g.dim() == 1 ? SymMat2{1.0, 0.0, 0.0} : SymMat2{1.0, 0.0, 1.0};
        });

        ComplexField general = v_casb_slice(r, s, f, gm, sig, q, 1.0);
        ComplexField plain = v_sb_slice(r, s);
        CHECK(complex_max_abs_diff(general, plain) <= 1e-10 * complex_scale(plain));
    }
}

TEST_CASE("proportional-noise inputs collapse the general potential", "[potentials]") {
    std::mt19937_64 rng(77);
    const double lambda = 0.8;
    for (int dim : {1, 2}) {
        Grid g = test_grid(dim);
        ScalarField r = sample_fn(g, testsupport::random_smooth(rng, dim));
        ScalarField s = sample_fn(g, testsupport::random_smooth(rng, dim));
        ScalarField q = sample_fn(g, testsupport::random_smooth(rng, dim, 0.3));
        VectorField f = smooth_drift(g);
        GenMatrixField gm = smooth_gmat(g);
        SymMatrixField sig = detail::scaled(gm.gram(), lambda);

        ComplexField general = v_casb_slice(r, s, f, gm, sig, q, lambda);
        ComplexField prop = v_casb_lambda_slice(r, s, f, gm, q, lambda);
        CHECK(complex_max_abs_diff(general, prop) <= 1e-10 * complex_scale(general));
    }
}

TEST_CASE("proportional potential at unit ratio equals the unit-ratio assembly",
          "[potentials]") {
    std::mt19937_64 rng(78);
    for (int dim : {1, 2}) {
        Grid g = test_grid(dim);
        ScalarField r = sample_fn(g, testsupport::random_smooth(rng, dim));
        ScalarField s = sample_fn(g, testsupport::random_smooth(rng, dim));
        ScalarField q = sample_fn(g, testsupport::random_smooth(rng, dim, 0.3));
        VectorField f = smooth_drift(g);
        GenMatrixField gm = smooth_gmat(g);

        ComplexField prop = v_casb_lambda_slice(r, s, f, gm, q, 1.0);
        ComplexField unit = v_casb_one_slice(r, s, f, gm, q);
        CHECK(complex_max_abs_diff(prop, unit) <= 1e-12 * complex_scale(unit));
    }
}

TEST_CASE("unit-ratio potential at plain-bridge inputs equals the plain assembly",
          "[potentials]") {
    std::mt19937_64 rng(79);
    for (int dim : {1, 2}) {
        Grid g = test_grid(dim);
        ScalarField r = sample_fn(g, testsupport::random_smooth(rng, dim));
        ScalarField s = sample_fn(g, testsupport::random_smooth(rng, dim));
        ScalarField q(g, 0.0);
        VectorField f(g);
        GenMatrixField gm = GenMatrixField::sample(
            g, [&](double, double) { return Mat2::identity(g.dim()); });

        ComplexField unit = v_casb_one_slice(r, s, f, gm, q);
        ComplexField plain = v_sb_slice(r, s);
        CHECK(complex_max_abs_diff(unit, plain) <= 1e-12 * complex_scale(plain));
    }
}

TEST_CASE("plain potential reproduces the standard-normal closed form", "[potentials]") {
    // rho = N(0,1) gives R = -x^2/4 - log(2 pi)/4, so the imaginary part is
    // (x^2 - 1)/4; both derivative stencils are exact on polynomials.
    Grid g(-8.0, 8.0, 513);
    ScalarField r = ScalarField::sample(g, [](double x, double) {
        return -0.25 * x * x - 0.25 * std::log(2.0 * std::acos(-1.0));
    });
    ScalarField s(g, 0.0);
    ComplexField v = v_sb_slice(r, s);

    std::size_t center = 256;
    REQUIRE(g.node_coord(center, 0) == Catch::Approx(0.0).margin(1e-14));
    CHECK(std::abs(v.im()[center] - (-0.25)) < 1e-12);

    double worst = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        double x = g.node_coord(k, 0);
        worst = std::max(worst, std::abs(v.im()[k] - 0.25 * (x * x - 1.0)));
    }
    CHECK(worst < 1e-10);
}

TEST_CASE("imaginary part tracks the density laplacian quotient at second order",
          "[potentials]") {
    std::mt19937_64 rng(404);
    SmoothFn f = testsupport::random_smooth(rng, 1, 0.6, 1.0);
    std::vector<double> hs, errs;
    for (std::size_t n : {64u, 128u, 256u}) {
        Grid g(-2.0, 2.0, n);
        ScalarField rho = testsupport::sample_exp_density(g, f);
        ScalarField r = ScalarField::sample(
            g, [&](double x, double y) { return 0.5 * f.value(x, y); });
        ScalarField s(g, 0.0);
        ComplexField v = v_sb_slice(r, s);
        ScalarField lap_rho = laplacian(rho);

        double worst = 0.0;
        for (std::size_t k = 3; k + 3 < g.size(); ++k)
            worst = std::max(worst,
                             std::abs(v.im()[k] - formulas::half_log_identity_lhs(
                                                      lap_rho[k], rho[k])));
        hs.push_back(g.spacing(0));
        errs.push_back(worst);
    }
    double slope = testsupport::fit_slope(hs, errs);
    CHECK(slope > 1.7);
    CHECK(slope < 2.3);
}

TEST_CASE("formula kernels satisfy the density laplacian identity analytically",
          "[potentials]") {
    std::mt19937_64 rng(405);
    for (int dim : {1, 2}) {
        SmoothFn f = testsupport::random_smooth(rng, dim);
        Grid g = test_grid(dim);
        double worst = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            double x = g.node_coord(k, 0);
            double y = dim == 2 ? g.node_coord(k, 1) : 0.0;
            Vec2 gf = f.grad(x, y);
            double grad_r_sq = 0.25 * dot(gf, gf, dim);
            double lap_r = 0.5 * f.laplace(x, y);
            double lhs = formulas::vsb_im(lap_r, grad_r_sq);
            // laplacian(e^f)/(4 e^f) = (laplace f + |grad f|^2)/4
            double rhs = 0.25 * (f.laplace(x, y) + dot(gf, gf, dim));
            worst = std::max(worst, std::abs(lhs - rhs));
        }
        CHECK(worst < 1e-13);
    }
}

TEST_CASE("quantum correction term closed forms", "[potentials]") {
    Grid g(-3.0, 3.0, 128);

    ScalarField flat(g, 1.7);
    CHECK(max_abs(bohm_potential_slice(flat)) <= 1e-12);

    ScalarField parab = ScalarField::sample(g, [](double x, double) { return -0.5 * x * x; });
    ScalarField b = bohm_potential_slice(parab);
    double worst = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k)
        worst = std::max(worst, std::abs(b[k] + 0.25));
    CHECK(worst < 1e-12);

    // Im of the plain potential minus |grad R|^2 minus the correction term
    // equals the correction term again.
    std::mt19937_64 rng(406);
    ScalarField r = sample_fn(g, testsupport::random_smooth(rng, 1));
    ScalarField s(g, 0.0);
    ComplexField v = v_sb_slice(r, s);
    ScalarField bq = bohm_potential_slice(r);
    VectorField gr = gradient(r);
    double scale = std::max(1.0, max_abs(v.im()));
    worst = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        Vec2 gv = gr.at(k);
        double lhs = v.im()[k] - dot(gv, gv, 1) - bq[k];
        worst = std::max(worst, std::abs(lhs - bq[k]));
    }
    CHECK(worst <= 1e-10 * scale);
}

TEST_CASE("degenerate noise covariance is rejected", "[potentials]") {
    // 97 nodes over [-2, 2] place a node exactly at x = 0.
    Grid g(-2.0, 2.0, 97);
    ScalarField r(g, 0.0), s(g, 0.0), q(g, 0.0);
    VectorField f(g);
    GenMatrixField gm =
        GenMatrixField::sample(g, [](double, double) { return Mat2::scalar(1.0); });
    SymMatrixField sig =
        SymMatrixField::sample(g, [](double x, double) { return SymMat2{x * x, 0.0, 0.0}; });
    CHECK_THROWS_AS(v_casb_slice(r, s, f, gm, sig, q, 1.0), ConfigError);

    GenMatrixField gsing =
        GenMatrixField::sample(g, [](double x, double) { return Mat2::scalar(x); });
    CHECK_THROWS_AS(v_casb_lambda_slice(r, s, f, gsing, q, 0.5), ConfigError);
    CHECK_THROWS_AS(v_casb_one_slice(r, s, f, gsing, q), ConfigError);
}

TEST_CASE("potential input validation", "[potentials]") {
    Grid g = test_grid(1);
    Grid other(-2.0, 2.0, 48);
    ScalarField r(g, 0.0), s(g, 0.0), q(g, 0.0);
    VectorField f(g);
    GenMatrixField gm =
        GenMatrixField::sample(g, [](double, double) { return Mat2::scalar(1.0); });
    SymMatrixField sig =
        SymMatrixField::sample(g, [](double, double) { return SymMat2{1.0, 0.0, 0.0}; });

    CHECK_THROWS_AS(v_casb_slice(r, s, f, gm, sig, ScalarField(other, 0.0), 1.0), ConfigError);
    CHECK_THROWS_AS(v_casb_slice(r, ScalarField(other, 0.0), f, gm, sig, q, 1.0), ConfigError);
    CHECK_THROWS_AS(v_casb_slice(r, s, f, gm, sig, q, 0.0), ConfigError);
    CHECK_THROWS_AS(v_casb_slice(r, s, f, gm, sig, q, -1.0), ConfigError);
    CHECK_THROWS_AS(v_casb_lambda_slice(r, s, f, gm, q, 0.0), ConfigError);
}

TEST_CASE("series drivers apply the slice assembly per time node", "[potentials]") {
    Grid g(-2.0, 2.0, 48);
    TimeGrid tg(0.0, 1.0, 8);
    std::mt19937_64 rng(11);

    std::vector<ScalarField> rs, ss;
    for (std::size_t j = 0; j < tg.slices(); ++j) {
        SmoothFn fj = testsupport::random_smooth(rng, 1);
        rs.push_back(sample_fn(g, fj));
        ss.push_back(sample_fn(g, testsupport::random_smooth(rng, 1)));
    }
    TimeSeries<ScalarField> R(tg, rs), S(tg, ss);
    VectorField f(g);
    GenMatrixField gm =
        GenMatrixField::sample(g, [](double, double) { return Mat2::scalar(1.2); });
    ScalarField q(g, 0.1);

    PotentialField p = v_casb_one(R, S, f, gm, q);
    CHECK(p.variant == PotentialVariant::kCaSBOne);
    CHECK(p.values.time_grid() == tg);
    for (std::size_t j = 0; j < tg.slices(); ++j) {
        ComplexField direct = v_casb_one_slice(R.slice(j), S.slice(j), f, gm, q);
        CHECK(complex_max_abs_diff(p.values.slice(j), direct) == 0.0);
    }

    PotentialField pb = bohm_potential(R);
    CHECK(pb.variant == PotentialVariant::kBohmReal);
    for (std::size_t j = 0; j < tg.slices(); ++j) {
        CHECK(max_abs(pb.values.slice(j).im()) == 0.0);
        ScalarField direct = bohm_potential_slice(R.slice(j));
        double worst = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k)
            worst = std::max(worst, std::abs(pb.values.slice(j).re()[k] - direct[k]));
        CHECK(worst == 0.0);
    }

    // Mismatched coefficient slice counts and grids are rejected.
    std::vector<ScalarField> two(2, q);
    CHECK_THROWS_AS(
        v_casb_one(R, S, f, gm, CoefficientSeries<ScalarField>(two)), ConfigError);
    CHECK_THROWS_AS(v_casb_one(R, S, f, gm, ScalarField(Grid(-2.0, 2.0, 32), 0.0)),
                    ConfigError);

    CHECK(to_string(PotentialVariant::kCaSB) == "caSB");
    CHECK(to_string(PotentialVariant::kSB) == "SB");
    CHECK(to_string(PotentialVariant::kBohmReal) == "bohm_real");
}

TEST_CASE("potential assembly is stencil-local", "[potentials]") {
    Grid g({-2.0, -2.0}, {2.0, 2.0}, {24, 24});
    std::mt19937_64 rng(31);
    ScalarField r = sample_fn(g, testsupport::random_smooth(rng, 2));
    ScalarField s = sample_fn(g, testsupport::random_smooth(rng, 2));
    ScalarField q(g, 0.0);
    VectorField f = smooth_drift(g);
    GenMatrixField gm = smooth_gmat(g);

    ComplexField base = v_casb_one_slice(r, s, f, gm, q);

    std::size_t i0 = 11, i1 = 13;
    ScalarField r2 = r;
    r2[g.index(i0, i1)] += 1e-3;
    ComplexField bumped = v_casb_one_slice(r2, s, f, gm, q);

    long worst_cheb = 0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (base.re()[k] != bumped.re()[k] || base.im()[k] != bumped.im()[k]) {
            long d0 = std::labs(static_cast<long>(g.axis_index(k, 0)) - static_cast<long>(i0));
            long d1 = std::labs(static_cast<long>(g.axis_index(k, 1)) - static_cast<long>(i1));
            worst_cheb = std::max(worst_cheb, std::max(d0, d1));
        }
    }
    CHECK(worst_cheb <= 2);
}
