#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "oxysense/rng.hpp"
#include "oxysense/spline.hpp"

using namespace oxysense;

namespace {

Eigen::VectorXd to_vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

CubicSpline random_spline(std::uint64_t seed, Eigen::Index n) {
    auto gen = rng::make_stream(seed, "spline-test");
    Eigen::VectorXd xs(n), ys(n);
    double x = gen.uniform(-2.0, 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        xs(i) = x;
        x += gen.uniform(0.2, 1.5);
        ys(i) = gen.uniform(-3.0, 3.0);
    }
    return CubicSpline(xs, ys);
}

}  // namespace

TEST_CASE("collinear knots reproduce the line exactly") {
    const CubicSpline s(to_vec({0, 1, 2, 3}), to_vec({0, 1, 2, 3}));
    CHECK(s(1.5) == doctest::Approx(1.5).epsilon(1e-14));
    for (double x = 0.0; x <= 3.0; x += 0.01) {
        CHECK(std::abs(s(x) - x) <= 1e-12);
    }
}

TEST_CASE("hand-computed natural spline value") {
    // knots (0,0),(1,1),(2,0): interior second derivative -3,
    // S(0.5) = 0.5 + (-3/6)*(0.125 - 0.5) ... = 0.6875
    const CubicSpline s(to_vec({0, 1, 2}), to_vec({0, 1, 0}));
    CHECK(std::abs(s(0.5) - 0.6875) <= 1e-12);
}

TEST_CASE("knot pass-through") {
    const CubicSpline s = random_spline(5, 9);
    for (Eigen::Index k = 0; k < s.size(); ++k) {
        CHECK(std::abs(s(s.knots_x()(k)) - s.knots_y()(k)) <= 1e-12);
    }
}

TEST_CASE("endpoints and domain errors") {
    const CubicSpline s = random_spline(6, 5);
    CHECK(s(s.x_min()) == doctest::Approx(s.knots_y()(0)).epsilon(1e-14));
    CHECK(s(s.x_max()) == doctest::Approx(s.knots_y()(4)).epsilon(1e-14));
    CHECK_THROWS_AS(s(s.x_min() - 1e-9), std::domain_error);
    CHECK_THROWS_AS(s(s.x_max() + 1e-9), std::domain_error);
}

TEST_CASE("construction errors") {
    CHECK_THROWS_AS(CubicSpline(to_vec({0, 1, 2}), to_vec({0, 1})), std::invalid_argument);
    CHECK_THROWS_AS(CubicSpline(to_vec({0, 1}), to_vec({0, 1})), std::invalid_argument);
    CHECK_THROWS_AS(CubicSpline(to_vec({0, 1, 1}), to_vec({0, 1, 2})), std::invalid_argument);
    CHECK_THROWS_AS(CubicSpline(to_vec({0, 2, 1}), to_vec({0, 1, 2})), std::invalid_argument);
}

TEST_CASE("C1/C2 continuity at interior knots") {
    const CubicSpline s = random_spline(7, 8);
    const auto f = [&](double x) { return s(x); };
    for (Eigen::Index k = 1; k + 1 < s.size(); ++k) {
        const double xk = s.knots_x()(k);
        const double gap_l = xk - s.knots_x()(k - 1);
        const double gap_r = s.knots_x()(k + 1) - xk;
        const double h = 0.05 * std::min(gap_l, gap_r);

        const double d1l = oracles::fd_first_derivative(f, xk, h, -1);
        const double d1r = oracles::fd_first_derivative(f, xk, h, +1);
        CHECK(std::abs(d1l - d1r) <= 1e-6 * std::max({1.0, std::abs(d1l), std::abs(d1r)}));

        const double d2l = oracles::fd_second_derivative(f, xk, h, -1);
        const double d2r = oracles::fd_second_derivative(f, xk, h, +1);
        CHECK(std::abs(d2l - d2r) <= 1e-6 * std::max({1.0, std::abs(d2l), std::abs(d2r)}));
    }
}

TEST_CASE("natural boundary condition") {
    const CubicSpline s = random_spline(8, 7);
    const auto f = [&](double x) { return s(x); };
    double curv_scale = 1.0;
    for (Eigen::Index k = 1; k + 1 < s.size(); ++k) {
        const double h = 0.05 * (s.knots_x()(k) - s.knots_x()(k - 1));
        curv_scale = std::max(curv_scale,
                              std::abs(oracles::fd_second_derivative(f, s.knots_x()(k), h, -1)));
    }
    const double h0 = 0.05 * (s.knots_x()(1) - s.knots_x()(0));
    const double hn = 0.05 * (s.knots_x()(s.size() - 1) - s.knots_x()(s.size() - 2));
    CHECK(std::abs(oracles::fd_second_derivative(f, s.x_min(), h0, +1)) <= 1e-6 * curv_scale);
    CHECK(std::abs(oracles::fd_second_derivative(f, s.x_max(), hn, -1)) <= 1e-6 * curv_scale);
}

TEST_CASE("agreement with the independent dense-solver spline") {
    auto gen = rng::make_stream(9, "spline-test");
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index n = 3 + static_cast<Eigen::Index>(gen.uniform(0.0, 10.0));
        Eigen::VectorXd xs(n), ys(n);
        double x = gen.uniform(-5.0, 0.0);
        for (Eigen::Index i = 0; i < n; ++i) {
            xs(i) = x;
            x += gen.uniform(0.1, 2.0);
            ys(i) = gen.uniform(-10.0, 10.0);
        }
        const CubicSpline s(xs, ys);
        const oracles::DenseNaturalSpline ref(xs, ys);
        for (Eigen::Index i = 0; i + 1 < n; ++i) {
            const double mid = 0.5 * (xs(i) + xs(i + 1));
            CHECK(std::abs(s(mid) - ref(mid)) <= 1e-10);
        }
        for (int j = 0; j < 50; ++j) {
            const double q = gen.uniform(xs(0), xs(n - 1));
            CHECK(std::abs(s(q) - ref(q)) <= 1e-10);
        }
    }
}

TEST_CASE("ParamCurves require shared knots") {
    const Eigen::VectorXd xs = to_vec({1, 2, 3, 4});
    const CubicSpline a(xs, to_vec({0.8, 0.82, 0.85, 0.9}));
    const CubicSpline b(xs, to_vec({0.03, 0.028, 0.025, 0.02}));
    const CubicSpline c(xs, to_vec({0.003, 0.0028, 0.0025, 0.002}));
    CHECK_NOTHROW(ParamCurves(a, b, c));

    const CubicSpline shifted(to_vec({1, 2, 3, 5}), to_vec({0.003, 0.0028, 0.0025, 0.002}));
    CHECK_THROWS_AS(ParamCurves(a, b, shifted), std::invalid_argument);
}

TEST_CASE("sample_params") {
    const Eigen::VectorXd xs = to_vec({100, 200, 300, 400});
    const Eigen::VectorXd f_knots = to_vec({0.8, 0.84, 0.88, 0.9});
    const Eigen::VectorXd k1_knots = to_vec({0.03, 0.028, 0.024, 0.02});
    const Eigen::VectorXd k2_knots = to_vec({0.003, 0.0028, 0.0024, 0.002});
    const ParamCurves curves(CubicSpline(xs, f_knots), CubicSpline(xs, k1_knots),
                             CubicSpline(xs, k2_knots));

    SUBCASE("at a knot the fitted parameters come back") {
        const TwoSiteParams p = sample_params(curves, ModulationFrequency::from_angular(200.0));
        CHECK(p.f() == doctest::Approx(0.84).epsilon(1e-12));
        CHECK(p.ksv1() == doctest::Approx(0.028).epsilon(1e-12));
        CHECK(p.ksv2() == doctest::Approx(0.0028).epsilon(1e-12));
    }
    SUBCASE("midpoint agrees with the independent oracle") {
        const oracles::DenseNaturalSpline f_ref(xs, f_knots);
        const TwoSiteParams p = sample_params(curves, ModulationFrequency::from_angular(250.0));
        CHECK(std::abs(p.f() - f_ref(250.0)) <= 1e-10);
    }
    SUBCASE("out-of-domain frequency is an error") {
        CHECK_THROWS_AS(sample_params(curves, ModulationFrequency::from_angular(99.0)),
                        std::domain_error);
        CHECK_THROWS_AS(sample_params(curves, ModulationFrequency::from_angular(401.0)),
                        std::domain_error);
    }
}

TEST_CASE("sample_params clamps interpolation overshoot") {
    // the f spline through (0.7, 1, 1, 0.7) exceeds 1 between the middle knots
    const Eigen::VectorXd xs = to_vec({1, 2, 3, 4});
    const ParamCurves curves(CubicSpline(xs, to_vec({0.7, 1.0, 1.0, 0.7})),
                             CubicSpline(xs, to_vec({0.03, 0.03, 0.03, 0.03})),
                             CubicSpline(xs, to_vec({0.003, 0.003, 0.003, 0.003})));
    CHECK(curves.f_curve(2.5) > 1.0);  // precondition of the scenario
    const TwoSiteParams p = sample_params(curves, ModulationFrequency::from_angular(2.5));
    CHECK(p.f() == 1.0);

    // a dipping constant curve is clamped at zero
    const ParamCurves dip(CubicSpline(xs, to_vec({0.8, 0.8, 0.8, 0.8})),
                          CubicSpline(xs, to_vec({0.05, 0.03, 0.03, 0.05})),
                          CubicSpline(xs, to_vec({0.004, 0.0, 0.0, 0.004})));
    CHECK(dip.ksv2_curve(2.5) < 0.0);
    CHECK(sample_params(dip, ModulationFrequency::from_angular(2.5)).ksv2() == 0.0);
}
