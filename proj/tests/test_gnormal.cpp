#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "gexpect/gnormal.hpp"
#include "oracle.hpp"

using namespace gexpect;

namespace {

GNormalSpec two_point_spec(std::size_t substeps = 8, std::size_t nodes = 21,
                           QuadratureMode mode = QuadratureMode::gauss_hermite) {
    return GNormalSpec::create(CovarianceSet::scalar({0.25, 1.0}), substeps, nodes, mode);
}

CovarianceSet corr_set() {
    SymMatrix rho(2);
    rho.set(0, 0, 1.0);
    rho.set(1, 1, 1.0);
    rho.set(0, 1, 0.5);
    return CovarianceSet::create(
        {SymMatrix::identity(2) * 0.25, SymMatrix::identity(2), rho});
}

} // namespace

TEST_CASE("spec creation validates its knobs") {
    auto cov = CovarianceSet::scalar({0.25, 1.0});
    REQUIRE_THROWS_AS(GNormalSpec::create(cov, 0), input_error);
    REQUIRE_THROWS_AS(GNormalSpec::create(cov, 8, 4), input_error);
    REQUIRE_THROWS_AS(GNormalSpec::create(cov, 8, 6), input_error);
    REQUIRE_THROWS_AS(GNormalSpec::create(cov, 8, 403), input_error);
    REQUIRE_NOTHROW(GNormalSpec::create(cov, 1, 5));
}

TEST_CASE("absolute moments match the closed forms") {
    auto spec = two_point_spec();
    std::vector<double> a = {1.0};

    // sigma = sigma_bar = 1 here, so p = 1..4 are the textbook values
    const double c = std::sqrt(2.0 / std::numbers::pi);
    CHECK(std::fabs(abs_moment(spec, a, 1.0) - c) <= 1e-10 * c);
    CHECK(std::fabs(abs_moment(spec, a, 2.0) - 1.0) <= 1e-10);
    CHECK(std::fabs(abs_moment(spec, a, 3.0) - 2.0 * c) <= 1e-10 * 2.0 * c);
    CHECK(std::fabs(abs_moment(spec, a, 4.0) - 3.0) <= 1e-10 * 3.0);

    for (double p : {1.0, 2.0, 3.0, 4.0, 2.5, 3.5, 6.0}) {
        const double want = oracle::gaussian_abs_moment(1.0, p);
        CHECK(std::fabs(abs_moment(spec, a, p) - want) <= 1e-10 * want);
        CHECK(std::fabs(abs_moment_quadrature(spec, a, p) - want) <= 1e-8 * want);
    }

    // direction scaling: <2, X> doubles sigma
    std::vector<double> a2 = {2.0};
    CHECK(abs_moment(spec, a2, 2.0) == Catch::Approx(4.0).epsilon(1e-12));
    CHECK(abs_moment(spec, a2, 4.0) == Catch::Approx(48.0).epsilon(1e-12));

    std::vector<double> zero = {0.0};
    CHECK(abs_moment(spec, zero, 2.0) == 0.0);

    REQUIRE_THROWS_AS(abs_moment(spec, a, 0.5), input_error);
    REQUIRE_THROWS_AS(abs_moment(spec, std::vector<double>{1.0, 0.0}, 2.0), input_error);
}

TEST_CASE("absolute moments in d = 2 pick the worst covariance") {
    auto spec = GNormalSpec::create(corr_set());
    // a^T gamma a over the set: 0.5, 2, 3 -> the correlated matrix wins
    std::vector<double> a = {1.0, 1.0};
    CHECK(abs_moment(spec, a, 2.0) == Catch::Approx(3.0).epsilon(1e-12));
    CHECK(abs_moment(spec, a, 4.0) == Catch::Approx(27.0).epsilon(1e-12));
    // the difference direction de-correlates: a^T rho a = 1, identity wins
    std::vector<double> d = {1.0, -1.0};
    CHECK(abs_moment(spec, d, 2.0) == Catch::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("one-step expectation reproduces the variance envelope") {
    auto spec = two_point_spec();

    auto sq = one_step_expectation(spec, parse_functional("x1^2", 1), 1.0);
    CHECK(sq.value == Catch::Approx(1.0).epsilon(1e-3)); // max variance
    CHECK(sq.mass_leak <= 1e-8);

    auto neg_sq = one_step_expectation(spec, parse_functional("-x1^2", 1), 1.0);
    CHECK(neg_sq.value == Catch::Approx(-0.25).epsilon(1e-3)); // min variance

    auto quartic = one_step_expectation(spec, parse_functional("x1^4", 1), 1.0);
    CHECK(quartic.value == Catch::Approx(3.0).epsilon(1e-3));
    CHECK(std::fabs(quartic.value - 3.0) <= quartic.error_estimate);

    auto no_est = one_step_expectation(spec, parse_functional("x1^2", 1), 1.0, {801, 6.0, 201, false});
    CHECK(no_est.error_estimate == 0.0);
    CHECK(no_est.value == sq.value);

    // dt scaling: variance grows linearly
    auto half = one_step_expectation(spec, parse_functional("x1^2", 1), 0.5);
    CHECK(half.value == Catch::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("narrow grids are rejected, not extrapolated over") {
    auto spec = two_point_spec();
    auto narrow = ValueFunction1D::uniform(-2.0, 2.0, 101, [](double x) { return x * x; });
    REQUIRE_THROWS_AS(one_step_expectation(spec, narrow, 1.0), input_error);
    REQUIRE_THROWS_WITH(one_step_expectation(spec, narrow, 1.0),
                        Catch::Matchers::ContainsSubstring("grid too narrow"));

    auto off_origin = ValueFunction1D::uniform(1.0, 9.0, 101, [](double x) { return x; });
    REQUIRE_THROWS_AS(one_step_expectation(spec, off_origin, 1.0), input_error);

    REQUIRE_THROWS_AS(one_step_expectation(spec, narrow, -1.0), input_error);

    auto spec2 = GNormalSpec::create(corr_set());
    auto wide = ValueFunction1D::uniform(-9.0, 9.0, 101, [](double x) { return x; });
    REQUIRE_THROWS_AS(one_step_expectation(spec2, wide, 1.0), capability_error);
}

TEST_CASE("pl_exact quadrature is exact on piecewise-linear payoffs") {
    auto spec = two_point_spec(1, 21, QuadratureMode::pl_exact);
    const double w = 6.0;
    auto abs_psi = ValueFunction1D::uniform(-w, w, 1601, [](double x) { return std::fabs(x); });
    auto r = one_step_expectation(spec, abs_psi, 1.0, false);
    // |x| is in the scheme's exact class: no quadrature or interpolation error
    CHECK(std::fabs(r.value - std::sqrt(2.0 / std::numbers::pi)) <= 1e-8);

    // a single gauss-hermite step pays the full kink penalty (about 0.66/n
    // for 21 nodes); it lands a few percent off where pl_exact is exact
    auto gh = two_point_spec(1, 21);
    auto r_gh = one_step_expectation(gh, abs_psi, 1.0, false);
    CHECK(std::fabs(r_gh.value - std::sqrt(2.0 / std::numbers::pi)) <= 5e-2);
    CHECK(std::fabs(r.value - std::sqrt(2.0 / std::numbers::pi)) <
          std::fabs(r_gh.value - std::sqrt(2.0 / std::numbers::pi)));
}

TEST_CASE("one-step in d = 2 sees the correlated worst case") {
    auto spec = GNormalSpec::create(corr_set(), 4, 11);
    const double w = 6.0 * spec.cov.sigma_bar();
    auto psi = ValueFunction2D::uniform(-w, w, 201, -w, w, 201,
                                        [](double x, double y) { return (x + y) * (x + y); });
    auto r = one_step_expectation_2d(spec, psi, 1.0);
    CHECK(r.value == Catch::Approx(3.0).epsilon(5e-3));
    CHECK(r.mass_leak <= 1e-8);

    auto spec1 = two_point_spec();
    auto psi1 = ValueFunction2D::uniform(-w, w, 51, -w, w, 51,
                                         [](double, double) { return 0.0; });
    REQUIRE_THROWS_AS(one_step_expectation_2d(spec1, psi1, 1.0), capability_error);
}

TEST_CASE("scaling identity holds at a = b = 1") {
    auto spec = two_point_spec();
    std::vector<FunctionalSpec> phis = {
        parse_functional("x1^2", 1), parse_functional("x1^4", 1),
        parse_functional("abs(x1)", 1), parse_functional("max(x1, 0)", 1)};

    auto rep = scaling_identity_check(spec, 1.0, 1.0, phis);
    REQUIRE(rep.cases.size() == 4);
    for (const auto& c : rep.cases)
        CHECK(c.abs_diff <= 5e-3 * (1.0 + std::fabs(c.rhs)));

    // the quartic at combined variance 2: E[(sqrt(2) X)^4] = 3 * 4 = 12
    CHECK(rep.cases[1].rhs == Catch::Approx(12.0).epsilon(1e-2));
    CHECK(rep.cases[1].lhs == Catch::Approx(12.0).epsilon(1e-2));
}

TEST_CASE("scaling degenerates to bit identity at b = 0") {
    auto spec = two_point_spec();
    std::vector<FunctionalSpec> phis = {parse_functional("x1^4", 1),
                                        parse_functional("abs(x1)", 1)};
    auto rep = scaling_identity_check(spec, 1.0, 0.0, phis);
    for (const auto& c : rep.cases) {
        CHECK(c.lhs == c.rhs);
        CHECK(c.abs_diff == 0.0);
    }

    REQUIRE_THROWS_AS(scaling_identity_check(spec, 0.0, 0.0, phis), input_error);
    REQUIRE_THROWS_AS(scaling_identity_check(spec, -1.0, 1.0, phis), input_error);
    REQUIRE_THROWS_AS(scaling_identity_check(spec, 1.0, 1.0, {}), input_error);
    auto spec2 = GNormalSpec::create(corr_set());
    REQUIRE_THROWS_AS(scaling_identity_check(spec2, 1.0, 1.0, phis), capability_error);
}

TEST_CASE("flagged payoffs need the explicit override") {
    auto spec = two_point_spec();
    auto expo = parse_functional("exp(x1)", 1);
    REQUIRE_THROWS_AS(one_step_expectation(spec, expo, 1.0), input_error);
    REQUIRE_NOTHROW(one_step_expectation(spec, expo, 1.0, {}, true));
}
