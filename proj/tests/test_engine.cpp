#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "gexpect/engine.hpp"
#include "oracle.hpp"

using namespace gexpect;

namespace {

GNormalSpec two_point_spec() {
    return GNormalSpec::create(CovarianceSet::scalar({0.25, 1.0}));
}

GNormalSpec fast_spec() {
    return GNormalSpec::create(CovarianceSet::scalar({0.25, 1.0}), 2, 11);
}

DpConfig fast_cfg() { return {201, 6.0, 201, false}; }

VolatilityScenario constant_scenario(double horizon, std::size_t gamma) {
    VolatilityScenario sc;
    sc.step_times = {0.0, horizon};
    sc.gamma_index = {gamma};
    return sc;
}

} // namespace

TEST_CASE("cylinder functional construction guards") {
    auto quad = parse_functional("x1^4", 1);
    REQUIRE_THROWS_AS(CylinderFunctional::from_spec({1.0, 2.0}, quad), input_error);
    REQUIRE_THROWS_AS(CylinderFunctional::from_spec({-1.0}, quad), input_error);
    REQUIRE_THROWS_AS(CylinderFunctional::from_spec({1.0, 1.0}, parse_functional("x1 + x2", 2)),
                      input_error);
    REQUIRE_THROWS_AS(CylinderFunctional::from_spec({1.0}, parse_functional("exp(x1)", 1)),
                      input_error);
    REQUIRE_NOTHROW(CylinderFunctional::from_spec({1.0}, parse_functional("exp(x1)", 1), true));

    auto f = CylinderFunctional::from_spec({1.0}, quad);
    CHECK(f.arity() == 1);
    CHECK(f.label == "x1^4");
    std::vector<double> pt = {2.0};
    CHECK(f.payoff(pt) == 16.0);
}

TEST_CASE("single-time expectations match the closed forms") {
    auto spec = two_point_spec();

    auto quartic = cylinder_expectation(
        spec, CylinderFunctional::from_spec({1.0}, parse_functional("x1^4", 1)));
    CHECK(std::fabs(quartic.value - 3.0) <= 1e-3 * 3.0);
    CHECK(std::fabs(quartic.value - 3.0) <= quartic.error_estimate);

    auto concave = cylinder_expectation(
        spec, CylinderFunctional::from_spec({1.0}, parse_functional("-x1^2", 1)));
    CHECK(std::fabs(concave.value - (-0.25)) <= 1e-3 * 0.25);
}

TEST_CASE("two-time increment payoff sees stationary variance") {
    auto spec = two_point_spec();
    auto f = CylinderFunctional::from_spec({1.0, 2.0}, parse_functional("(x2 - x1)^2", 2));
    auto r = cylinder_expectation(spec, f);
    CHECK(std::fabs(r.value - 1.0) <= 2e-3);
}

TEST_CASE("capability boundaries are explicit") {
    auto spec1 = two_point_spec();
    SymMatrix rho(2);
    rho.set(0, 0, 1.0);
    rho.set(1, 1, 1.0);
    rho.set(0, 1, 0.5);
    auto cov2 = CovarianceSet::create({SymMatrix::identity(2) * 0.25, rho});
    auto spec2 = GNormalSpec::create(cov2, 4, 11);

    auto one_time_2d = CylinderFunctional::from_spec(
        {1.0}, parse_functional("(x1_1 + x1_2)^2", 1, 2));
    auto r = cylinder_expectation(spec2, one_time_2d);
    CHECK(r.value == Catch::Approx(3.0).epsilon(5e-3)); // worst covariance is the correlated one

    auto two_time_2d = CylinderFunctional::from_spec(
        {1.0, 2.0}, parse_functional("x1_1 + x2_2", 2, 2));
    REQUIRE_THROWS_AS(cylinder_expectation(spec2, two_time_2d), capability_error);

    auto cov3 = CovarianceSet::create({SymMatrix::identity(3)});
    auto spec3 = GNormalSpec::create(cov3);
    auto f3 = CylinderFunctional::from_callable(
        {1.0}, 3, [](std::span<const double> x) { return x[0]; }, "x");
    REQUIRE_THROWS_AS(cylinder_expectation(spec3, f3), capability_error);

    // dimension mismatch is an input problem, not a capability one
    auto f2 = CylinderFunctional::from_spec({1.0}, parse_functional("x1_1", 1, 2));
    REQUIRE_THROWS_AS(cylinder_expectation(spec1, f2), input_error);

    // cost guard: a five-time functional at full grid resolution is refused
    auto wide = CylinderFunctional::from_callable(
        {1.0, 2.0, 3.0, 4.0, 5.0}, 1, [](std::span<const double>) { return 0.0; }, "0");
    REQUIRE_THROWS_AS(cylinder_expectation(spec1, wide), capability_error);
}

TEST_CASE("increment moments are stationary through the two-time recursion") {
    auto spec = two_point_spec();
    std::vector<double> a = {1.0};

    auto r1 = increment_moment_check(spec, 0.0, 1.0, a, 4.0);
    CHECK(r1.analytic == Catch::Approx(3.0).epsilon(1e-12));
    CHECK(r1.rel_error <= 1e-3);

    auto r2 = increment_moment_check(spec, 0.0, 2.0, a, 4.0);
    CHECK(r2.analytic == Catch::Approx(12.0).epsilon(1e-12));
    CHECK(r2.rel_error <= 1e-3);

    auto r3 = increment_moment_check(spec, 1.0, 1.5, a, 2.0, fast_cfg());
    CHECK(r3.analytic == Catch::Approx(0.5).epsilon(1e-12));
    CHECK(r3.rel_error <= 2e-3);

    REQUIRE_THROWS_AS(increment_moment_check(spec, 2.0, 1.0, a, 2.0), input_error);
    REQUIRE_THROWS_AS(increment_moment_check(spec, 0.0, 1.0, {1.0, 1.0}, 2.0), input_error);
}

TEST_CASE("path sampling is seeded and matches gaussian moments") {
    auto spec = two_point_spec();
    auto sc = constant_scenario(1.0, 1); // gamma = 1

    auto paths = induce_measure(sc, spec, 20000, 42);
    REQUIRE(paths.size() == 20000);
    REQUIRE(paths[0].times.size() == 2);
    CHECK(paths[0].values[0] == 0.0);

    double mean = 0.0, m2 = 0.0;
    for (const auto& p : paths) {
        const double x = p.at(1, 0);
        mean += x;
        m2 += x * x;
    }
    mean /= 20000.0;
    m2 /= 20000.0;
    const double se = 3.0 / std::sqrt(20000.0);
    CHECK(std::fabs(mean) <= se);
    CHECK(std::fabs(m2 - 1.0) <= 3.0 * se); // var(X^2) = 2 for unit gaussian

    // bitwise determinism in the seed
    auto again = induce_measure(sc, spec, 100, 42);
    auto other = induce_measure(sc, spec, 100, 43);
    bool identical = true, differs = false;
    for (std::size_t i = 0; i < 100; ++i) {
        if (again[i].values != paths[i].values) identical = false;
        if (other[i].values != paths[i].values) differs = true;
    }
    CHECK(identical);
    CHECK(differs);
}

TEST_CASE("feedback policies react to the running state") {
    auto spec = two_point_spec();
    VolatilityScenario sc;
    sc.step_times = {0.0, 0.5, 1.0};
    FeedbackPolicy pol;
    pol.cell_edges = {0.0};
    pol.step_cells = {{0, 0}, {0, 1}}; // second step: high vol only above 0
    sc.feedback = pol;

    auto paths = induce_measure(sc, spec, 4000, 9);
    // conditional second-step variance: 0.5 * 0.25 below zero, 0.5 above
    double lo = 0.0, hi = 0.0;
    std::size_t nlo = 0, nhi = 0;
    for (const auto& p : paths) {
        const double x1 = p.at(1, 0);
        const double inc = p.at(2, 0) - x1;
        if (x1 < 0.0) {
            lo += inc * inc;
            ++nlo;
        } else {
            hi += inc * inc;
            ++nhi;
        }
    }
    REQUIRE(nlo > 100);
    REQUIRE(nhi > 100);
    CHECK(lo / static_cast<double>(nlo) == Catch::Approx(0.125).epsilon(0.15));
    CHECK(hi / static_cast<double>(nhi) == Catch::Approx(0.5).epsilon(0.15));

    // a valid 2-d scenario still cannot carry a feedback policy
    SymMatrix low = SymMatrix::identity(2), high = SymMatrix::identity(2);
    low.set(0, 0, 0.25);
    low.set(1, 1, 0.25);
    auto spec2 = GNormalSpec::create(CovarianceSet::create({low, high}));
    VolatilityScenario sc2 = sc;
    REQUIRE_THROWS_AS(induce_measure(sc2, spec2, 10, 0), capability_error);
}

TEST_CASE("scenario expectation reproduces single-measure moments") {
    auto spec = two_point_spec();
    auto f = CylinderFunctional::from_spec({1.0}, parse_functional("x1^2", 1));

    auto high = scenario_expectation(f, constant_scenario(1.0, 1), spec, 20000, 7);
    CHECK(std::fabs(high.estimate - 1.0) <= 3.0 * high.std_error);

    auto low = scenario_expectation(f, constant_scenario(1.0, 0), spec, 20000, 7);
    CHECK(std::fabs(low.estimate - 0.25) <= 3.0 * low.std_error);

    // same seed, same estimate, bit for bit
    auto rerun = scenario_expectation(f, constant_scenario(1.0, 1), spec, 20000, 7);
    CHECK(rerun.estimate == high.estimate);
    CHECK(rerun.std_error == high.std_error);

    auto sc = constant_scenario(0.5, 1); // does not cover t = 1
    REQUIRE_THROWS_AS(scenario_expectation(f, sc, spec, 100, 0), input_error);
    REQUIRE_THROWS_AS(scenario_expectation(f, constant_scenario(1.0, 1), spec, 1, 0),
                      input_error);
}

TEST_CASE("representation gap closes over the constant family") {
    auto spec = two_point_spec();
    auto f = CylinderFunctional::from_spec({1.0}, parse_functional("x1^4", 1));
    auto fam = constant_family(spec.cov, f.times);

    auto rep = representation_gap(f, fam, spec, 20000, 3);
    CHECK(rep.per_scenario.size() == 2);
    CHECK(rep.argmax == 1); // convex payoff: max variance attains the sup
    CHECK(rep.dp_value == Catch::Approx(3.0).epsilon(2e-3));
    // DP dominates every scenario up to MC noise, and the best one attains it
    CHECK(rep.gap >= -rep.tolerance);
    CHECK(rep.gap <= 5.0 * rep.max_mc_std_error + 1e-3);
}

TEST_CASE("representation gap exposes a deliberately poor family") {
    auto spec = GNormalSpec::create(CovarianceSet::scalar({0.0, 1.0}));
    auto f = CylinderFunctional::from_spec({1.0}, parse_functional("x1^2", 1));
    ScenarioFamily degenerate;
    degenerate.label = "zero-only";
    degenerate.scenarios = {constant_scenario(1.0, 0)};

    auto rep = representation_gap(f, degenerate, spec, 5000, 1);
    CHECK(rep.max_mc == 0.0); // zero variance: every path is frozen at 0
    CHECK(rep.gap == Catch::Approx(rep.dp_value).margin(1e-12));
    CHECK(rep.dp_value == Catch::Approx(1.0).epsilon(2e-3));
}

TEST_CASE("capacity of a tail event is attained at the widest scenario") {
    auto spec = two_point_spec();
    auto fam = constant_family(spec.cov, std::vector<double>{1.0});

    auto event = [](const PathSample& p) { return std::fabs(p.values.back()) > 2.0; };
    auto rep = capacity_estimate(event, fam, spec, 40000, 11);
    CHECK(rep.argmax == 1);
    const double want = 2.0 * oracle::normal_cdf(-2.0);
    CHECK(std::fabs(rep.value - want) <=
          4.0 * rep.per_scenario[1].std_error + 1e-4);
    // the narrow scenario sees a 4-sigma event instead
    CHECK(rep.per_scenario[0].p_hat < rep.per_scenario[1].p_hat);

    REQUIRE_THROWS_AS(capacity_estimate({}, fam, spec, 100, 0), input_error);
}

TEST_CASE("lp norms scale like the worst-case sigma") {
    auto spec = two_point_spec();
    auto fam = constant_family(spec.cov, std::vector<double>{1.0});
    auto f = CylinderFunctional::from_spec({1.0}, parse_functional("x1", 1));

    auto n2 = lp_norm(f, fam, spec, 2.0, 20000, 5);
    CHECK_FALSE(n2.is_distance);
    CHECK(std::fabs(n2.value - 1.0) <= 3.0 * n2.std_error + 1e-3);
    CHECK(n2.argmax == 1);

    auto d_half = lp_norm(f, fam, spec, 0.5, 5000, 5);
    CHECK(d_half.is_distance);
    CHECK(d_half.value == d_half.raw_sup);

    // triangle inequality across independent functionals, within error bars
    auto g = CylinderFunctional::from_spec({1.0}, parse_functional("abs(x1) - 1", 1));
    auto sum = CylinderFunctional::from_spec({1.0}, parse_functional("x1 + abs(x1) - 1", 1));
    auto nf = lp_norm(f, fam, spec, 2.0, 20000, 5);
    auto ng = lp_norm(g, fam, spec, 2.0, 20000, 5);
    auto ns = lp_norm(sum, fam, spec, 2.0, 20000, 5);
    CHECK(ns.value <= nf.value + ng.value + 3.0 * (nf.std_error + ng.std_error + ns.std_error));

    REQUIRE_THROWS_AS(lp_norm(f, fam, spec, 0.0, 100, 0), input_error);
}

TEST_CASE("monotone payoff sequences produce monotone expectations") {
    // pl_exact handles the kink in |x| without quadrature error
    auto spec = GNormalSpec::create(CovarianceSet::scalar({0.25, 1.0}), 1, 21,
                                    QuadratureMode::pl_exact);
    DpConfig cfg = {1601, 6.0, 201, false};

    std::vector<FunctionalSpec> phis;
    for (int n = 1; n <= 6; ++n)
        phis.push_back(parse_functional("abs(x1)/" + std::to_string(n), 1));
    auto rep = monotone_convergence_demo(phis, {1.0}, spec, 0.2, cfg);
    REQUIRE(rep.values.size() == 6);
    CHECK(rep.non_increasing);
    for (std::size_t i = 1; i < rep.values.size(); ++i)
        CHECK(rep.values[i] < rep.values[i - 1]);
    const double c = std::sqrt(2.0 / std::numbers::pi);
    for (std::size_t i = 0; i < rep.values.size(); ++i)
        CHECK(std::fabs(rep.values[i] - c / static_cast<double>(i + 1)) <= 1e-6);
    CHECK(rep.reached_threshold);
    CHECK(rep.final_value <= 0.2);

    // built-in sequence when none is supplied
    auto fast = fast_spec();
    auto built_in = monotone_convergence_demo({}, {1.0}, fast, 0.05, fast_cfg());
    CHECK(built_in.values.size() >= 2);
    CHECK(built_in.non_increasing);

    // a non-monotone sequence is rejected up front
    std::vector<FunctionalSpec> bad = {parse_functional("abs(x1)", 1),
                                       parse_functional("2*abs(x1)", 1)};
    REQUIRE_THROWS_AS(monotone_convergence_demo(bad, {1.0}, fast, 0.0, fast_cfg()),
                      input_error);
}

TEST_CASE("expectation axioms hold across random functional pairs") {
    auto spec = fast_spec();
    auto rep = expectation_axiom_check(spec, 10, 2024, fast_cfg());
    CHECK(rep.pairs_checked == 10);
    CHECK(rep.max_monotonicity_violation <= 1e-8);
    CHECK(rep.max_constant_violation <= 1e-8);
    CHECK(rep.max_subadditivity_violation <= 1e-8);
    CHECK(rep.max_homogeneity_violation <= 1e-8);

    SymMatrix rho(2);
    rho.set(0, 0, 1.0);
    rho.set(1, 1, 1.0);
    auto spec2 = GNormalSpec::create(CovarianceSet::create({rho}));
    REQUIRE_THROWS_AS(expectation_axiom_check(spec2, 5, 0, fast_cfg()), capability_error);
    REQUIRE_THROWS_AS(expectation_axiom_check(spec, 0, 0, fast_cfg()), input_error);
}
