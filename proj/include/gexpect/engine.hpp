#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gexpect/errors.hpp"
#include "gexpect/expr.hpp"
#include "gexpect/gnormal.hpp"
#include "gexpect/sublinear.hpp"

namespace gexpect {

/// phi(B_{t1}, ..., B_{tn}) with 0 < t1 < ... < tn. The payoff is a callable
/// over the n*d coordinates (time-major); when it came from the DSL the parsed
/// source rides along for reports.
struct CylinderFunctional {
    std::vector<double> times;
    std::size_t dim = 1;
    std::function<double(std::span<const double>)> payoff;
    std::optional<FunctionalSpec> source;
    std::string label;

    std::size_t arity() const noexcept { return times.size(); }

    static CylinderFunctional from_spec(std::vector<double> times, FunctionalSpec spec,
                                        bool allow_flagged = false) {
        if (spec.arity != times.size())
            throw input_error("CylinderFunctional: payoff arity " + std::to_string(spec.arity) +
                              " does not match " + std::to_string(times.size()) + " times");
        if (spec.flagged && !allow_flagged)
            throw input_error("CylinderFunctional: payoff '" + spec.source +
                              "' is flagged outside the polynomial growth class; pass "
                              "allow_flagged to override");
        CylinderFunctional f;
        f.times = std::move(times);
        f.dim = spec.dim;
        f.label = spec.source;
        auto s = std::make_shared<FunctionalSpec>(std::move(spec));
        f.payoff = [s](std::span<const double> x) { return evaluate(*s, x); };
        f.source = *s;
        f.validate();
        return f;
    }

    static CylinderFunctional from_callable(std::vector<double> times, std::size_t dim,
                                            std::function<double(std::span<const double>)> fn,
                                            std::string label = "") {
        CylinderFunctional f;
        f.times = std::move(times);
        f.dim = dim;
        f.payoff = std::move(fn);
        f.label = std::move(label);
        f.validate();
        return f;
    }

    void validate() const {
        if (times.empty()) throw input_error("CylinderFunctional: needs at least one time");
        double prev = 0.0;
        for (double t : times) {
            if (!(t > prev) || !std::isfinite(t))
                throw input_error(
                    "CylinderFunctional: times must be strictly increasing and positive");
            prev = t;
        }
        if (dim == 0) throw input_error("CylinderFunctional: dimension must be positive");
        if (!payoff) throw input_error("CylinderFunctional: payoff is empty");
    }
};

struct DpResult {
    double value;
    double error_estimate;
};

namespace detail {

/// Nested backward recursion for d = 1. Earlier coordinates are frozen as
/// grid states; the innermost variable is reduced with the one-step operator
/// over its own increment grid, so payoffs are always evaluated directly and
/// never interpolated across stages.
class CylinderDp1D {
public:
    CylinderDp1D(const GNormalSpec& spec, const CylinderFunctional& f, const DpConfig& cfg,
                 std::size_t substeps)
        : spec_(spec), f_(f), cfg_(cfg) {
        spec_.substeps = substeps;
        const double sb = std::max(spec.cov.sigma_bar(), 1e-8);
        double prev = 0.0;
        for (double t : f.times) {
            half_width_.push_back(cfg.width_sigmas * sb * std::sqrt(t - prev));
            prev = t;
        }
    }

    double run() {
        frozen_.assign(f_.arity(), 0.0);
        return stage_value(0, 0.0);
    }

private:
    // expectation over the increment into time t_k, all earlier values frozen
    double stage_value(std::size_t k, double state) {
        const double dt = f_.times[k] - (k == 0 ? 0.0 : f_.times[k - 1]);
        const double w = half_width_[k];
        ValueFunction1D terminal = ValueFunction1D::uniform(
            -w, w, cfg_.grid_points, [&](double y) {
                frozen_[k] = state + y;
                if (k + 1 == f_.arity()) {
                    const double v = f_.payoff(frozen_);
                    if (!std::isfinite(v))
                        throw evaluation_error("cylinder_expectation: payoff non-finite at a "
                                               "grid state");
                    return v;
                }
                return stage_value(k + 1, frozen_[k]);
            });
        return one_step_expectation(spec_, terminal, dt, false).value;
    }

    GNormalSpec spec_;
    const CylinderFunctional& f_;
    DpConfig cfg_;
    std::vector<double> half_width_;
    std::vector<double> frozen_;
};

inline double cylinder_value_once(const GNormalSpec& spec, const CylinderFunctional& f,
                                  const DpConfig& cfg, std::size_t substeps) {
    if (f.dim == 1) return CylinderDp1D(spec, f, cfg, substeps).run();

    // d = 2 supports a single time via the tensor one-step operator
    const double w = cfg.width_sigmas * std::max(spec.cov.sigma_bar(), 1e-8) *
                     std::sqrt(f.times[0]);
    ValueFunction2D terminal = ValueFunction2D::uniform(
        -w, w, cfg.grid_points_2d, -w, w, cfg.grid_points_2d, [&](double x, double y) {
            const double v = f.payoff(std::vector<double>{x, y});
            if (!std::isfinite(v))
                throw evaluation_error("cylinder_expectation: payoff non-finite at a grid state");
            return v;
        });
    GNormalSpec s = spec;
    s.substeps = substeps;
    return one_step_expectation_2d(s, terminal, f.times[0], false).value;
}

} // namespace detail

/// G-expectation of a cylinder functional by backward dynamic programming.
/// The error estimate is a substep-halving Richardson difference with a fixed
/// floor; it is empirical, not a certified bound.
inline DpResult cylinder_expectation(const GNormalSpec& spec, const CylinderFunctional& f,
                                     const DpConfig& cfg = {}) {
    f.validate();
    if (f.dim != spec.cov.dimension())
        throw input_error("cylinder_expectation: functional dimension " +
                          std::to_string(f.dim) + " does not match covariance set d = " +
                          std::to_string(spec.cov.dimension()));
    if (f.dim > 2)
        throw capability_error("cylinder_expectation: grid DP supports d in {1, 2}; use the "
                               "scenario Monte Carlo path for higher dimensions");
    if (f.dim == 2 && f.arity() > 1)
        throw capability_error("cylinder_expectation: d = 2 supports a single time; use the "
                               "scenario Monte Carlo path for multi-time functionals");

    // cost guard: inner solves grow as grid_points^(n-1)
    {
        double solves = 1.0;
        for (std::size_t k = 1; k < f.arity(); ++k)
            solves *= static_cast<double>(cfg.grid_points);
        const double per_solve =
            spec.quadrature == QuadratureMode::pl_exact
                ? static_cast<double>(cfg.grid_points) * static_cast<double>(cfg.grid_points) *
                      static_cast<double>(spec.substeps) * static_cast<double>(spec.cov.size())
                : static_cast<double>(cfg.grid_points) * static_cast<double>(spec.quad_nodes) *
                      static_cast<double>(spec.substeps) * static_cast<double>(spec.cov.size());
        if (solves * per_solve > 4e9)
            throw capability_error(
                "cylinder_expectation: configuration too expensive (about " +
                std::to_string(solves * per_solve) +
                " kernel operations); reduce grid_points, substeps, or the number of times");
    }

    const double value = detail::cylinder_value_once(spec, f, cfg, spec.substeps);
    double est = 0.0;
    if (cfg.with_error_estimate) {
        const std::size_t half = std::max<std::size_t>(1, spec.substeps / 2);
        const double coarse = detail::cylinder_value_once(spec, f, cfg, half);
        est = 2.0 * std::fabs(value - coarse) + 1e-6 * (1.0 + std::fabs(value));
    }
    return {value, est};
}

/// One simulated path: values are (steps + 1) x d, time-major, starting at 0.
struct PathSample {
    std::vector<double> times;
    std::vector<double> values;
    std::size_t dim = 1;
    std::uint64_t seed = 0;

    double at(std::size_t k, std::size_t j) const { return values[k * dim + j]; }
};

/// Samples Gaussian paths under one volatility scenario. Feedback policies
/// read the current state (d = 1 only); increments are independent across
/// steps. Bit-identical for identical seeds on the same build.
inline std::vector<PathSample> induce_measure(const VolatilityScenario& sc,
                                              const GNormalSpec& spec, std::size_t n_paths,
                                              std::uint64_t seed) {
    sc.validate(spec.cov);
    if (n_paths < 1) throw input_error("induce_measure: n_paths must be >= 1");
    const std::size_t d = spec.cov.dimension();
    if (sc.feedback && d != 1)
        throw capability_error("induce_measure: feedback policies are implemented for d = 1");

    std::vector<SymMatrix> roots;
    roots.reserve(spec.cov.size());
    for (const auto& gamma : spec.cov.matrices()) roots.push_back(gamma.psd_sqrt());

    const std::size_t steps = sc.steps();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<PathSample> out;
    out.reserve(n_paths);
    std::vector<double> z(d);
    for (std::size_t p = 0; p < n_paths; ++p) {
        PathSample ps;
        ps.times = sc.step_times;
        ps.dim = d;
        ps.seed = seed;
        ps.values.assign((steps + 1) * d, 0.0);
        for (std::size_t k = 0; k < steps; ++k) {
            const double sqrt_dt = std::sqrt(sc.step_times[k + 1] - sc.step_times[k]);
            std::size_t gi;
            if (sc.feedback)
                gi = sc.feedback->step_cells[k][sc.feedback->cell_of(ps.values[k * d])];
            else
                gi = sc.gamma_index[k];
            const SymMatrix& r = roots[gi];
            for (std::size_t j = 0; j < d; ++j) z[j] = normal(rng);
            for (std::size_t i = 0; i < d; ++i) {
                double inc = 0.0;
                for (std::size_t j = 0; j < d; ++j) inc += r(i, j) * z[j];
                ps.values[(k + 1) * d + i] = ps.values[k * d + i] + sqrt_dt * inc;
            }
        }
        out.push_back(std::move(ps));
    }
    return out;
}

struct McResult {
    double estimate = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
};

namespace detail {

/// Indices of the cylinder times within the scenario's step grid.
inline std::vector<std::size_t> locate_times(const CylinderFunctional& f,
                                             const VolatilityScenario& sc) {
    std::vector<std::size_t> idx;
    idx.reserve(f.times.size());
    for (double t : f.times) {
        std::size_t best = sc.step_times.size();
        for (std::size_t k = 0; k < sc.step_times.size(); ++k)
            if (std::fabs(sc.step_times[k] - t) <= 1e-9) {
                best = k;
                break;
            }
        if (best == sc.step_times.size())
            throw input_error("scenario does not cover cylinder time t = " + std::to_string(t));
        idx.push_back(best);
    }
    return idx;
}

template <typename PerPath>
McResult mc_over_paths(const VolatilityScenario& sc, const GNormalSpec& spec,
                       std::size_t n_paths, std::uint64_t seed, PerPath&& value_of) {
    if (n_paths < 2) throw input_error("Monte Carlo needs n_paths >= 2");
    auto paths = induce_measure(sc, spec, n_paths, seed);
    double mean = 0.0, m2 = 0.0;
    std::size_t n = 0;
    for (const auto& ps : paths) {
        const double v = value_of(ps);
        ++n;
        const double delta = v - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (v - mean);
    }
    McResult r;
    r.estimate = mean;
    r.std_error = std::sqrt(std::max(0.0, m2 / static_cast<double>(n - 1)) /
                            static_cast<double>(n));
    r.n_paths = n_paths;
    r.seed = seed;
    return r;
}

} // namespace detail

/// Monte Carlo mean of the functional under one scenario measure.
inline McResult scenario_expectation(const CylinderFunctional& f, const VolatilityScenario& sc,
                                     const GNormalSpec& spec, std::size_t n_paths,
                                     std::uint64_t seed) {
    f.validate();
    if (f.dim != spec.cov.dimension())
        throw input_error("scenario_expectation: dimension mismatch");
    const auto idx = detail::locate_times(f, sc);
    std::vector<double> point(f.arity() * f.dim);
    return detail::mc_over_paths(sc, spec, n_paths, seed, [&](const PathSample& ps) {
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < f.dim; ++j)
                point[i * f.dim + j] = ps.at(idx[i], j);
        return f.payoff(point);
    });
}

struct RepresentationGapReport {
    double dp_value = 0.0;
    double dp_error_estimate = 0.0;
    std::vector<McResult> per_scenario;
    std::size_t argmax = 0;
    double max_mc = 0.0;
    double max_mc_std_error = 0.0;
    double gap = 0.0;       // dp_value - max_mc; >= -(3 se + dp tolerance) when the family
                            // is rich enough, ~0 when it attains the sup
    double tolerance = 0.0; // 3 se + dp error estimate
};

/// DP value vs. the best scenario Monte Carlo lower bound. Per-scenario seeds
/// are derived from the base seed, so enlarging the family leaves earlier
/// rows' draws unchanged.
inline RepresentationGapReport representation_gap(const CylinderFunctional& f,
                                                  const ScenarioFamily& family,
                                                  const GNormalSpec& spec, std::size_t n_paths,
                                                  std::uint64_t seed, const DpConfig& cfg = {}) {
    if (family.scenarios.empty()) throw input_error("representation_gap: family is empty");
    RepresentationGapReport rep;
    const DpResult dp = cylinder_expectation(spec, f, cfg);
    rep.dp_value = dp.value;
    rep.dp_error_estimate = dp.error_estimate;
    for (std::size_t s = 0; s < family.scenarios.size(); ++s)
        rep.per_scenario.push_back(scenario_expectation(f, family.scenarios[s], spec, n_paths,
                                                        detail::mix_seed(seed, s)));
    rep.argmax = 0;
    for (std::size_t s = 1; s < rep.per_scenario.size(); ++s)
        if (rep.per_scenario[s].estimate > rep.per_scenario[rep.argmax].estimate) rep.argmax = s;
    rep.max_mc = rep.per_scenario[rep.argmax].estimate;
    rep.max_mc_std_error = rep.per_scenario[rep.argmax].std_error;
    rep.gap = rep.dp_value - rep.max_mc;
    rep.tolerance = 3.0 * rep.max_mc_std_error + rep.dp_error_estimate;
    return rep;
}

struct MomentCheckReport {
    double dp_value = 0.0;
    double dp_error_estimate = 0.0;
    double analytic = 0.0;
    double rel_error = 0.0;
};

/// E|<a, B_t - B_s>|^p against the scaled one-step moment, through the full
/// two-time cylinder recursion when s > 0 so stationarity is tested, not
/// assumed.
inline MomentCheckReport increment_moment_check(const GNormalSpec& spec, double s, double t,
                                                const std::vector<double>& a, double p,
                                                const DpConfig& cfg = {}) {
    if (!(s >= 0.0) || !(t > s)) throw input_error("increment_moment_check: need 0 <= s < t");
    const double analytic = abs_moment(spec, a, p) * std::pow(t - s, 0.5 * p);

    const std::size_t d = spec.cov.dimension();
    if (a.size() != d) throw input_error("increment_moment_check: direction dimension mismatch");
    CylinderFunctional f =
        s == 0.0 ? CylinderFunctional::from_callable(
                       {t}, d,
                       [a, p, d](std::span<const double> x) {
                           double dot = 0.0;
                           for (std::size_t j = 0; j < d; ++j) dot += a[j] * x[j];
                           return std::pow(std::fabs(dot), p);
                       },
                       "|<a, B_t>|^p")
                 : CylinderFunctional::from_callable(
                       {s, t}, d,
                       [a, p, d](std::span<const double> x) {
                           double dot = 0.0;
                           for (std::size_t j = 0; j < d; ++j) dot += a[j] * (x[d + j] - x[j]);
                           return std::pow(std::fabs(dot), p);
                       },
                       "|<a, B_t - B_s>|^p");
    const DpResult dp = cylinder_expectation(spec, f, cfg);

    MomentCheckReport rep;
    rep.dp_value = dp.value;
    rep.dp_error_estimate = dp.error_estimate;
    rep.analytic = analytic;
    rep.rel_error = std::fabs(dp.value - analytic) / std::max(1.0, std::fabs(analytic));
    return rep;
}

struct ScenarioProbability {
    double p_hat = 0.0;
    double std_error = 0.0;
};

struct CapacityReport {
    double value = 0.0;
    std::size_t argmax = 0;
    std::vector<ScenarioProbability> per_scenario;
    std::size_t n_paths = 0;
};

/// Capacity = sup over the family of event probabilities, Monte Carlo per
/// scenario with binomial standard errors.
inline CapacityReport capacity_estimate(const std::function<bool(const PathSample&)>& event,
                                        const ScenarioFamily& family, const GNormalSpec& spec,
                                        std::size_t n_paths, std::uint64_t seed) {
    if (!event) throw input_error("capacity_estimate: event is empty");
    if (family.scenarios.empty()) throw input_error("capacity_estimate: family is empty");
    CapacityReport rep;
    rep.n_paths = n_paths;
    for (std::size_t s = 0; s < family.scenarios.size(); ++s) {
        auto paths = induce_measure(family.scenarios[s], spec, n_paths,
                                    detail::mix_seed(seed, s));
        std::size_t hits = 0;
        for (const auto& ps : paths)
            if (event(ps)) ++hits;
        const double p_hat = static_cast<double>(hits) / static_cast<double>(n_paths);
        rep.per_scenario.push_back(
            {p_hat, std::sqrt(p_hat * (1.0 - p_hat) / static_cast<double>(n_paths))});
    }
    rep.argmax = 0;
    for (std::size_t s = 1; s < rep.per_scenario.size(); ++s)
        if (rep.per_scenario[s].p_hat > rep.per_scenario[rep.argmax].p_hat) rep.argmax = s;
    rep.value = rep.per_scenario[rep.argmax].p_hat;
    return rep;
}

struct LpNormResult {
    double value = 0.0;       // norm for p >= 1, distance E[|X|^p] for p < 1
    bool is_distance = false; // true iff p < 1
    double raw_sup = 0.0;     // sup over the family of E[|phi|^p]
    double std_error = 0.0;   // on the reported value (delta method for p >= 1)
    std::size_t argmax = 0;
};

/// (sup over the family of E[|phi|^p])^{1/p} for p >= 1; for p < 1 the raw
/// upper expectation is a metric distance, not a norm, and is reported as is.
inline LpNormResult lp_norm(const CylinderFunctional& f, const ScenarioFamily& family,
                            const GNormalSpec& spec, double p, std::size_t n_paths,
                            std::uint64_t seed) {
    if (!(p > 0.0) || !std::isfinite(p)) throw input_error("lp_norm: p must be positive");
    if (family.scenarios.empty()) throw input_error("lp_norm: family is empty");
    f.validate();

    std::vector<McResult> rows;
    for (std::size_t s = 0; s < family.scenarios.size(); ++s) {
        const auto idx = detail::locate_times(f, family.scenarios[s]);
        std::vector<double> point(f.arity() * f.dim);
        rows.push_back(detail::mc_over_paths(
            family.scenarios[s], spec, n_paths, detail::mix_seed(seed, s),
            [&](const PathSample& ps) {
                for (std::size_t i = 0; i < idx.size(); ++i)
                    for (std::size_t j = 0; j < f.dim; ++j)
                        point[i * f.dim + j] = ps.at(idx[i], j);
                return std::pow(std::fabs(f.payoff(point)), p);
            }));
    }
    LpNormResult r;
    for (std::size_t s = 1; s < rows.size(); ++s)
        if (rows[s].estimate > rows[r.argmax].estimate) r.argmax = s;
    r.raw_sup = rows[r.argmax].estimate;
    const double se = rows[r.argmax].std_error;
    if (p < 1.0) {
        r.is_distance = true;
        r.value = r.raw_sup;
        r.std_error = se;
    } else {
        r.value = std::pow(r.raw_sup, 1.0 / p);
        r.std_error = r.raw_sup > 0.0 ? se * r.value / (p * r.raw_sup) : se;
    }
    return r;
}

struct MonotoneReport {
    std::vector<double> values;
    std::vector<double> error_estimates;
    bool non_increasing = false;
    double final_value = 0.0;
    double threshold = 0.0;
    bool reached_threshold = false;
};

/// E[phi_n] along a pointwise non-increasing payoff sequence. Monotonicity of
/// the inputs is validated by sampling; the outputs then inherit it from the
/// scheme's monotonicity. With no sequence supplied, runs the built-in
/// phi_n(x) = min(|x|, 1)/n for n = 1..8.
inline MonotoneReport monotone_convergence_demo(std::vector<FunctionalSpec> phis,
                                                const std::vector<double>& times,
                                                const GNormalSpec& spec, double threshold,
                                                const DpConfig& cfg = {}) {
    if (times.empty()) throw input_error("monotone_convergence_demo: times must be nonempty");
    if (phis.empty()) {
        if (times.size() != 1 || spec.cov.dimension() != 1)
            throw input_error("monotone_convergence_demo: the built-in sequence is 1-d, "
                              "single-time");
        for (int n = 1; n <= 8; ++n)
            phis.push_back(parse_functional("min(abs(x1), 1)/" + std::to_string(n), 1, 1));
    }
    const std::size_t d = spec.cov.dimension();
    for (const auto& phi : phis)
        if (phi.arity != times.size() || phi.dim != d)
            throw input_error("monotone_convergence_demo: payoff '" + phi.source +
                              "' does not match the time grid / dimension");

    // sampled pointwise monotonicity check on states the DP will visit
    {
        std::mt19937_64 rng(2027);
        const double sb = std::max(spec.cov.sigma_bar(), 1e-8);
        std::uniform_real_distribution<double> unit(-1.0, 1.0);
        std::vector<double> x(times.size() * d);
        for (int s = 0; s < 512; ++s) {
            for (std::size_t i = 0; i < times.size(); ++i)
                for (std::size_t j = 0; j < d; ++j)
                    x[i * d + j] = cfg.width_sigmas * sb * std::sqrt(times[i]) * unit(rng);
            double prev = evaluate(phis[0], x);
            for (std::size_t k = 1; k < phis.size(); ++k) {
                const double cur = evaluate(phis[k], x);
                if (cur > prev + 1e-12)
                    throw input_error("monotone_convergence_demo: sequence is not pointwise "
                                      "non-increasing (violated between terms " +
                                      std::to_string(k - 1) + " and " + std::to_string(k) + ")");
                prev = cur;
            }
        }
    }

    MonotoneReport rep;
    rep.threshold = threshold;
    for (auto& phi : phis) {
        CylinderFunctional f = CylinderFunctional::from_spec(times, phi);
        const DpResult r = cylinder_expectation(spec, f, cfg);
        rep.values.push_back(r.value);
        rep.error_estimates.push_back(r.error_estimate);
    }
    rep.non_increasing = true;
    for (std::size_t k = 1; k < rep.values.size(); ++k)
        if (rep.values[k] > rep.values[k - 1] + 1e-12) rep.non_increasing = false;
    rep.final_value = rep.values.back();
    rep.reached_threshold = rep.final_value <= threshold;
    return rep;
}

namespace detail {

/// A random linear combination of tame 1-d basis terms, used to probe the
/// expectation axioms on functionals the DP has no special handling for.
struct RandomPayoff {
    struct Term {
        int kind;
        std::size_t a, b;
        double c, k;
    };
    std::vector<Term> terms;

    double eval(std::span<const double> x) const {
        double v = 0.0;
        for (const auto& t : terms) {
            const double u = x[t.a];
            switch (t.kind) {
                case 0: v += t.c * u; break;
                case 1: v += t.c * std::fabs(u - t.k); break;
                case 2: v += t.c * u * u; break;
                case 3: v += t.c * std::max(u - t.k, 0.0); break;
                default: v += t.c * (u - x[t.b]); break;
            }
        }
        return v;
    }
};

inline RandomPayoff random_payoff(std::mt19937_64& rng, std::size_t arity) {
    std::uniform_int_distribution<int> kind(0, 4);
    std::uniform_int_distribution<std::size_t> coord(0, arity - 1);
    std::uniform_real_distribution<double> coeff(-2.0, 2.0);
    std::uniform_real_distribution<double> shift(-1.0, 1.0);
    std::uniform_int_distribution<int> nterms(2, 4);
    RandomPayoff p;
    const int n = nterms(rng);
    for (int i = 0; i < n; ++i)
        p.terms.push_back({kind(rng), coord(rng), coord(rng), coeff(rng), shift(rng)});
    return p;
}

} // namespace detail

struct ExpectationAxiomReport {
    std::size_t pairs_checked = 0;
    double max_monotonicity_violation = 0.0;  // X <= Y pointwise: max(0, E[X] - E[Y])
    double max_constant_violation = 0.0;      // |E[X + c] - (E[X] + c)| and |E[c] - c|
    double max_subadditivity_violation = 0.0; // max(0, E[X+Y] - E[X] - E[Y])
    double max_homogeneity_violation = 0.0;   // |E[lam X] - lam E[X]|, lam >= 0
};

/// Probes the four defining axioms of the upper expectation on random
/// cylinder-functional pairs sharing a time grid. The backward recursion is
/// built from operations that preserve each axiom (weights summing to one,
/// order-preserving interpolation, exact maxima), so violations beyond
/// floating-point noise indicate a solver defect.
inline ExpectationAxiomReport expectation_axiom_check(const GNormalSpec& spec, std::size_t pairs,
                                                      std::uint64_t seed,
                                                      const DpConfig& cfg = {}) {
    if (spec.cov.dimension() != 1)
        throw capability_error("expectation_axiom_check is implemented for d = 1");
    if (pairs == 0) throw input_error("expectation_axiom_check: pairs must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> ntimes(1, 2);
    std::uniform_real_distribution<double> tdist(0.1, 2.0);

    auto dp = [&](const std::vector<double>& times,
                  std::function<double(std::span<const double>)> f) {
        return cylinder_expectation(spec, CylinderFunctional::from_callable(times, 1, std::move(f)),
                                    cfg)
            .value;
    };

    ExpectationAxiomReport rep;
    for (std::size_t i = 0; i < pairs; ++i) {
        std::vector<double> times;
        if (ntimes(rng) == 1) {
            times = {tdist(rng)};
        } else {
            double t1 = tdist(rng), t2 = tdist(rng);
            if (t1 > t2) std::swap(t1, t2);
            if (t2 - t1 < 0.05) t2 = t1 + 0.05;
            times = {t1, t2};
        }
        const auto px = detail::random_payoff(rng, times.size());
        const auto ph = detail::random_payoff(rng, times.size());

        const double ex = dp(times, [px](std::span<const double> x) { return px.eval(x); });
        const double eh = dp(times, [ph](std::span<const double> x) { return ph.eval(x); });
        const double exh = dp(
            times, [px, ph](std::span<const double> x) { return px.eval(x) + ph.eval(x); });
        rep.max_subadditivity_violation =
            std::max(rep.max_subadditivity_violation, exh - ex - eh);

        for (double lam : {0.0, 0.5, 2.0, 3.75}) {
            const double el =
                dp(times, [px, lam](std::span<const double> x) { return lam * px.eval(x); });
            rep.max_homogeneity_violation =
                std::max(rep.max_homogeneity_violation, std::fabs(el - lam * ex));
        }

        for (double c : {-1.0, 2.5}) {
            const double ec =
                dp(times, [px, c](std::span<const double> x) { return px.eval(x) + c; });
            rep.max_constant_violation =
                std::max(rep.max_constant_violation, std::fabs(ec - (ex + c)));
        }
        const double c0 = -0.75;
        const double ecst = dp(times, [c0](std::span<const double>) { return c0; });
        rep.max_constant_violation = std::max(rep.max_constant_violation, std::fabs(ecst - c0));

        // Y = X + |H| dominates X pointwise
        const double ey = dp(times, [px, ph](std::span<const double> x) {
            return px.eval(x) + std::fabs(ph.eval(x));
        });
        rep.max_monotonicity_violation = std::max(rep.max_monotonicity_violation, ex - ey);

        ++rep.pairs_checked;
    }
    rep.max_subadditivity_violation = std::max(0.0, rep.max_subadditivity_violation);
    rep.max_monotonicity_violation = std::max(0.0, rep.max_monotonicity_violation);
    return rep;
}

} // namespace gexpect
