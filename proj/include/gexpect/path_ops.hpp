#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gexpect/engine.hpp"
#include "gexpect/errors.hpp"

namespace gexpect {

/// A path started at 0 on a uniform grid over [0, T], extended beyond T by
/// constant continuation. values are node-major ((m+1) x d).
struct DiscretePath {
    double horizon = 0.0;
    std::size_t dim = 1;
    std::vector<double> times;
    std::vector<double> values;

    static DiscretePath create(std::vector<double> times, std::vector<double> values,
                               std::size_t dim) {
        if (dim == 0) throw input_error("DiscretePath: dimension must be positive");
        if (times.size() < 2) throw input_error("DiscretePath: need at least 2 nodes");
        if (values.size() != times.size() * dim)
            throw input_error("DiscretePath: values size mismatch");
        if (std::fabs(times.front()) > 1e-12)
            throw input_error("DiscretePath: grid must start at 0");
        const double h = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
        if (!(h > 0.0)) throw input_error("DiscretePath: grid must be increasing");
        for (std::size_t k = 1; k < times.size(); ++k)
            if (std::fabs(times[k] - times[k - 1] - h) > 1e-12 * std::max(1.0, h))
                throw input_error("DiscretePath: grid must be uniform");
        for (std::size_t j = 0; j < dim; ++j)
            if (values[j] != 0.0) throw input_error("DiscretePath: values at time 0 must be 0");
        for (double v : values)
            if (!std::isfinite(v)) throw input_error("DiscretePath: non-finite value");
        DiscretePath p;
        p.horizon = times.back();
        p.dim = dim;
        p.times = std::move(times);
        p.values = std::move(values);
        return p;
    }

    static DiscretePath from_sample(const PathSample& ps) {
        return create(ps.times, ps.values, ps.dim);
    }

    std::size_t nodes() const noexcept { return times.size(); }
    double node(std::size_t k, std::size_t j) const { return values[k * dim + j]; }

    /// Piecewise-linear value at t, constant beyond the horizon.
    void value_at(double t, std::span<double> out) const {
        if (t <= 0.0) {
            for (std::size_t j = 0; j < dim; ++j) out[j] = values[j];
            return;
        }
        if (t >= horizon) {
            const std::size_t last = (times.size() - 1) * dim;
            for (std::size_t j = 0; j < dim; ++j) out[j] = values[last + j];
            return;
        }
        const double h = times[1] - times[0];
        std::size_t k = static_cast<std::size_t>(t / h);
        if (k >= times.size() - 1) k = times.size() - 2;
        const double w = (t - times[k]) / (times[k + 1] - times[k]);
        for (std::size_t j = 0; j < dim; ++j)
            out[j] = values[k * dim + j] + w * (values[(k + 1) * dim + j] - values[k * dim + j]);
    }

    double value_at1(double t) const {
        double v;
        value_at(t, std::span<double>(&v, 1));
        return v;
    }
};

/// A bounded functional on paths. The bound M is the caller's assertion;
/// operators that rely on it re-check every evaluation they make.
struct PathFunctional {
    std::string name;
    double bound = 0.0;
    std::function<double(const DiscretePath&)> eval;

    double operator()(const DiscretePath& p) const {
        const double v = eval(p);
        if (!std::isfinite(v))
            throw evaluation_error("PathFunctional '" + name + "': non-finite value");
        if (std::fabs(v) > bound * (1.0 + 1e-12))
            throw input_error("PathFunctional '" + name + "': |value| = " + std::to_string(v) +
                              " exceeds the declared bound " + std::to_string(bound));
        return v;
    }

    void validate() const {
        if (!eval) throw input_error("PathFunctional: evaluator is empty");
        if (!(bound > 0.0)) throw input_error("PathFunctional: bound must be positive");
    }
};

namespace detail {

/// sup over [0, cutoff] of the Euclidean distance between two paths on the
/// same grid; the difference is piecewise linear, so nodes (plus the cutoff
/// point) attain the sup. cutoff beyond both horizons reduces to all nodes.
inline double windowed_sup_distance(const DiscretePath& a, const DiscretePath& b,
                                    double cutoff) {
    if (a.dim != b.dim) throw input_error("sup_norm: dimension mismatch");
    if (a.times.size() != b.times.size() || std::fabs(a.horizon - b.horizon) > 1e-12)
        throw input_error("sup_norm: paths live on different grids");
    double worst = 0.0;
    const std::size_t d = a.dim;
    for (std::size_t k = 0; k < a.times.size(); ++k) {
        if (a.times[k] > cutoff) break;
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = a.values[k * d + j] - b.values[k * d + j];
            s += diff * diff;
        }
        worst = std::max(worst, s);
    }
    worst = std::sqrt(worst);
    if (cutoff < a.horizon) {
        // interpolated point at the cutoff itself
        std::vector<double> va(d), vb(d);
        a.value_at(cutoff, va);
        b.value_at(cutoff, vb);
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += (va[j] - vb[j]) * (va[j] - vb[j]);
        worst = std::max(worst, std::sqrt(s));
    }
    return worst;
}

} // namespace detail

/// max over [0, T] of the Euclidean node distance (the paths are piecewise
/// linear, so the sup is attained at nodes). Same grid required.
inline double sup_norm(const DiscretePath& a, const DiscretePath& b) {
    return detail::windowed_sup_distance(a, b, std::max(a.horizon, b.horizon));
}

struct RhoResult {
    double value = 0.0;
    double tail_bound = 0.0;
    std::size_t terms = 0;
};

/// Partial sum of the path-space metric sum_i 2^{-i} (sup_{[0,i]} |w1 - w2| ∧ 1),
/// with both paths continued as constants beyond their horizons. The reported
/// tail bound 2^{-i_max} dominates everything not summed.
inline RhoResult rho_distance(const DiscretePath& a, const DiscretePath& b,
                              std::size_t i_max = 16) {
    if (a.dim != b.dim) throw input_error("rho_distance: dimension mismatch");
    if (i_max < 1) throw input_error("rho_distance: i_max must be >= 1");
    const std::size_t d = a.dim;

    // merged node times: the difference is piecewise linear between them
    std::vector<double> knots;
    knots.reserve(a.times.size() + b.times.size());
    knots.insert(knots.end(), a.times.begin(), a.times.end());
    knots.insert(knots.end(), b.times.begin(), b.times.end());
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

    std::vector<double> va(d), vb(d);
    auto dist_at = [&](double t) {
        a.value_at(t, va);
        b.value_at(t, vb);
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += (va[j] - vb[j]) * (va[j] - vb[j]);
        return std::sqrt(s);
    };

    RhoResult r;
    r.terms = i_max;
    r.tail_bound = std::pow(2.0, -static_cast<double>(i_max));
    double running_sup = 0.0;
    std::size_t knot = 0;
    for (std::size_t i = 1; i <= i_max; ++i) {
        const double horizon_i = static_cast<double>(i);
        while (knot < knots.size() && knots[knot] <= horizon_i)
            running_sup = std::max(running_sup, dist_at(knots[knot++]));
        running_sup = std::max(running_sup, dist_at(horizon_i));
        r.value += std::pow(2.0, -static_cast<double>(i)) * std::min(running_sup, 1.0);
    }
    return r;
}

struct ProjectResult {
    DiscretePath path;
    bool resampled = false;     // grid did not contain the projection nodes exactly
    double grid_mismatch = 0.0; // worst time offset to the nearest node when resampled
};

/// Piecewise-linear projection onto the node set {k T / n}: the returned path
/// interpolates p's values at those nodes on [0, T] and keeps p unchanged
/// beyond T. Exact (and idempotent) when p's grid refines {k T / n}; otherwise
/// node values are read by interpolation and the mismatch is reported.
inline ProjectResult pl_project(const DiscretePath& p, std::size_t n, double T) {
    if (n < 1) throw input_error("pl_project: n must be >= 1");
    if (!(T > 0.0) || T > p.horizon * (1.0 + 1e-12))
        throw input_error("pl_project: T must lie in (0, horizon]");
    const std::size_t d = p.dim;
    const double h = p.times[1] - p.times[0];

    ProjectResult res;
    std::vector<double> node_vals((n + 1) * d, 0.0);
    for (std::size_t k = 1; k <= n; ++k) {
        const double t_k = T * static_cast<double>(k) / static_cast<double>(n);
        const double cell = t_k / h;
        const double nearest = std::round(cell);
        const double offset = std::fabs(cell - nearest) * h;
        if (offset <= 1e-9 * std::max(1.0, h) &&
            nearest < static_cast<double>(p.times.size())) {
            const std::size_t idx = static_cast<std::size_t>(nearest);
            for (std::size_t j = 0; j < d; ++j) node_vals[k * d + j] = p.node(idx, j);
        } else {
            res.resampled = true;
            res.grid_mismatch = std::max(res.grid_mismatch, offset);
            p.value_at(t_k, std::span<double>(node_vals.data() + k * d, d));
        }
    }

    std::vector<double> out(p.values.size());
    for (std::size_t k = 0; k < p.times.size(); ++k) {
        const double t = p.times[k];
        if (t > T * (1.0 + 1e-12)) {
            for (std::size_t j = 0; j < d; ++j) out[k * d + j] = p.node(k, j);
            continue;
        }
        double cell = t * static_cast<double>(n) / T;
        std::size_t seg = static_cast<std::size_t>(cell);
        if (seg >= n) seg = n - 1;
        const double w = cell - static_cast<double>(seg);
        for (std::size_t j = 0; j < d; ++j)
            out[k * d + j] = node_vals[seg * d + j] +
                             w * (node_vals[(seg + 1) * d + j] - node_vals[seg * d + j]);
    }
    // node 0 is exactly 0 by construction of node_vals
    res.path = DiscretePath::create(p.times, std::move(out), d);
    return res;
}

struct MollifyValue {
    double value = 0.0;
    std::size_t argmin = 0;  // index into candidates, or candidates.size() for the query
    bool query_optimal = false;
};

/// Inf-convolution at slope n over a finite candidate set:
/// X^(n)(omega) = min over candidates (and omega itself) of
/// X(omega') + n * sup_{[0, n]} |omega - omega'|. An upper bound of the true
/// inf over path space, exact as candidates densify. The query path always
/// participates, so the result never exceeds X(omega); callers comparing two
/// evaluations must pass the same candidate set to both for the Lipschitz
/// property to hold exactly.
inline MollifyValue lip_mollify(const PathFunctional& x, double n,
                                std::span<const DiscretePath> candidates,
                                const DiscretePath& omega) {
    x.validate();
    if (!(n > 0.0)) throw input_error("lip_mollify: n must be positive");
    MollifyValue best;
    best.value = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const double v =
            x(candidates[c]) + n * detail::windowed_sup_distance(omega, candidates[c], n);
        if (v < best.value) {
            best.value = v;
            best.argmin = c;
        }
    }
    const double self = x(omega);
    if (self < best.value || candidates.empty()) {
        best.value = self;
        best.argmin = candidates.size();
        best.query_optimal = true;
    }
    return best;
}

struct PipelineStage {
    std::string name;
    double budget = 0.0;
    double achieved = 0.0;
    bool met = false;
};

struct PipelineConfig {
    std::size_t n_paths = 2000;       // per scenario
    std::size_t path_steps = 64;      // uniform steps on [0, horizon]
    double horizon = 1.0;
    std::vector<double> mu_schedule = {1, 2, 4, 8, 16, 32, 64, 128};
    std::vector<std::size_t> projection_schedule = {1, 2, 4, 8, 16, 32, 64};
    std::size_t candidate_budget = 48;
    double radius_max = 16.0;
    std::uint64_t seed = 7;
};

struct PipelineResult {
    double eps = 0.0;
    double mu = 0.0;        // mollification slope chosen in stage (i)
    double radius = 0.0;    // sup-norm ball radius from stage (ii)
    double theta = 0.0;     // deviation threshold K tolerates at resolution n0
    std::size_t n0 = 0;     // projection resolution from stage (iii)
    double certified_bound = 0.0; // eps/3 split recombined: e1 + 2M c(K^c) + mu theta
    double estimate = 0.0;  // Monte Carlo sup over scenarios of E|X - Y|
    double std_error = 0.0; // at the attaining scenario
    std::vector<PipelineStage> stages;
    std::vector<double> grid_times; // k T / n0, k = 1..n0
    CylinderFunctional y;
    bool y_equals_x_on_samples = false;
};

/// Three-stage reduction of a bounded path functional to a cylinder
/// functional Y with estimated E|X - Y| <= eps: (i) Lipschitz mollification
/// at the smallest slope mu whose sampled error fits eps/3, (ii) a compact
/// set K (sup-norm ball + projection-deviation constraint, both thresholds
/// bisected) whose complement has estimated capacity within eps/(6M), (iii)
/// piecewise-linear projection at the smallest resolution n0 with
/// mu * deviation-on-K under eps/3. Y = X^(mu) after projection. Throws
/// budget_error, carrying the best bound reached, if any stage cannot be
/// certified at the configured budgets.
inline PipelineResult lip_approx_pipeline(const PathFunctional& x, double eps,
                                          const ScenarioFamily& family, const GNormalSpec& spec,
                                          const PipelineConfig& cfg = {}) {
    x.validate();
    if (!(eps > 0.0)) throw input_error("lip_approx_pipeline: eps must be positive");
    if (family.scenarios.empty()) throw input_error("lip_approx_pipeline: family is empty");
    const double big_m = x.bound;
    const double T = cfg.horizon;
    if (!(T > 0.0)) throw input_error("lip_approx_pipeline: horizon must be positive");

    // sample paths per scenario on the pipeline's uniform grid
    std::vector<double> grid(cfg.path_steps + 1);
    for (std::size_t k = 0; k <= cfg.path_steps; ++k)
        grid[k] = T * static_cast<double>(k) / static_cast<double>(cfg.path_steps);

    std::vector<std::vector<DiscretePath>> paths(family.scenarios.size());
    for (std::size_t s = 0; s < family.scenarios.size(); ++s) {
        VolatilityScenario fine = detail::refine_scenario_to_grid(family.scenarios[s], grid);
        auto raw = induce_measure(fine, spec, cfg.n_paths, detail::mix_seed(cfg.seed, s));
        paths[s].reserve(raw.size());
        for (auto& ps : raw) paths[s].push_back(DiscretePath::from_sample(ps));
    }

    std::vector<std::vector<double>> x_vals(paths.size());
    for (std::size_t s = 0; s < paths.size(); ++s) {
        x_vals[s].reserve(paths[s].size());
        for (const auto& p : paths[s]) x_vals[s].push_back(x(p));
    }

    // fixed candidate set: a deterministic cross-scenario subsample plus the
    // zero path, shared by every mollifier evaluation below
    std::vector<DiscretePath> candidates;
    {
        std::vector<double> zero(grid.size(), 0.0);
        candidates.push_back(DiscretePath::create(grid, std::vector<double>(grid.size() * spec.cov.dimension(), 0.0),
                                                  spec.cov.dimension()));
        std::size_t c = 0;
        while (candidates.size() < cfg.candidate_budget + 1) {
            const std::size_t s = c % paths.size();
            const std::size_t i = (c / paths.size()) * 17 % paths[s].size();
            candidates.push_back(paths[s][i]);
            ++c;
            if (c > 10 * cfg.candidate_budget) break;
        }
    }
    std::vector<double> x_cand;
    x_cand.reserve(candidates.size());
    for (const auto& p : candidates) x_cand.push_back(x(p));

    // X^(mu)(omega): min over the shared pool, the query's own projection
    // images (smooth competitors), and the query itself
    auto mollified = [&](const DiscretePath& omega, double x_omega, double mu) {
        const double window = std::min(mu, T);
        double best = x_omega; // the query path participates at distance 0
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            const double v =
                x_cand[c] + mu * detail::windowed_sup_distance(omega, candidates[c], window);
            best = std::min(best, v);
        }
        for (std::size_t m = 1; m < cfg.path_steps; m *= 2) {
            const auto proj = pl_project(omega, m, T);
            const double v =
                x(proj.path) + mu * detail::windowed_sup_distance(omega, proj.path, window);
            best = std::min(best, v);
        }
        return best;
    };

    PipelineResult res;
    res.eps = eps;

    // stage (i): smallest mu with sampled sup-expectation of X - X^(mu) within eps/3
    const double budget1 = eps / 3.0;
    double best_e1 = std::numeric_limits<double>::infinity();
    bool have_mu = false;
    for (double mu : cfg.mu_schedule) {
        double worst = 0.0;
        for (std::size_t s = 0; s < paths.size(); ++s) {
            double mean = 0.0;
            for (std::size_t i = 0; i < paths[s].size(); ++i)
                mean += x_vals[s][i] - mollified(paths[s][i], x_vals[s][i], mu);
            mean /= static_cast<double>(paths[s].size());
            worst = std::max(worst, mean);
        }
        best_e1 = std::min(best_e1, worst);
        if (worst <= budget1) {
            res.mu = mu;
            res.stages.push_back({"mollify", budget1, worst, true});
            have_mu = true;
            break;
        }
    }
    if (!have_mu)
        throw budget_error("lip_approx_pipeline: no mollification slope in the schedule "
                           "meets eps/3",
                           best_e1);

    // stage (ii): K = sup-norm ball intersected with a projection-deviation
    // constraint; each constraint gets half of the eps/(6M) capacity budget,
    // with thresholds found by bisection
    const double cap_budget = eps / (12.0 * big_m);
    std::vector<std::vector<double>> sups(paths.size());
    for (std::size_t s = 0; s < paths.size(); ++s) {
        sups[s].reserve(paths[s].size());
        for (const auto& p : paths[s]) {
            double worst = 0.0;
            for (std::size_t k = 0; k < p.times.size(); ++k) {
                double acc = 0.0;
                for (std::size_t j = 0; j < p.dim; ++j)
                    acc += p.node(k, j) * p.node(k, j);
                worst = std::max(worst, acc);
            }
            sups[s].push_back(std::sqrt(worst));
        }
    }
    // worst-scenario fraction of samples with statistic above the threshold
    auto exceedance = [&](const std::vector<std::vector<double>>& stat, double thr) {
        double worst = 0.0;
        for (const auto& col : stat) {
            std::size_t hits = 0;
            for (double v : col)
                if (v > thr) ++hits;
            worst = std::max(worst, static_cast<double>(hits) / static_cast<double>(col.size()));
        }
        return worst;
    };
    auto bisect_threshold = [&](const std::vector<std::vector<double>>& stat, double hi0) {
        double lo = 0.0, hi = hi0;
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (exceedance(stat, mid) <= cap_budget) hi = mid;
            else lo = mid;
        }
        return hi;
    };
    if (exceedance(sups, cfg.radius_max) > cap_budget)
        throw budget_error("lip_approx_pipeline: even the largest ball radius leaves too "
                           "much capacity outside",
                           exceedance(sups, cfg.radius_max));
    res.radius = bisect_threshold(sups, cfg.radius_max);
    const double cap_ball = exceedance(sups, res.radius);
    res.stages.push_back({"ball-capacity", cap_budget, cap_ball, true});

    // stage (iii): smallest projection resolution n0 such that the deviation
    // threshold theta(n0) that K tolerates costs mu * theta <= eps/3
    const double dev_budget = eps / 3.0;
    bool have_n0 = false;
    double best_dev = std::numeric_limits<double>::infinity();
    double cap_dev = 0.0;
    for (std::size_t n0 : cfg.projection_schedule) {
        std::vector<std::vector<double>> devs(paths.size());
        double dev_max = 0.0;
        for (std::size_t s = 0; s < paths.size(); ++s) {
            devs[s].reserve(paths[s].size());
            for (const auto& p : paths[s]) {
                const double dv = sup_norm(p, pl_project(p, n0, T).path);
                devs[s].push_back(dv);
                dev_max = std::max(dev_max, dv);
            }
        }
        const double theta = bisect_threshold(devs, std::max(dev_max, 1e-300));
        best_dev = std::min(best_dev, res.mu * theta);
        if (res.mu * theta <= dev_budget) {
            res.n0 = n0;
            res.theta = theta;
            cap_dev = exceedance(devs, theta);
            res.stages.push_back({"deviation-capacity", cap_budget, cap_dev, true});
            res.stages.push_back({"projection-deviation", dev_budget, res.mu * theta, true});
            have_n0 = true;
            break;
        }
    }
    if (!have_n0)
        throw budget_error("lip_approx_pipeline: no projection resolution in the schedule "
                           "keeps mu times the tolerated deviation within eps/3",
                           best_dev);
    res.certified_bound =
        res.stages[0].achieved + 2.0 * big_m * (cap_ball + cap_dev) + res.mu * res.theta;

    // assemble Y = X^(mu) after projection, as a functional of the n0 node values
    const double mu = res.mu;
    const std::size_t n0 = res.n0;
    const std::size_t d = spec.cov.dimension();
    for (std::size_t k = 1; k <= n0; ++k)
        res.grid_times.push_back(T * static_cast<double>(k) / static_cast<double>(n0));

    // Y rebuilds the projected path through the nodes on the pipeline grid
    // and applies the same mollifier; candidates, slope, and window are
    // frozen copies so Y stands alone
    {
        auto cands = std::make_shared<std::vector<DiscretePath>>(candidates);
        auto cand_vals = std::make_shared<std::vector<double>>(x_cand);
        auto grid_copy = std::make_shared<std::vector<double>>(grid);
        auto x_frozen = std::make_shared<PathFunctional>(x);
        const double window = std::min(mu, T);
        const std::size_t steps = cfg.path_steps;
        res.y = CylinderFunctional::from_callable(
            res.grid_times, d,
            [cands, cand_vals, grid_copy, x_frozen, mu, window, n0, steps, T,
             d](std::span<const double> nodes) {
                std::vector<double> vals(grid_copy->size() * d, 0.0);
                for (std::size_t k = 0; k < grid_copy->size(); ++k) {
                    const double t = (*grid_copy)[k];
                    double cell = t * static_cast<double>(n0) / T;
                    std::size_t seg = static_cast<std::size_t>(cell);
                    if (seg >= n0) seg = n0 - 1;
                    const double w = cell - static_cast<double>(seg);
                    for (std::size_t j = 0; j < d; ++j) {
                        const double lo_v = seg == 0 ? 0.0 : nodes[(seg - 1) * d + j];
                        const double hi_v = nodes[seg * d + j];
                        vals[k * d + j] = lo_v + w * (hi_v - lo_v);
                    }
                }
                DiscretePath omega = DiscretePath::create(*grid_copy, std::move(vals), d);
                double best = (*x_frozen)(omega);
                for (std::size_t c = 0; c < cands->size(); ++c) {
                    const double v = (*cand_vals)[c] +
                                     mu * detail::windowed_sup_distance(omega, (*cands)[c],
                                                                        window);
                    best = std::min(best, v);
                }
                for (std::size_t m = 1; m < steps; m *= 2) {
                    const auto proj = pl_project(omega, m, T);
                    const double v = (*x_frozen)(proj.path) +
                                     mu * detail::windowed_sup_distance(omega, proj.path, window);
                    best = std::min(best, v);
                }
                return best;
            },
            "pipeline-proxy(" + x.name + ")");
    }

    // final certification: direct Monte Carlo of E|X - Y| on the sampled paths
    double worst_mean = 0.0, worst_se = 0.0;
    bool all_zero = true;
    for (std::size_t s = 0; s < paths.size(); ++s) {
        double mean = 0.0, m2 = 0.0;
        std::size_t n = 0;
        std::vector<double> nodes(n0 * d);
        for (std::size_t i = 0; i < paths[s].size(); ++i) {
            const auto proj = pl_project(paths[s][i], n0, T);
            for (std::size_t k = 1; k <= n0; ++k) {
                const double t_k = T * static_cast<double>(k) / static_cast<double>(n0);
                proj.path.value_at(t_k, std::span<double>(nodes.data() + (k - 1) * d, d));
            }
            const double diff = std::fabs(x_vals[s][i] - res.y.payoff(nodes));
            if (diff != 0.0) all_zero = false;
            ++n;
            const double delta = diff - mean;
            mean += delta / static_cast<double>(n);
            m2 += delta * (diff - mean);
        }
        const double se = std::sqrt(std::max(0.0, m2 / static_cast<double>(n - 1)) /
                                    static_cast<double>(n));
        if (mean > worst_mean) {
            worst_mean = mean;
            worst_se = se;
        }
    }
    res.estimate = worst_mean;
    res.std_error = worst_se;
    res.y_equals_x_on_samples = all_zero;
    res.stages.push_back({"final-estimate", eps, worst_mean, worst_mean <= eps});
    if (worst_mean > eps)
        throw budget_error("lip_approx_pipeline: final Monte Carlo estimate exceeds eps",
                           worst_mean);
    return res;
}

} // namespace gexpect
