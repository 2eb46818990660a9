#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gexpect/errors.hpp"
#include "gexpect/linalg.hpp"

namespace gexpect {

/// The uncertainty set: a finite list of admissible covariance matrices
/// (variance per unit time). Finiteness makes every sup in this library an
/// exact max; convex sets are approximated by vertex enumeration supplied by
/// the caller.
class CovarianceSet {
public:
    static CovarianceSet create(std::vector<SymMatrix> matrices) {
        if (matrices.empty())
            throw input_error("CovarianceSet: matrices list must be nonempty");
        const std::size_t d = matrices[0].dim();
        for (std::size_t i = 0; i < matrices.size(); ++i) {
            if (matrices[i].dim() != d) {
                std::ostringstream os;
                os << "CovarianceSet: matrices[" << i << "] is " << matrices[i].dim() << "x"
                   << matrices[i].dim() << ", expected " << d << "x" << d;
                throw input_error(os.str());
            }
            const double emin = matrices[i].min_eigenvalue();
            if (emin < -1e-10) {
                std::ostringstream os;
                os << "CovarianceSet: matrices[" << i
                   << "] is not positive semidefinite (min eigenvalue " << emin << ")";
                throw input_error(os.str());
            }
        }
        CovarianceSet s;
        s.d_ = d;
        s.mats_ = std::move(matrices);
        double vmax = 0.0;
        for (const auto& m : s.mats_) vmax = std::max(vmax, m.max_eigenvalue());
        s.sigma_bar_ = std::sqrt(std::max(0.0, vmax));
        return s;
    }

    /// Convenience for d = 1: plain variances.
    static CovarianceSet scalar(const std::vector<double>& variances) {
        std::vector<SymMatrix> mats;
        mats.reserve(variances.size());
        for (double v : variances) mats.push_back(SymMatrix::from_rows({{v}}));
        return create(std::move(mats));
    }

    std::size_t dimension() const noexcept { return d_; }
    std::size_t size() const noexcept { return mats_.size(); }
    const std::vector<SymMatrix>& matrices() const noexcept { return mats_; }
    const SymMatrix& at(std::size_t i) const { return mats_.at(i); }

    /// sqrt of the largest eigenvalue over the set: the worst-case volatility.
    double sigma_bar() const noexcept { return sigma_bar_; }

private:
    CovarianceSet() = default;
    std::size_t d_ = 0;
    std::vector<SymMatrix> mats_;
    double sigma_bar_ = 0.0;
};

struct GEval {
    double value;
    std::size_t argmax; // index of a maximizing covariance, lowest on ties
};

/// G(A) = 1/2 max over the covariance set of tr(A gamma).
class GFunction {
public:
    explicit GFunction(CovarianceSet set) : set_(std::move(set)) {}

    const CovarianceSet& covariance_set() const noexcept { return set_; }

    GEval operator()(const SymMatrix& a) const {
        if (a.dim() != set_.dimension())
            throw input_error("g_eval: matrix is " + std::to_string(a.dim()) + "x" +
                              std::to_string(a.dim()) + " but the covariance set has d = " +
                              std::to_string(set_.dimension()));
        double best = a.trace_product(set_.at(0));
        std::size_t arg = 0;
        for (std::size_t i = 1; i < set_.size(); ++i) {
            const double v = a.trace_product(set_.at(i));
            if (v > best) {
                best = v;
                arg = i;
            }
        }
        return {0.5 * best, arg};
    }

private:
    CovarianceSet set_;
};

inline GEval g_eval(const GFunction& g, const SymMatrix& a) { return g(a); }

struct GAxiomReport {
    double max_subadditivity_violation = 0.0; // max(0, G(A+B) - G(A) - G(B))
    double max_homogeneity_violation = 0.0;   // max |G(lam A) - lam G(A)|, lam >= 0
    double max_monotonicity_violation = 0.0;  // over pairs with A-B PSD: max(0, G(B)-G(A))
    std::size_t pairs_checked = 0;
    std::size_t monotone_pairs_checked = 0;
};

/// Checks sub-additivity, positive homogeneity and PSD-monotonicity of G on
/// the supplied sample pairs. Monotonicity is only assessable on pairs whose
/// difference is PSD; the report counts how many qualified.
inline GAxiomReport g_axiom_check(const GFunction& g,
                                  const std::vector<std::pair<SymMatrix, SymMatrix>>& samples,
                                  const std::vector<double>& lambdas = {0.0, 0.5, 1.0, 2.0,
                                                                        3.75}) {
    if (samples.empty()) throw input_error("g_axiom_check: samples must be nonempty");
    for (double lam : lambdas)
        if (lam < 0.0) throw input_error("g_axiom_check: homogeneity scales must be >= 0");
    GAxiomReport rep;
    for (const auto& [a, b] : samples) {
        ++rep.pairs_checked;
        const double ga = g(a).value;
        const double gb = g(b).value;
        const double gab = g(a + b).value;
        rep.max_subadditivity_violation =
            std::max(rep.max_subadditivity_violation, gab - ga - gb);
        for (double lam : lambdas) {
            const double h = std::fabs(g(a * lam).value - lam * ga);
            rep.max_homogeneity_violation = std::max(rep.max_homogeneity_violation, h);
        }
        if ((a - b).min_eigenvalue() >= -1e-12) {
            ++rep.monotone_pairs_checked;
            rep.max_monotonicity_violation =
                std::max(rep.max_monotonicity_violation, gb - ga);
        }
    }
    rep.max_subadditivity_violation = std::max(0.0, rep.max_subadditivity_violation);
    rep.max_monotonicity_violation = std::max(0.0, rep.max_monotonicity_violation);
    return rep;
}

/// (x ∧ N) ∨ (−N): clamp to the symmetric interval [-N, N].
inline double truncate(double x, double n) {
    if (!(n > 0.0)) throw input_error("truncate: N must be positive");
    return std::min(std::max(x, -n), n);
}

/// A state-feedback volatility rule for d = 1: cell_edges partition the real
/// line into cells (-inf, e0], (e0, e1], ..., (e_{k-1}, inf); step_cells[k][c]
/// names the covariance index used on step k when the current state lies in
/// cell c.
struct FeedbackPolicy {
    std::vector<double> cell_edges;
    std::vector<std::vector<std::size_t>> step_cells;

    std::size_t cell_of(double x) const {
        return static_cast<std::size_t>(
            std::upper_bound(cell_edges.begin(), cell_edges.end(), x) - cell_edges.begin());
    }
};

/// One scenario measure generator: a piecewise-constant (in time) choice of
/// covariance from the set, either open-loop (gamma_index per step) or via a
/// feedback policy.
struct VolatilityScenario {
    std::vector<double> step_times;       // 0 = s_0 < s_1 < ... < s_K
    std::vector<std::size_t> gamma_index; // open-loop; empty iff feedback is set
    std::optional<FeedbackPolicy> feedback;

    std::size_t steps() const { return step_times.empty() ? 0 : step_times.size() - 1; }

    void validate(const CovarianceSet& cov) const {
        if (step_times.size() < 2)
            throw input_error("VolatilityScenario: needs at least one step");
        if (std::fabs(step_times.front()) > 1e-12)
            throw input_error("VolatilityScenario: step_times must start at 0");
        for (std::size_t k = 1; k < step_times.size(); ++k)
            if (!(step_times[k] > step_times[k - 1]))
                throw input_error("VolatilityScenario: step_times must be strictly increasing");
        if (feedback) {
            const auto& fb = *feedback;
            if (fb.step_cells.size() != steps())
                throw input_error("VolatilityScenario: policy has " +
                                  std::to_string(fb.step_cells.size()) + " steps, expected " +
                                  std::to_string(steps()));
            for (std::size_t k = 1; k < fb.cell_edges.size(); ++k)
                if (!(fb.cell_edges[k] > fb.cell_edges[k - 1]))
                    throw input_error("VolatilityScenario: cell edges must be increasing");
            for (const auto& row : fb.step_cells) {
                if (row.size() != fb.cell_edges.size() + 1)
                    throw input_error("VolatilityScenario: policy row size must be cells + 1");
                for (std::size_t idx : row)
                    if (idx >= cov.size())
                        throw input_error("VolatilityScenario: policy index " +
                                          std::to_string(idx) + " out of range");
            }
            if (!gamma_index.empty())
                throw input_error(
                    "VolatilityScenario: open-loop indices and feedback policy are exclusive");
        } else {
            if (gamma_index.size() != steps())
                throw input_error("VolatilityScenario: " + std::to_string(gamma_index.size()) +
                                  " gamma indices for " + std::to_string(steps()) + " steps");
            for (std::size_t idx : gamma_index)
                if (idx >= cov.size())
                    throw input_error("VolatilityScenario: gamma index " + std::to_string(idx) +
                                      " out of range (set has " + std::to_string(cov.size()) +
                                      " matrices)");
        }
    }

    /// True when every time in `times` coincides with a step boundary.
    bool covers(std::span<const double> times, double tol = 1e-9) const {
        for (double t : times) {
            bool found = false;
            for (double s : step_times)
                if (std::fabs(s - t) <= tol) {
                    found = true;
                    break;
                }
            if (!found) return false;
        }
        return true;
    }
};

struct ScenarioFamily {
    std::string label;
    std::vector<VolatilityScenario> scenarios;

    std::size_t size() const noexcept { return scenarios.size(); }
};

struct ScenarioSup {
    double value;
    std::size_t argmax; // lowest index on ties
};

/// Exact max over a finite list of per-generator values.
inline ScenarioSup scenario_sup(const ScenarioFamily& family, std::span<const double> values) {
    if (family.scenarios.empty()) throw input_error("scenario_sup: family is empty");
    if (values.size() != family.scenarios.size())
        throw input_error("scenario_sup: " + std::to_string(values.size()) + " values for " +
                          std::to_string(family.scenarios.size()) + " generators");
    double best = values[0];
    std::size_t arg = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > best) {
            best = values[i];
            arg = i;
        }
    return {best, arg};
}

namespace detail {

/// Uniformly refine each interval of the cylinder grid {0, t_1, ..., t_n}.
inline std::vector<double> refine_time_grid(std::span<const double> cylinder_times,
                                            std::size_t refinement) {
    if (cylinder_times.empty()) throw input_error("scenario family: times must be nonempty");
    if (refinement == 0) throw input_error("scenario family: refinement must be >= 1");
    std::vector<double> grid{0.0};
    double prev = 0.0;
    for (double t : cylinder_times) {
        if (!(t > prev))
            throw input_error("scenario family: cylinder times must be strictly increasing "
                              "and positive");
        for (std::size_t r = 1; r <= refinement; ++r)
            grid.push_back(prev + (t - prev) * static_cast<double>(r) /
                                      static_cast<double>(refinement));
        prev = t;
    }
    grid.back() = cylinder_times.back(); // kill accumulated round-off at the horizon
    return grid;
}

inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                             std::uint64_t h = 1469598103934665603ull) {
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint8_t buf[16];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::uint8_t>(seed >> (8 * i));
    for (int i = 0; i < 8; ++i) buf[8 + i] = static_cast<std::uint8_t>(salt >> (8 * i));
    return fnv1a64(std::span<const std::uint8_t>(buf, 16));
}

/// Re-expresses a scenario on a finer step grid: each fine step inherits the
/// covariance choice of the coarse step containing it. Every coarse boundary
/// must land on a fine node, otherwise the laws would differ.
inline VolatilityScenario refine_scenario_to_grid(const VolatilityScenario& sc,
                                                  const std::vector<double>& fine_grid) {
    if (fine_grid.size() < 2 || std::fabs(fine_grid.front()) > 1e-12)
        throw input_error("refine_scenario_to_grid: fine grid must start at 0");
    if (std::fabs(fine_grid.back() - sc.step_times.back()) > 1e-9)
        throw input_error("refine_scenario_to_grid: horizons differ");
    for (double t : sc.step_times) {
        bool found = false;
        for (double u : fine_grid)
            if (std::fabs(u - t) <= 1e-9) {
                found = true;
                break;
            }
        if (!found)
            throw input_error("refine_scenario_to_grid: coarse boundary " + std::to_string(t) +
                              " is not a fine grid node");
    }
    auto coarse_step_of = [&](double mid) {
        for (std::size_t k = 0; k + 1 < sc.step_times.size(); ++k)
            if (mid >= sc.step_times[k] - 1e-12 && mid <= sc.step_times[k + 1] + 1e-12) return k;
        return sc.step_times.size() - 2;
    };
    VolatilityScenario out;
    out.step_times = fine_grid;
    if (sc.feedback) {
        FeedbackPolicy fb;
        fb.cell_edges = sc.feedback->cell_edges;
        for (std::size_t k = 0; k + 1 < fine_grid.size(); ++k) {
            const double mid = 0.5 * (fine_grid[k] + fine_grid[k + 1]);
            fb.step_cells.push_back(sc.feedback->step_cells[coarse_step_of(mid)]);
        }
        out.feedback = std::move(fb);
    } else {
        for (std::size_t k = 0; k + 1 < fine_grid.size(); ++k) {
            const double mid = 0.5 * (fine_grid[k] + fine_grid[k + 1]);
            out.gamma_index.push_back(sc.gamma_index[coarse_step_of(mid)]);
        }
    }
    return out;
}

} // namespace detail

/// All constant-covariance scenarios on the (refined) cylinder grid: one
/// scenario per element of the set.
inline ScenarioFamily constant_family(const CovarianceSet& cov,
                                      std::span<const double> cylinder_times,
                                      std::size_t refinement = 1) {
    auto grid = detail::refine_time_grid(cylinder_times, refinement);
    ScenarioFamily fam;
    fam.label = "constant";
    const std::size_t steps = grid.size() - 1;
    for (std::size_t i = 0; i < cov.size(); ++i) {
        VolatilityScenario sc;
        sc.step_times = grid;
        sc.gamma_index.assign(steps, i);
        sc.validate(cov);
        fam.scenarios.push_back(std::move(sc));
    }
    return fam;
}

/// Piecewise-constant scenarios over the refined grid: the full cartesian
/// product of covariance choices when it fits the budget, otherwise the
/// constant scenarios plus a seeded random subsample of distinct assignments.
/// Constant scenarios always come first, so a coarser family's generators are
/// dominated by this one.
inline ScenarioFamily product_family(const CovarianceSet& cov,
                                     std::span<const double> cylinder_times,
                                     std::size_t refinement, std::size_t budget,
                                     std::uint64_t seed) {
    auto grid = detail::refine_time_grid(cylinder_times, refinement);
    const std::size_t steps = grid.size() - 1;
    const std::size_t m = cov.size();
    if (budget < m) throw input_error("product_family: budget smaller than the covariance set");

    ScenarioFamily fam = constant_family(cov, cylinder_times, refinement);
    fam.label = "product/r" + std::to_string(refinement);

    double total = 1.0;
    for (std::size_t k = 0; k < steps; ++k) total *= static_cast<double>(m);

    std::set<std::vector<std::size_t>> seen;
    for (const auto& sc : fam.scenarios) seen.insert(sc.gamma_index);

    auto push = [&](std::vector<std::size_t> idx) {
        if (!seen.insert(idx).second) return;
        VolatilityScenario sc;
        sc.step_times = grid;
        sc.gamma_index = std::move(idx);
        fam.scenarios.push_back(std::move(sc));
    };

    if (total <= static_cast<double>(budget)) {
        std::vector<std::size_t> idx(steps, 0);
        while (true) {
            push(idx);
            std::size_t k = 0;
            while (k < steps && ++idx[k] == m) idx[k++] = 0;
            if (k == steps) break;
        }
    } else {
        // deterministic subsample via a counter-mode hash, no RNG state to share
        std::uint64_t counter = 0;
        while (fam.scenarios.size() < budget) {
            std::uint64_t h = detail::mix_seed(seed, counter++);
            std::vector<std::size_t> idx(steps);
            for (std::size_t k = 0; k < steps; ++k) {
                h = detail::mix_seed(h, k + 1);
                idx[k] = static_cast<std::size_t>(h % m);
            }
            push(std::move(idx));
            if (counter > 1000 * budget)
                throw budget_error("product_family: could not draw enough distinct scenarios",
                                   static_cast<double>(fam.scenarios.size()));
        }
    }
    for (const auto& sc : fam.scenarios) sc.validate(cov);
    return fam;
}

} // namespace gexpect
