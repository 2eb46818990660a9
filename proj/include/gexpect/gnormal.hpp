#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "gexpect/errors.hpp"
#include "gexpect/expr.hpp"
#include "gexpect/quadrature.hpp"
#include "gexpect/sublinear.hpp"
#include "gexpect/value_function.hpp"

namespace gexpect {

enum class QuadratureMode {
    gauss_hermite, // substep DP with Gauss-Hermite quadrature and grid interpolation
    pl_exact       // closed-form Gaussian convolution of the piecewise-linear interpolant
};

/// How the one-step operator discretizes. substeps is the internal time
/// refinement per call; quad_nodes is the Gauss-Hermite node count.
struct GNormalSpec {
    CovarianceSet cov;
    std::size_t substeps = 8;
    std::size_t quad_nodes = 21;
    QuadratureMode quadrature = QuadratureMode::gauss_hermite;

    static GNormalSpec create(CovarianceSet cov, std::size_t substeps = 8,
                              std::size_t quad_nodes = 21,
                              QuadratureMode mode = QuadratureMode::gauss_hermite) {
        if (substeps < 1 || substeps > 4096)
            throw input_error("GNormalSpec: substeps must be in [1, 4096]");
        if (quad_nodes < 5 || quad_nodes % 2 == 0)
            throw input_error("GNormalSpec: quad_nodes must be odd and >= 5");
        if (quad_nodes > 401) throw input_error("GNormalSpec: quad_nodes must be <= 401");
        return GNormalSpec{std::move(cov), substeps, quad_nodes, mode};
    }
};

/// Grid geometry for value functions built by this layer.
struct DpConfig {
    std::size_t grid_points = 801;   // odd, so 0 is a node
    double width_sigmas = 6.0;       // half-width in units of sigma_bar * sqrt(dt)
    std::size_t grid_points_2d = 201;
    bool with_error_estimate = true;
};

inline constexpr double kMassLeakTol = 1e-8;

struct OneStepResult {
    double value;               // transformed function read at the origin
    ValueFunction1D transformed;
    double mass_leak;           // worst-case tail mass beyond the trusted bound
    double error_estimate;      // Richardson-style substep-halving estimate
};

namespace detail {

/// One DP substep under a single scalar variance: branch(x) = E[v(x + s Z)].
inline void gh_branch_1d(const ValueFunction1D& v, double s, const GaussHermiteRule& rule,
                         std::vector<double>& out) {
    const auto& grid = v.grid();
    const auto& vals = v.values();
    const std::size_t n = grid.size();
    out.assign(n, 0.0);
    if (s == 0.0) {
        out = vals;
        return;
    }
    if (v.is_uniform()) {
        const double h = v.spacing();
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            const double w = rule.weights[q];
            const double shift = rule.nodes[q] * s / h; // offset in cells
            const double fl = std::floor(shift);
            const long k = static_cast<long>(fl);
            const double frac = shift - fl;
            for (std::size_t i = 0; i < n; ++i) {
                const long j = static_cast<long>(i) + k;
                double val;
                if (j < 0) val = vals.front();
                else if (j >= static_cast<long>(n) - 1)
                    val = vals.back();
                else {
                    const std::size_t ju = static_cast<std::size_t>(j);
                    val = vals[ju] + frac * (vals[ju + 1] - vals[ju]);
                }
                out[i] += w * val;
            }
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t q = 0; q < rule.nodes.size(); ++q)
                acc += rule.weights[q] * v(grid[i] + rule.nodes[q] * s);
            out[i] = acc;
        }
    }
}

/// Exact expectation of the piecewise-linear interpolant (with constant
/// continuation) against a N(x, s^2) kernel, per grid point. O(n^2) but free
/// of interpolation bias: the kink payoffs that defeat quadrature are exactly
/// piecewise linear on their grids.
inline void pl_exact_branch_1d(const ValueFunction1D& v, double s, std::vector<double>& out) {
    const auto& grid = v.grid();
    const auto& vals = v.values();
    const std::size_t n = grid.size();
    out.assign(n, 0.0);
    if (s == 0.0) {
        out = vals;
        return;
    }
    std::vector<double> slope(n - 1);
    for (std::size_t j = 0; j + 1 < n; ++j)
        slope[j] = (vals[j + 1] - vals[j]) / (grid[j + 1] - grid[j]);

    std::vector<double> big_phi(n), small_phi(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x0 = grid[i];
        for (std::size_t j = 0; j < n; ++j) {
            const double a = (grid[j] - x0) / s;
            big_phi[j] = normal_cdf(a);
            small_phi[j] = normal_pdf(a);
        }
        // segment integrals: E[(v_j + m_j (U - g_j)) 1{U in seg}], U ~ N(x0, s^2)
        double acc = vals.front() * big_phi.front() + vals.back() * (1.0 - big_phi.back());
        for (std::size_t j = 0; j + 1 < n; ++j) {
            const double d_phi = big_phi[j + 1] - big_phi[j];
            const double e_u = x0 * d_phi - s * (small_phi[j + 1] - small_phi[j]);
            acc += vals[j] * d_phi + slope[j] * (e_u - grid[j] * d_phi);
        }
        out[i] = acc;
    }
}

inline double run_substeps_1d(const GNormalSpec& spec, const ValueFunction1D& psi, double dt,
                              std::size_t substeps, ValueFunction1D* out_vf) {
    const double delta = dt / static_cast<double>(substeps);
    const auto rule = spec.quadrature == QuadratureMode::gauss_hermite
                          ? gauss_hermite_rule(spec.quad_nodes)
                          : GaussHermiteRule{};
    std::vector<double> sqrt_var(spec.cov.size());
    for (std::size_t g = 0; g < spec.cov.size(); ++g)
        sqrt_var[g] = std::sqrt(std::max(0.0, spec.cov.at(g)(0, 0)) * delta);

    ValueFunction1D v = psi;
    std::vector<double> branch, best;
    for (std::size_t k = 0; k < substeps; ++k) {
        best.assign(v.grid().size(), -std::numeric_limits<double>::infinity());
        for (std::size_t g = 0; g < spec.cov.size(); ++g) {
            if (spec.quadrature == QuadratureMode::gauss_hermite)
                gh_branch_1d(v, sqrt_var[g], rule, branch);
            else
                pl_exact_branch_1d(v, sqrt_var[g], branch);
            for (std::size_t i = 0; i < branch.size(); ++i)
                best[i] = std::max(best[i], branch[i]);
        }
        v = ValueFunction1D(v.grid(), best, v.extrapolation_bound());
    }
    if (out_vf) *out_vf = v;
    return v(0.0);
}

} // namespace detail

/// v_0(0) for the backward scheme v_K = psi,
/// v_k(x) = max over gamma of E[v_{k+1}(x + sqrt(delta) gamma^{1/2} Z)].
/// The transformed grid function is returned for chaining. The grid must
/// bracket 0; if the diffusion's tail mass beyond the trusted bound exceeds
/// 1e-8 the call fails rather than silently leaning on constant extrapolation.
inline OneStepResult one_step_expectation(const GNormalSpec& spec, const ValueFunction1D& psi,
                                          double dt, bool with_error_estimate = true) {
    if (spec.cov.dimension() != 1)
        throw capability_error("one_step_expectation on a ValueFunction1D needs d = 1");
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw input_error("one_step_expectation: dt must be positive and finite");
    if (psi.lo() > 0.0 || psi.hi() < 0.0)
        throw input_error("one_step_expectation: grid must bracket 0");

    const double s_tot = spec.cov.sigma_bar() * std::sqrt(dt);
    double leak = 0.0;
    if (s_tot > 0.0) {
        const double bound = std::min({psi.extrapolation_bound(), -psi.lo(), psi.hi()});
        leak = 2.0 * normal_cdf(-bound / s_tot);
        if (leak > kMassLeakTol) {
            std::ostringstream os;
            os << "one_step_expectation: grid too narrow, estimated tail mass " << leak
               << " beyond |x| = " << bound << " exceeds " << kMassLeakTol;
            throw input_error(os.str());
        }
    }

    ValueFunction1D vf = psi;
    const double value = detail::run_substeps_1d(spec, psi, dt, spec.substeps, &vf);
    double est = 0.0;
    if (with_error_estimate) {
        const std::size_t half = std::max<std::size_t>(1, spec.substeps / 2);
        const double coarse = detail::run_substeps_1d(spec, psi, dt, half, nullptr);
        est = 2.0 * std::fabs(value - coarse) + 1e-6 * (1.0 + std::fabs(value));
    }
    return {value, std::move(vf), leak, est};
}

/// FunctionalSpec convenience: samples phi onto the default grid for this dt.
inline OneStepResult one_step_expectation(const GNormalSpec& spec, const FunctionalSpec& phi,
                                          double dt, const DpConfig& cfg = {},
                                          bool allow_flagged = false) {
    if (phi.arity != 1 || phi.dim != 1)
        throw input_error("one_step_expectation: payoff must be over a single 1-d variable");
    if (phi.flagged && !allow_flagged)
        throw input_error("one_step_expectation: payoff '" + phi.source +
                          "' is flagged outside the polynomial growth class; pass "
                          "allow_flagged to override");
    const double w = cfg.width_sigmas * std::max(spec.cov.sigma_bar(), 1e-8) * std::sqrt(dt);
    ValueFunction1D psi = ValueFunction1D::uniform(
        -w, w, cfg.grid_points, [&](double x) { return evaluate(phi, std::vector<double>{x}); });
    return one_step_expectation(spec, psi, dt, cfg.with_error_estimate);
}

struct OneStep2DResult {
    double value;
    double mass_leak;
    double error_estimate;
};

namespace detail {

inline double run_substeps_2d(const GNormalSpec& spec, const ValueFunction2D& psi, double dt,
                              std::size_t substeps) {
    const double delta = dt / static_cast<double>(substeps);
    const auto rule = gauss_hermite_rule(spec.quad_nodes);
    const std::size_t nq = rule.nodes.size();

    std::vector<SymMatrix> roots;
    roots.reserve(spec.cov.size());
    for (const auto& gamma : spec.cov.matrices()) roots.push_back((gamma * delta).psd_sqrt());

    ValueFunction2D v = psi;
    const std::size_t nx = v.nx(), ny = v.ny();
    std::vector<double> best(nx * ny), branch(nx * ny);
    for (std::size_t k = 0; k < substeps; ++k) {
        std::fill(best.begin(), best.end(), -std::numeric_limits<double>::infinity());
        for (const auto& r : roots) {
            const double r00 = r(0, 0), r01 = r(0, 1), r10 = r(1, 0), r11 = r(1, 1);
            for (std::size_t i = 0; i < nx; ++i) {
                const double x = v.lo_x() + (v.hi_x() - v.lo_x()) * static_cast<double>(i) /
                                                static_cast<double>(nx - 1);
                for (std::size_t j = 0; j < ny; ++j) {
                    const double y = v.lo_y() + (v.hi_y() - v.lo_y()) * static_cast<double>(j) /
                                                    static_cast<double>(ny - 1);
                    double acc = 0.0;
                    for (std::size_t qa = 0; qa < nq; ++qa)
                        for (std::size_t qb = 0; qb < nq; ++qb) {
                            const double za = rule.nodes[qa], zb = rule.nodes[qb];
                            acc += rule.weights[qa] * rule.weights[qb] *
                                   v(x + r00 * za + r01 * zb, y + r10 * za + r11 * zb);
                        }
                    branch[i * ny + j] = acc;
                }
            }
            for (std::size_t i = 0; i < best.size(); ++i)
                best[i] = std::max(best[i], branch[i]);
        }
        v = ValueFunction2D(v.lo_x(), v.hi_x(), nx, v.lo_y(), v.hi_y(), ny, best);
    }
    return v(0.0, 0.0);
}

} // namespace detail

/// Tensor-product Gauss-Hermite one-step operator for d = 2.
inline OneStep2DResult one_step_expectation_2d(const GNormalSpec& spec,
                                               const ValueFunction2D& psi, double dt,
                                               bool with_error_estimate = true) {
    if (spec.cov.dimension() != 2)
        throw capability_error("one_step_expectation_2d needs d = 2");
    if (spec.quadrature != QuadratureMode::gauss_hermite)
        throw capability_error("pl_exact quadrature is implemented for d = 1 only");
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw input_error("one_step_expectation_2d: dt must be positive and finite");
    if (psi.lo_x() > 0.0 || psi.hi_x() < 0.0 || psi.lo_y() > 0.0 || psi.hi_y() < 0.0)
        throw input_error("one_step_expectation_2d: grid must bracket the origin");

    const double s_tot = spec.cov.sigma_bar() * std::sqrt(dt);
    double leak = 0.0;
    if (s_tot > 0.0) {
        const double bound =
            std::min({-psi.lo_x(), psi.hi_x(), -psi.lo_y(), psi.hi_y()});
        // union bound over the two coordinates
        leak = 4.0 * normal_cdf(-bound / s_tot);
        if (leak > kMassLeakTol) {
            std::ostringstream os;
            os << "one_step_expectation_2d: grid too narrow, estimated tail mass " << leak;
            throw input_error(os.str());
        }
    }

    const double value = detail::run_substeps_2d(spec, psi, dt, spec.substeps);
    double est = 0.0;
    if (with_error_estimate) {
        const std::size_t half = std::max<std::size_t>(1, spec.substeps / 2);
        const double coarse = detail::run_substeps_2d(spec, psi, dt, half);
        est = 2.0 * std::fabs(value - coarse) + 1e-6 * (1.0 + std::fabs(value));
    }
    return {value, leak, est};
}

/// E[|<a, X>|^p] for the G-normal X: a one-dimensional Gaussian integral at
/// the worst-case variance sigma^2 = 2 G(a a^T). Integer p in 1..4 uses the
/// closed-form absolute moments; other p integrates adaptively.
inline double abs_moment(const GNormalSpec& spec, const std::vector<double>& a, double p) {
    if (a.size() != spec.cov.dimension())
        throw input_error("abs_moment: direction has dimension " + std::to_string(a.size()) +
                          ", covariance set has " + std::to_string(spec.cov.dimension()));
    for (double v : a)
        if (!std::isfinite(v)) throw input_error("abs_moment: non-finite direction");
    if (!(p >= 1.0) || !std::isfinite(p)) throw input_error("abs_moment: p must be >= 1");

    const GFunction g(spec.cov);
    const double var = 2.0 * g(SymMatrix::outer(a)).value;
    if (var <= 0.0) return 0.0;
    const double sigma = std::sqrt(var);

    const double rounded = std::round(p);
    if (std::fabs(p - rounded) < 1e-12 && rounded >= 1.0 && rounded <= 4.0) {
        const double c = std::sqrt(2.0 / std::numbers::pi);
        switch (static_cast<int>(rounded)) {
        case 1: return sigma * c;
        case 2: return var;
        case 3: return 2.0 * var * sigma * c;
        case 4: return 3.0 * var * var;
        }
    }
    // sigma^p * 2/sqrt(2 pi) * int_0^R u^p exp(-u^2/2) du
    const double r = std::sqrt(2.0 * p) + 14.0;
    const double integral = adaptive_simpson(
        [p](double u) { return std::pow(u, p) * std::exp(-0.5 * u * u); }, 0.0, r, 1e-13);
    return std::pow(sigma, p) * 2.0 / std::sqrt(2.0 * std::numbers::pi) * integral;
}

/// Quadrature path regardless of p; cross-checks the analytic branch.
inline double abs_moment_quadrature(const GNormalSpec& spec, const std::vector<double>& a,
                                    double p) {
    if (a.size() != spec.cov.dimension())
        throw input_error("abs_moment_quadrature: dimension mismatch");
    if (!(p >= 1.0) || !std::isfinite(p))
        throw input_error("abs_moment_quadrature: p must be >= 1");
    const GFunction g(spec.cov);
    const double var = 2.0 * g(SymMatrix::outer(a)).value;
    if (var <= 0.0) return 0.0;
    const double sigma = std::sqrt(var);
    const double r = std::sqrt(2.0 * p) + 14.0;
    const double integral = adaptive_simpson(
        [p](double u) { return std::pow(u, p) * std::exp(-0.5 * u * u); }, 0.0, r, 1e-13);
    return std::pow(sigma, p) * 2.0 / std::sqrt(2.0 * std::numbers::pi) * integral;
}

struct ScalingCaseResult {
    std::string payoff;
    double lhs; // nested E[phi(a X + b Xbar)]
    double rhs; // E[phi(sqrt(a^2 + b^2) X)]
    double abs_diff;
    double rhs_error_estimate;
};

struct ScalingReport {
    double a = 0.0;
    double b = 0.0;
    std::vector<ScalingCaseResult> cases;
    double max_abs_diff = 0.0;
};

/// Checks the distributional identity a X + b Xbar ~ sqrt(a^2 + b^2) X on the
/// supplied payoffs. The left side is evaluated by the nested two-variable
/// scheme: the outer variable is frozen on the grid, one inner one-step solve
/// per outer point. b = 0 makes the inner expectation a constant and is
/// short-circuited, so a = 1, b = 0 reproduces the right side bit for bit.
inline ScalingReport scaling_identity_check(const GNormalSpec& spec, double a, double b,
                                            const std::vector<FunctionalSpec>& phis,
                                            const DpConfig& cfg = {}) {
    if (spec.cov.dimension() != 1)
        throw capability_error("scaling_identity_check is implemented for d = 1");
    if (!(a >= 0.0) || !(b >= 0.0)) throw input_error("scaling_identity_check: need a, b >= 0");
    if (a == 0.0 && b == 0.0)
        throw input_error("scaling_identity_check: a and b cannot both be 0");
    if (phis.empty()) throw input_error("scaling_identity_check: no payoffs");

    const double c = std::hypot(a, b);
    const double w = cfg.width_sigmas * std::max(spec.cov.sigma_bar(), 1e-8); // unit variance step
    ScalingReport rep;
    rep.a = a;
    rep.b = b;

    for (const auto& phi : phis) {
        if (phi.arity != 1 || phi.dim != 1)
            throw input_error("scaling_identity_check: payoffs must be single-variable");
        auto eval1 = [&](double x) { return evaluate(phi, std::vector<double>{x}); };

        ValueFunction1D rhs_terminal =
            ValueFunction1D::uniform(-w, w, cfg.grid_points, [&](double z) { return eval1(c * z); });
        const OneStepResult rhs_step =
            one_step_expectation(spec, rhs_terminal, 1.0, cfg.with_error_estimate);
        const double rhs = rhs_step.value;

        double lhs;
        if (b == 0.0) {
            // inner expectation of a constant is that constant
            ValueFunction1D outer = ValueFunction1D::uniform(
                -w, w, cfg.grid_points, [&](double x) { return eval1(a * x); });
            lhs = one_step_expectation(spec, outer, 1.0, false).value;
        } else {
            std::vector<double> inner_vals(cfg.grid_points);
            std::vector<double> xs(cfg.grid_points);
            for (std::size_t i = 0; i < cfg.grid_points; ++i) {
                const double x = -w + 2.0 * w * static_cast<double>(i) /
                                          static_cast<double>(cfg.grid_points - 1);
                xs[i] = x;
                ValueFunction1D inner = ValueFunction1D::uniform(
                    -w, w, cfg.grid_points, [&](double z) { return eval1(a * x + b * z); });
                inner_vals[i] = one_step_expectation(spec, inner, 1.0, false).value;
            }
            ValueFunction1D outer(std::move(xs), std::move(inner_vals));
            lhs = one_step_expectation(spec, outer, 1.0, false).value;
        }

        const double diff = std::fabs(lhs - rhs);
        rep.cases.push_back({phi.source, lhs, rhs, diff, rhs_step.error_estimate});
        rep.max_abs_diff = std::max(rep.max_abs_diff, diff);
    }
    return rep;
}

} // namespace gexpect
