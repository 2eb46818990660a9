#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "gexpect/errors.hpp"

namespace gexpect {

inline double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Nodes and weights for E[f(Z)], Z standard normal: sum_i w_i f(z_i).
/// Nodes are exactly symmetric about 0 (odd counts place a node at 0) and
/// the weights sum to 1 to the last bit.
struct GaussHermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

namespace detail {

inline GaussHermiteRule build_gauss_hermite(std::size_t n) {
    // Golub-Welsch on the probabilists' Hermite recurrence: Jacobi matrix has
    // zero diagonal and off-diagonal sqrt(k), eigenvalues are the nodes and
    // the squared first eigenvector components are the weights (total mass 1).
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                              static_cast<Eigen::Index>(n));
    for (std::size_t k = 1; k < n; ++k) {
        const double b = std::sqrt(static_cast<double>(k));
        j(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1)) = b;
        j(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(k)) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    if (es.info() != Eigen::Success)
        throw evaluation_error("gauss_hermite_rule: eigendecomposition failed");

    GaussHermiteRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        rule.nodes[i] = es.eigenvalues()(static_cast<Eigen::Index>(i));
        const double v0 = es.eigenvectors()(0, static_cast<Eigen::Index>(i));
        rule.weights[i] = v0 * v0;
    }
    // eigenvalues come sorted; enforce exact symmetry by averaging mirrored pairs
    for (std::size_t i = 0, k = n - 1; i < k; ++i, --k) {
        const double z = 0.5 * (rule.nodes[k] - rule.nodes[i]);
        rule.nodes[i] = -z;
        rule.nodes[k] = z;
        const double w = 0.5 * (rule.weights[i] + rule.weights[k]);
        rule.weights[i] = w;
        rule.weights[k] = w;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;

    double total = 0.0;
    for (double w : rule.weights) total += w;
    for (double& w : rule.weights) w /= total;
    // pin the residual rounding onto one weight so the sum is exactly 1
    double resid = 1.0;
    for (std::size_t i = 0; i < n; ++i)
        if (i != n / 2) resid -= rule.weights[i];
    rule.weights[n / 2] = resid;
    return rule;
}

} // namespace detail

inline GaussHermiteRule gauss_hermite_rule(std::size_t n) {
    if (n == 0) throw input_error("gauss_hermite_rule: node count must be positive");
    static std::mutex mu;
    static std::map<std::size_t, GaussHermiteRule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, detail::build_gauss_hermite(n)).first;
    return it->second;
}

/// Adaptive Simpson on [a, b]. Depth exhaustion returns the current estimate
/// rather than failing; tolerances are generous enough in every caller that
/// this path stays theoretical.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double rel_tol = 1e-12, double abs_tol = 1e-300,
                               int max_depth = 60) {
    struct Impl {
        const std::function<double(double)>& f;
        double rel_tol, abs_tol;

        double recurse(double a, double m, double b, double fa, double fm, double fb,
                       double whole, int depth) const {
            const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
            const double flm = f(lm), frm = f(rm);
            const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            const double delta = left + right - whole;
            if (depth <= 0 ||
                std::fabs(delta) <= 15.0 * std::max(abs_tol, rel_tol * std::fabs(left + right)))
                return left + right + delta / 15.0;
            return recurse(a, lm, m, fa, flm, fm, left, depth - 1) +
                   recurse(m, rm, b, fm, frm, fb, right, depth - 1);
        }
    };
    if (!(b > a)) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return Impl{f, rel_tol, abs_tol}.recurse(a, m, b, fa, fm, fb, whole, max_depth);
}

} // namespace gexpect
