#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "gexpect/errors.hpp"

namespace gexpect {

/// Dense symmetric d x d matrix with value semantics, row-major storage.
/// Construction symmetrizes after checking the asymmetry is within tolerance,
/// so downstream code can rely on exact symmetry.
class SymMatrix {
public:
    explicit SymMatrix(std::size_t d) : d_(d), a_(d * d, 0.0) {
        if (d == 0) throw input_error("SymMatrix: dimension must be positive");
    }

    static SymMatrix from_rows(const std::vector<std::vector<double>>& rows,
                               double sym_tol = 1e-12) {
        const std::size_t d = rows.size();
        SymMatrix m(d);
        for (std::size_t i = 0; i < d; ++i) {
            if (rows[i].size() != d)
                throw input_error("SymMatrix: row " + std::to_string(i) + " has " +
                                  std::to_string(rows[i].size()) + " entries, expected " +
                                  std::to_string(d));
            for (std::size_t j = 0; j < d; ++j) {
                if (!std::isfinite(rows[i][j]))
                    throw input_error("SymMatrix: non-finite entry at (" + std::to_string(i) +
                                      "," + std::to_string(j) + ")");
                m.a_[i * d + j] = rows[i][j];
            }
        }
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i + 1; j < d; ++j) {
                const double diff = std::fabs(m.a_[i * d + j] - m.a_[j * d + i]);
                if (diff > sym_tol) {
                    std::ostringstream os;
                    os << "SymMatrix: asymmetry " << diff << " at (" << i << "," << j
                       << ") exceeds tolerance " << sym_tol;
                    throw input_error(os.str());
                }
                const double avg = 0.5 * (m.a_[i * d + j] + m.a_[j * d + i]);
                m.a_[i * d + j] = avg;
                m.a_[j * d + i] = avg;
            }
        return m;
    }

    static SymMatrix identity(std::size_t d) {
        SymMatrix m(d);
        for (std::size_t i = 0; i < d; ++i) m.a_[i * d + i] = 1.0;
        return m;
    }

    /// Rank-one matrix a a^T.
    static SymMatrix outer(const std::vector<double>& a) {
        SymMatrix m(a.size());
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < a.size(); ++j) m.a_[i * a.size() + j] = a[i] * a[j];
        return m;
    }

    std::size_t dim() const noexcept { return d_; }

    double operator()(std::size_t i, std::size_t j) const { return a_[i * d_ + j]; }

    /// Sets both (i,j) and (j,i).
    void set(std::size_t i, std::size_t j, double v) {
        a_[i * d_ + j] = v;
        a_[j * d_ + i] = v;
    }

    double trace_product(const SymMatrix& b) const {
        if (b.d_ != d_) throw input_error("trace_product: dimension mismatch");
        // tr(AB) = sum_ij A_ij B_ij for symmetric A, B
        double s = 0.0;
        for (std::size_t k = 0; k < a_.size(); ++k) s += a_[k] * b.a_[k];
        return s;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : a_) m = std::max(m, std::fabs(v));
        return m;
    }

    double min_eigenvalue() const { return eigenvalues().minCoeff(); }
    double max_eigenvalue() const { return eigenvalues().maxCoeff(); }

    /// Symmetric square root with eigenvalues clipped at 0.
    SymMatrix psd_sqrt() const {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen());
        if (es.info() != Eigen::Success)
            throw evaluation_error("psd_sqrt: eigendecomposition failed");
        Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        Eigen::MatrixXd r = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
        SymMatrix m(d_);
        for (std::size_t i = 0; i < d_; ++i)
            for (std::size_t j = 0; j < d_; ++j) m.a_[i * d_ + j] = 0.5 * (r(i, j) + r(j, i));
        return m;
    }

    SymMatrix operator+(const SymMatrix& b) const {
        if (b.d_ != d_) throw input_error("SymMatrix: dimension mismatch in +");
        SymMatrix m(d_);
        for (std::size_t k = 0; k < a_.size(); ++k) m.a_[k] = a_[k] + b.a_[k];
        return m;
    }

    SymMatrix operator-(const SymMatrix& b) const {
        if (b.d_ != d_) throw input_error("SymMatrix: dimension mismatch in -");
        SymMatrix m(d_);
        for (std::size_t k = 0; k < a_.size(); ++k) m.a_[k] = a_[k] - b.a_[k];
        return m;
    }

    SymMatrix operator*(double s) const {
        SymMatrix m(d_);
        for (std::size_t k = 0; k < a_.size(); ++k) m.a_[k] = a_[k] * s;
        return m;
    }

    Eigen::MatrixXd to_eigen() const {
        Eigen::MatrixXd e(d_, d_);
        for (std::size_t i = 0; i < d_; ++i)
            for (std::size_t j = 0; j < d_; ++j) e(i, j) = a_[i * d_ + j];
        return e;
    }

private:
    Eigen::VectorXd eigenvalues() const {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_eigen(),
                                                          Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success)
            throw evaluation_error("SymMatrix: eigendecomposition failed");
        return es.eigenvalues();
    }

    std::size_t d_;
    std::vector<double> a_;
};

inline SymMatrix operator*(double s, const SymMatrix& m) { return m * s; }

} // namespace gexpect
