#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "gexpect/errors.hpp"

namespace gexpect {

/// Piecewise-linear function on a strictly increasing grid with constant
/// continuation outside it. extrapolation_bound declares how far from the
/// origin the constant continuation may be trusted; the one-step operator
/// checks the diffusion's tail mass against it.
class ValueFunction1D {
public:
    ValueFunction1D(std::vector<double> grid, std::vector<double> values,
                    double extrapolation_bound = 0.0)
        : grid_(std::move(grid)), values_(std::move(values)) {
        if (grid_.size() < 2) throw input_error("ValueFunction1D: need at least 2 grid points");
        if (values_.size() != grid_.size())
            throw input_error("ValueFunction1D: grid/values size mismatch");
        for (std::size_t i = 1; i < grid_.size(); ++i)
            if (!(grid_[i] > grid_[i - 1]))
                throw input_error("ValueFunction1D: grid must be strictly increasing");
        for (double v : values_)
            if (!std::isfinite(v))
                throw evaluation_error("ValueFunction1D: non-finite value on grid");
        bound_ = extrapolation_bound > 0.0
                     ? extrapolation_bound
                     : std::max(std::fabs(grid_.front()), std::fabs(grid_.back()));
        h_ = (grid_.back() - grid_.front()) / static_cast<double>(grid_.size() - 1);
        uniform_ = true;
        for (std::size_t i = 1; i < grid_.size(); ++i)
            if (std::fabs(grid_[i] - grid_[i - 1] - h_) > 1e-9 * std::max(1.0, std::fabs(h_))) {
                uniform_ = false;
                break;
            }
    }

    static ValueFunction1D uniform(double lo, double hi, std::size_t n,
                                   const std::function<double(double)>& f) {
        if (n < 2) throw input_error("ValueFunction1D: need at least 2 grid points");
        if (!(hi > lo)) throw input_error("ValueFunction1D: hi must exceed lo");
        std::vector<double> g(n), v(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double frac = static_cast<double>(i) / static_cast<double>(n - 1);
            g[i] = lo + (hi - lo) * frac;
            v[i] = f(g[i]);
        }
        g.front() = lo;
        g.back() = hi;
        return ValueFunction1D(std::move(g), std::move(v));
    }

    double operator()(double x) const {
        if (x <= grid_.front()) return values_.front();
        if (x >= grid_.back()) return values_.back();
        std::size_t i;
        if (uniform_) {
            i = static_cast<std::size_t>((x - grid_.front()) / h_);
            if (i >= grid_.size() - 1) i = grid_.size() - 2;
            // guard against rounding at cell edges
            if (x < grid_[i]) --i;
            else if (x > grid_[i + 1]) ++i;
        } else {
            i = static_cast<std::size_t>(std::upper_bound(grid_.begin(), grid_.end(), x) -
                                         grid_.begin()) - 1;
            if (i >= grid_.size() - 1) i = grid_.size() - 2;
        }
        const double w = (x - grid_[i]) / (grid_[i + 1] - grid_[i]);
        return values_[i] + w * (values_[i + 1] - values_[i]);
    }

    const std::vector<double>& grid() const noexcept { return grid_; }
    const std::vector<double>& values() const noexcept { return values_; }
    double lo() const noexcept { return grid_.front(); }
    double hi() const noexcept { return grid_.back(); }
    double extrapolation_bound() const noexcept { return bound_; }
    bool is_uniform() const noexcept { return uniform_; }
    double spacing() const noexcept { return h_; }

private:
    std::vector<double> grid_;
    std::vector<double> values_;
    double bound_;
    double h_;
    bool uniform_;
};

/// Bilinear interpolation on a uniform tensor grid, clamped outside.
/// values are x-major: value(i,j) = values[i * ny + j].
class ValueFunction2D {
public:
    ValueFunction2D(double lo_x, double hi_x, std::size_t nx, double lo_y, double hi_y,
                    std::size_t ny, std::vector<double> values)
        : lox_(lo_x), hix_(hi_x), loy_(lo_y), hiy_(hi_y), nx_(nx), ny_(ny),
          values_(std::move(values)) {
        if (nx_ < 2 || ny_ < 2) throw input_error("ValueFunction2D: need at least 2x2 points");
        if (!(hix_ > lox_) || !(hiy_ > loy_))
            throw input_error("ValueFunction2D: empty axis range");
        if (values_.size() != nx_ * ny_)
            throw input_error("ValueFunction2D: values size mismatch");
        for (double v : values_)
            if (!std::isfinite(v))
                throw evaluation_error("ValueFunction2D: non-finite value on grid");
        hx_ = (hix_ - lox_) / static_cast<double>(nx_ - 1);
        hy_ = (hiy_ - loy_) / static_cast<double>(ny_ - 1);
    }

    static ValueFunction2D uniform(double lo_x, double hi_x, std::size_t nx, double lo_y,
                                   double hi_y, std::size_t ny,
                                   const std::function<double(double, double)>& f) {
        std::vector<double> vals(nx * ny);
        for (std::size_t i = 0; i < nx; ++i) {
            const double x = lo_x + (hi_x - lo_x) * static_cast<double>(i) /
                                        static_cast<double>(nx - 1);
            for (std::size_t j = 0; j < ny; ++j) {
                const double y = lo_y + (hi_y - lo_y) * static_cast<double>(j) /
                                            static_cast<double>(ny - 1);
                vals[i * ny + j] = f(x, y);
            }
        }
        return ValueFunction2D(lo_x, hi_x, nx, lo_y, hi_y, ny, std::move(vals));
    }

    double operator()(double x, double y) const {
        const double cx = std::min(std::max(x, lox_), hix_);
        const double cy = std::min(std::max(y, loy_), hiy_);
        std::size_t i = static_cast<std::size_t>((cx - lox_) / hx_);
        std::size_t j = static_cast<std::size_t>((cy - loy_) / hy_);
        if (i >= nx_ - 1) i = nx_ - 2;
        if (j >= ny_ - 1) j = ny_ - 2;
        const double u = (cx - (lox_ + hx_ * static_cast<double>(i))) / hx_;
        const double v = (cy - (loy_ + hy_ * static_cast<double>(j))) / hy_;
        const double v00 = values_[i * ny_ + j], v01 = values_[i * ny_ + j + 1];
        const double v10 = values_[(i + 1) * ny_ + j], v11 = values_[(i + 1) * ny_ + j + 1];
        return (1.0 - u) * ((1.0 - v) * v00 + v * v01) + u * ((1.0 - v) * v10 + v * v11);
    }

    std::size_t nx() const noexcept { return nx_; }
    std::size_t ny() const noexcept { return ny_; }
    double lo_x() const noexcept { return lox_; }
    double hi_x() const noexcept { return hix_; }
    double lo_y() const noexcept { return loy_; }
    double hi_y() const noexcept { return hiy_; }
    const std::vector<double>& values() const noexcept { return values_; }

private:
    double lox_, hix_, loy_, hiy_;
    std::size_t nx_, ny_;
    std::vector<double> values_;
    double hx_, hy_;
};

} // namespace gexpect
