#pragma once
// Deterministic interest-rate path: nodal values on a time grid, linear
// interpolation in between, constant extrapolation outside.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "olg/core/time_grid.hpp"

namespace olg {

class RatePath {
public:
    RatePath() = default;
    RatePath(TimeGrid grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
        if (static_cast<int>(values_.size()) != grid_.size())
            throw std::invalid_argument("RatePath: value count must equal M+1");
        for (double v : values_)
            if (!std::isfinite(v)) throw std::invalid_argument("RatePath: rates must be finite");
        build_cumulative();
    }

    static RatePath constant(const TimeGrid& grid, double r) {
        return RatePath(grid, std::vector<double>(static_cast<std::size_t>(grid.size()), r));
    }

    const TimeGrid& grid() const { return grid_; }
    const std::vector<double>& values() const { return values_; }
    double operator[](int j) const { return values_[static_cast<std::size_t>(j)]; }

    double at(double t) const {
        const auto [j, f] = grid_.locate(t);
        return (1.0 - f) * values_[static_cast<std::size_t>(j)] + f * values_[static_cast<std::size_t>(j) + 1];
    }

    /// Exact integral of the interpolant over [a, b] (a > b gives the negative).
    double integral(double a, double b) const { return primitive(b) - primitive(a); }

    double sup_norm() const {
        double s = 0.0;
        for (double v : values_) s = std::max(s, std::abs(v));
        return s;
    }

    /// Pointwise a*this + b*other; both paths must share the grid.
    RatePath axpby(double a, const RatePath& other, double b) const {
        check_same_grid(other);
        std::vector<double> v(values_.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = a * values_[i] + b * other.values_[i];
        return RatePath(grid_, std::move(v));
    }

    double distance(const RatePath& other) const {
        check_same_grid(other);
        double s = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i) s = std::max(s, std::abs(values_[i] - other.values_[i]));
        return s;
    }

    /// Sample this path onto another grid (interpolation/extrapolation rule).
    RatePath resampled(const TimeGrid& grid) const {
        std::vector<double> v(static_cast<std::size_t>(grid.size()));
        for (int j = 0; j <= grid.M(); ++j) v[static_cast<std::size_t>(j)] = at(grid.node(j));
        return RatePath(grid, std::move(v));
    }

private:
    void check_same_grid(const RatePath& o) const {
        if (o.values_.size() != values_.size() || o.grid_.t0() != grid_.t0() || o.grid_.L() != grid_.L())
            throw std::invalid_argument("RatePath: grids differ");
    }

    void build_cumulative() {
        cumulative_.assign(values_.size(), 0.0);
        const double h = grid_.dt();
        for (std::size_t j = 1; j < values_.size(); ++j)
            cumulative_[j] = cumulative_[j - 1] + 0.5 * h * (values_[j - 1] + values_[j]);
    }

    /// Integral of the interpolant from t0 to t.
    double primitive(double t) const {
        if (t <= grid_.t0()) return (t - grid_.t0()) * values_.front();
        if (t >= grid_.end()) return cumulative_.back() + (t - grid_.end()) * values_.back();
        const auto [j, f] = grid_.locate(t);
        const auto k = static_cast<std::size_t>(j);
        const double h = f * grid_.dt();
        const double rt = (1.0 - f) * values_[k] + f * values_[k + 1];
        return cumulative_[k] + 0.5 * h * (values_[k] + rt);
    }

    TimeGrid grid_;
    std::vector<double> values_;
    std::vector<double> cumulative_;
};

/// exp(integral over [t, T] of (r_s - delta) ds).
inline double discount_factor(const RatePath& r, double delta, double t, double T) {
    if (t > T) throw std::invalid_argument("discount_factor: requires t <= T");
    if (t == T) return 1.0;
    return std::exp(r.integral(t, T) - delta * (T - t));
}

}  // namespace olg
