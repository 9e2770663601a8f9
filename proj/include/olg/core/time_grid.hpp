#pragma once
// Uniform time grid t_j = t0 + j*L/M, j = 0..M.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace olg {

class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double t0, double L, int M) : t0_(t0), L_(L), M_(M) {
        if (!std::isfinite(t0) || !std::isfinite(L) || !(L > 0.0))
            throw std::invalid_argument("TimeGrid: lifespan L must be finite and > 0");
        if (M < 1) throw std::invalid_argument("TimeGrid: step count M must be >= 1");
    }

    double t0() const { return t0_; }
    double L() const { return L_; }
    int M() const { return M_; }
    double dt() const { return L_ / M_; }
    double end() const { return t0_ + L_; }
    int size() const { return M_ + 1; }

    /// Node t_j; the last node is exactly t0 + L.
    double node(int j) const { return j == M_ ? t0_ + L_ : t0_ + L_ * (static_cast<double>(j) / M_); }

    std::vector<double> nodes() const {
        std::vector<double> out(static_cast<std::size_t>(M_) + 1);
        for (int j = 0; j <= M_; ++j) out[static_cast<std::size_t>(j)] = node(j);
        return out;
    }

    /// Segment index j and fraction in [0,1] with t = (1-f) t_j + f t_{j+1};
    /// times outside the grid are clamped to the end nodes.
    std::pair<int, double> locate(double t) const {
        if (t <= t0_) return {0, 0.0};
        if (t >= end()) return {M_ - 1, 1.0};
        const double x = (t - t0_) / dt();
        int j = std::min(static_cast<int>(std::floor(x)), M_ - 1);
        return {j, std::clamp(x - j, 0.0, 1.0)};
    }

    /// Same grid shifted to start at t0.
    TimeGrid shifted_to(double t0) const { return TimeGrid(t0, L_, M_); }

private:
    double t0_ = 0.0;
    double L_ = 1.0;
    int M_ = 1;
};

/// Composite trapezoid weights (dt/2, dt, ..., dt, dt/2) for a grid.
inline std::vector<double> trapezoid_weights(const TimeGrid& grid) {
    std::vector<double> w(static_cast<std::size_t>(grid.size()), grid.dt());
    w.front() *= 0.5;
    w.back() *= 0.5;
    return w;
}

}  // namespace olg
