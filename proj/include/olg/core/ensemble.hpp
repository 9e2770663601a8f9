#pragma once
// Path ensembles and discounting parameters shared by all solvers.

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "olg/core/income.hpp"
#include "olg/core/time_grid.hpp"

namespace olg {

/// Time preference delta and bequest intensity lambda.
struct DiscountSpec {
    double delta = 0.02;
    double lambda = 100.0;

    void validate() const {
        if (!std::isfinite(delta) || delta < 0.0) throw std::invalid_argument("discount: delta must be >= 0");
        if (!std::isfinite(lambda) || lambda < 0.0) throw std::invalid_argument("discount: lambda must be >= 0");
    }
};

/// N paths x (M+1) nodes of income, wealth and consumption.
struct PathEnsemble {
    TimeGrid grid;
    std::uint64_t seed = 0;
    Distribution initial_wealth_law = Distribution::point(0.0);
    Matrix income;
    Matrix wealth;
    Matrix consumption;

    int n_paths() const { return static_cast<int>(income.rows()); }
};

/// Column-wise sample mean and standard error of the mean.
inline Vector column_means(const Matrix& m) { return m.colwise().mean().transpose(); }

inline Vector column_std_errors(const Matrix& m) {
    const auto n = static_cast<double>(m.rows());
    Vector se(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (m.rows() < 2) {
            se[j] = 0.0;
            continue;
        }
        const double mean = m.col(j).mean();
        const double var = (m.col(j).array() - mean).square().sum() / (n - 1.0);
        se[j] = std::sqrt(var / n);
    }
    return se;
}

}  // namespace olg
