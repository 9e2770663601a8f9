#pragma once
// Closed-form benchmark for the noiseless life-cycle problem with CRRA
// utility and exponential income eta_t = eta0 e^{mu t}:
//   Xi_L    = int_0^L e^{int_s^L r} eta_s ds
//   Theta_L = int_0^L e^{int_s^L r} lambda^{-1/gamma} e^{-(1/gamma) int_s^L (r - delta)} ds
//   w_L     = (e^{int_0^L r} w0 + Xi_L) / (1 + Theta_L)
//   c_t     = lambda^{-1/gamma} e^{-(1/gamma) int_t^L (r - delta)} w_L
// Integrals use the composite trapezoid rule on the solution grid, so the
// variation-of-constants wealth hits w_L exactly at the last node.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "olg/core/ensemble.hpp"
#include "olg/core/rate_path.hpp"
#include "olg/core/time_grid.hpp"
#include "olg/core/utility.hpp"

namespace olg {

struct DeterministicSolution {
    TimeGrid grid;
    std::vector<double> income;
    std::vector<double> consumption;
    std::vector<double> wealth;
    double terminal_wealth = 0.0;
    double Xi_L = 0.0;
    double Theta_L = 0.0;
};

namespace detail {

/// R_j = int_{t0}^{t_j} r for every node of `grid`.
inline std::vector<double> cumulative_rate(const RatePath& r, const TimeGrid& grid) {
    std::vector<double> R(static_cast<std::size_t>(grid.size()));
    for (int j = 0; j <= grid.M(); ++j) R[static_cast<std::size_t>(j)] = r.integral(grid.t0(), grid.node(j));
    return R;
}

}  // namespace detail

/// Wealth from the budget equation by variation of constants (trapezoid),
/// for a given income and consumption profile.
inline std::vector<double> deterministic_wealth(const TimeGrid& grid, const RatePath& r, double w0,
                                                const std::vector<double>& income,
                                                const std::vector<double>& consumption) {
    const auto R = detail::cumulative_rate(r, grid);
    const double h = grid.dt();
    std::vector<double> w(R.size());
    double acc = 0.0;  // int_0^{t_j} e^{-R_s} (eta_s - c_s) ds
    w[0] = w0;
    for (std::size_t j = 1; j < R.size(); ++j) {
        acc += 0.5 * h * (std::exp(-R[j - 1]) * (income[j - 1] - consumption[j - 1]) +
                          std::exp(-R[j]) * (income[j] - consumption[j]));
        w[j] = std::exp(R[j]) * (w0 + acc);
    }
    return w;
}

inline DeterministicSolution solve_deterministic_crra(double w0, double eta0, double mu, const RatePath& r,
                                                      const DiscountSpec& disc, double gamma,
                                                      const TimeGrid& grid) {
    if (!(gamma > 0.0)) throw std::invalid_argument("solve_deterministic_crra: gamma must be > 0");
    if (!(disc.lambda > 0.0)) throw std::invalid_argument("solve_deterministic_crra: lambda must be > 0");
    disc.validate();

    const auto R = detail::cumulative_rate(r, grid);
    const int M = grid.M();
    const double RL = R.back();
    const double h = grid.dt();
    const double scale = std::pow(disc.lambda, -1.0 / gamma);

    DeterministicSolution sol;
    sol.grid = grid;
    sol.income.resize(R.size());
    std::vector<double> g(R.size());  // c_t / w_L
    for (int j = 0; j <= M; ++j) {
        const auto k = static_cast<std::size_t>(j);
        const double age = grid.node(j) - grid.t0();
        sol.income[k] = eta0 * std::exp(mu * age);
        g[k] = scale * std::exp(-(RL - R[k] - disc.delta * (grid.L() - age)) / gamma);
    }
    for (int j = 0; j <= M; ++j) {
        const auto k = static_cast<std::size_t>(j);
        const double wt = (j == 0 || j == M) ? 0.5 * h : h;
        const double growth = std::exp(RL - R[k]);
        sol.Xi_L += wt * growth * sol.income[k];
        sol.Theta_L += wt * growth * g[k];
    }
    if (!(1.0 + sol.Theta_L > 0.0)) throw std::logic_error("solve_deterministic_crra: 1 + Theta_L must be > 0");

    sol.terminal_wealth = (std::exp(RL) * w0 + sol.Xi_L) / (1.0 + sol.Theta_L);
    sol.consumption.resize(R.size());
    for (std::size_t k = 0; k < R.size(); ++k) sol.consumption[k] = g[k] * sol.terminal_wealth;
    sol.wealth = deterministic_wealth(grid, r, w0, sol.income, sol.consumption);
    return sol;
}

/// Same income and grid, different consumption; wealth recomputed from the budget.
inline DeterministicSolution with_consumption(const DeterministicSolution& base, const RatePath& r,
                                              std::vector<double> consumption) {
    DeterministicSolution out = base;
    out.consumption = std::move(consumption);
    out.wealth = deterministic_wealth(base.grid, r, base.wealth.front(), base.income, out.consumption);
    out.terminal_wealth = out.wealth.back();
    return out;
}

/// Trapezoid value of int_0^L e^{-delta s} u1(c_s) ds + lambda e^{-delta L} u2(w_L).
inline double deterministic_payoff(const DeterministicSolution& sol, const DiscountSpec& disc,
                                   const UtilitySpec& u1, const UtilitySpec& u2) {
    const auto& grid = sol.grid;
    const auto w = trapezoid_weights(grid);
    double total = 0.0;
    for (int j = 0; j <= grid.M(); ++j) {
        const auto k = static_cast<std::size_t>(j);
        total += w[k] * std::exp(-disc.delta * (grid.node(j) - grid.t0())) * u1.value(sol.consumption[k]);
    }
    if (disc.lambda > 0.0) total += disc.lambda * std::exp(-disc.delta * grid.L()) * u2.value(sol.terminal_wealth);
    return total;
}

}  // namespace olg
