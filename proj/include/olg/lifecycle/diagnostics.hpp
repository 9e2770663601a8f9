#pragma once
// Diagnostics of life-cycle solutions: natural borrowing limits, the Euler
// equation, payoffs under perturbed consumption, rate sweeps, and the linear
// BSDE used as an oracle for the conditional-expectation machinery.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "olg/core/ensemble.hpp"
#include "olg/core/rate_path.hpp"
#include "olg/core/utility.hpp"
#include "olg/lifecycle/picard.hpp"
#include "olg/lifecycle/regression.hpp"

namespace olg {

// ---------------------------------------------------------------------------
// Natural borrowing limit

/// -eta/(r - mu) (1 - e^{-(r - mu)(L - t)}): the borrowing limit for GBM
/// income and constant r (-eta (L - t) when r = mu).
inline double gbm_borrowing_limit(double eta, double r, double mu, double t, double L) {
    const double a = r - mu;
    const double span = L - t;
    if (std::abs(a) * std::max(span, 1.0) < 1e-12) return -eta * span;
    return -eta / a * (1.0 - std::exp(-a * span));
}

/// Per-path natural borrowing limit at node j,
///   wbar_j = -int_{t_j}^{L} e^{-int_{t_j}^{s} r} E[eta_s | F_{t_j}] ds
/// by the trapezoid rule. GBM uses the exact conditional mean
/// eta_j e^{mu (s - t_j)}; other models regress the discounted income sum on
/// eta_j. The limit at j = M is zero.
inline Vector natural_borrowing_limit(const RatePath& r, const IncomeModel& model, const TimeGrid& grid,
                                      const Matrix& income, int j, const EstimatorSpec& est = {}) {
    const int M = grid.M();
    if (j < 0 || j > M) throw std::out_of_range("natural_borrowing_limit: node out of range");
    if (income.cols() != grid.size()) throw std::invalid_argument("natural_borrowing_limit: income/grid mismatch");
    const Eigen::Index n = income.rows();
    if (j == M) return Vector::Zero(n);
    if (model.is_gbm()) {
        const auto h = detail::human_wealth_factor(grid, r, model.gbm_params().mu);
        return -h[static_cast<std::size_t>(j)] * income.col(j);
    }
    // Discounted future income sum per path, then its regression on eta_j.
    const double dt = grid.dt();
    Vector sum = Vector::Zero(n);
    double disc = 1.0;
    for (int s = j; s <= M; ++s) {
        const double weight = (s == j || s == M) ? 0.5 * dt : dt;
        sum += weight * disc * income.col(s);
        if (s < M) disc *= std::exp(-r.integral(grid.node(s), grid.node(s + 1)));
    }
    EstimatorSpec spec = est;
    spec.method = EstimatorSpec::Method::regression;
    spec.use_wealth = false;
    spec.use_income = true;
    Vector fitted;
    const Vector eta = income.col(j);
    fit_regression(eta, eta, sum, spec, false, &fitted);
    return -fitted;
}

/// Borrowing limits at every node (paths x nodes).
inline Matrix natural_borrowing_limits(const RatePath& r, const IncomeModel& model, const TimeGrid& grid,
                                       const Matrix& income, const EstimatorSpec& est = {}) {
    Matrix out(income.rows(), grid.size());
    for (int j = 0; j <= grid.M(); ++j) out.col(j) = natural_borrowing_limit(r, model, grid, income, j, est);
    return out;
}

struct BorrowingLimitCheck {
    double threshold = 0.0;  // 1e-6 (1 + |mean w0|)
    std::size_t violations = 0;
    std::size_t total = 0;
    double fraction = 0.0;
};

/// Fraction of (path, node) pairs with w < wbar - threshold.
inline BorrowingLimitCheck check_borrowing_limit(const PathEnsemble& ens, const Matrix& limits) {
    if (limits.rows() != ens.wealth.rows() || limits.cols() != ens.wealth.cols())
        throw std::invalid_argument("check_borrowing_limit: shape mismatch");
    BorrowingLimitCheck out;
    out.threshold = 1e-6 * (1.0 + std::abs(ens.wealth.col(0).mean()));
    out.total = static_cast<std::size_t>(ens.wealth.size());
    out.violations = static_cast<std::size_t>((ens.wealth.array() < limits.array() - out.threshold).count());
    out.fraction = out.total ? static_cast<double>(out.violations) / static_cast<double>(out.total) : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Euler equation

/// Default Euler look-ahead: one year, capped at L/10 and floored at dt.
inline double euler_horizon(const TimeGrid& g) { return std::max(g.dt(), std::min(1.0, g.L() / 10.0)); }

struct EulerResidual {
    std::vector<double> t;         // nodes with t + horizon <= L
    std::vector<double> per_node;  // mean over paths of the absolute residual
    double mean = 0.0;
    double max = 0.0;
};

/// |u1'(c_t) / E[u1'(c_{t+h}) | F_t] - e^{int_t^{t+h} (r - delta)}| per path,
/// averaged over paths at each node. The conditional expectation is a
/// regression of u1'(c_{t+h}) / u1'(c_t) (u1'(c_t) is known at t), which
/// keeps the target near one.
inline EulerResidual euler_equation_residual(const LifecycleSolution& sol, const UtilitySpec& u1,
                                             const DiscountSpec& disc, double horizon,
                                             const EstimatorSpec& est = {}) {
    const auto& ens = sol.ensemble;
    const auto& grid = ens.grid;
    if (!(horizon > 0.0) || horizon > grid.L()) throw std::invalid_argument("euler_equation_residual: bad horizon");
    const int step = std::max(1, static_cast<int>(std::lround(horizon / grid.dt())));
    const Eigen::Index n = ens.n_paths();
    EulerResidual out;
    EstimatorSpec spec = est;
    spec.method = EstimatorSpec::Method::regression;
    for (int j = 0; j + step <= grid.M(); ++j) {
        const double target = std::exp(sol.rate.integral(grid.node(j), grid.node(j + step)) -
                                       disc.delta * (grid.node(j + step) - grid.node(j)));
        Vector ratio(n), mu_now(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            mu_now[i] = u1.marginal(ens.consumption(i, j));
            ratio[i] = u1.marginal(ens.consumption(i, j + step)) / mu_now[i];
        }
        Vector fitted;
        fit_regression(ens.wealth.col(j), ens.income.col(j), ratio, spec, false, &fitted);
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) acc += std::abs(1.0 / fitted[i] - target);
        out.t.push_back(grid.node(j));
        out.per_node.push_back(acc / static_cast<double>(n));
    }
    if (!out.per_node.empty()) {
        double s = 0.0;
        for (double v : out.per_node) s += v;
        out.mean = s / static_cast<double>(out.per_node.size());
        out.max = *std::max_element(out.per_node.begin(), out.per_node.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Payoff

/// Monte Carlo payoff: the mean over paths of
///   sum_j omega_j e^{-delta (t_j - t_0)} u1(c_j) + lambda e^{-delta L} u2(w_L)
/// minus penalty max(-w_L, 0)^2, with trapezoid weights omega_j.
inline double payoff_evaluate(const PathEnsemble& ens, const DiscountSpec& disc, const UtilitySpec& u1,
                              const UtilitySpec& u2, double penalty = 0.0) {
    const auto& grid = ens.grid;
    const auto weights = trapezoid_weights(grid);
    const int M = grid.M();
    const Eigen::Index n = ens.consumption.rows();
    if (n == 0) throw std::invalid_argument("payoff_evaluate: empty ensemble");
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double v = 0.0;
        for (int j = 0; j <= M; ++j)
            v += weights[static_cast<std::size_t>(j)] * std::exp(-disc.delta * (grid.node(j) - grid.t0())) *
                 u1.value(ens.consumption(i, j));
        const double wl = ens.wealth(i, M);
        if (disc.lambda > 0.0) v += disc.lambda * std::exp(-disc.delta * grid.L()) * u2.value(wl);
        if (penalty > 0.0 && wl < 0.0) v -= penalty * wl * wl;
        total += v;
    }
    return total / static_cast<double>(n);
}

/// The solution's ensemble with consumption c_j (1 + xi_j), clamped to
/// [0, kappa], and wealth recomputed on the same income paths.
inline PathEnsemble perturbed_ensemble(const LifecycleSolution& sol, const std::vector<double>& xi) {
    const auto& ens = sol.ensemble;
    if (static_cast<int>(xi.size()) != ens.grid.size())
        throw std::invalid_argument("perturbed_ensemble: one factor per node expected");
    PathEnsemble out = ens;
    for (int j = 0; j < ens.grid.size(); ++j)
        out.consumption.col(j) =
            (ens.consumption.col(j) * (1.0 + xi[static_cast<std::size_t>(j)])).cwiseMax(0.0).cwiseMin(sol.kappa_used);
    out.wealth = wealth_recursion(ens.grid, sol.rate, ens.wealth.col(0), ens.income, out.consumption);
    return out;
}

// ---------------------------------------------------------------------------
// Rate sweep

struct SweepRow {
    double r = 0.0;
    double mean_wealth = 0.0;
    double std_error = 0.0;
    bool converged = false;
    int iterations = 0;
};

struct SweepResult {
    double t_probe = 0.0;
    std::vector<SweepRow> rows;
    bool increasing_over_positive = true;  // strict increase across rows with r > 0
};

/// Mean wealth at t_probe (linear interpolation between nodes) with its
/// standard error.
inline std::pair<double, double> mean_wealth_at(const PathEnsemble& ens, double t) {
    const auto [j, frac] = ens.grid.locate(t);
    Vector v = ens.wealth.col(j);
    if (frac > 0.0 && j < ens.grid.M()) v = (1.0 - frac) * v + frac * ens.wealth.col(j + 1);
    const double mean = v.mean();
    const double n = static_cast<double>(v.size());
    const double se = v.size() > 1 ? std::sqrt((v.array() - mean).square().sum() / (n - 1.0) / n) : 0.0;
    return {mean, se};
}

/// Solves the problem at each constant rate and records the mean wealth at
/// t_probe. Non-converged rows are flagged, not dropped.
inline SweepResult expected_wealth_sweep(const std::vector<double>& r_values, double t_probe,
                                         const LifecycleProblem& base) {
    if (t_probe < base.grid.t0() || t_probe > base.grid.end())
        throw std::out_of_range("expected_wealth_sweep: probe time outside the grid");
    SweepResult out;
    out.t_probe = t_probe;
    for (double r : r_values) {
        LifecycleProblem p = base;
        p.rate = RatePath::constant(p.grid, r);
        const auto sol = picard_solve(p);
        const auto [mean, se] = mean_wealth_at(sol.ensemble, t_probe);
        out.rows.push_back({r, mean, se, sol.converged, sol.iterations});
    }
    const SweepRow* prev = nullptr;
    for (const auto& row : out.rows) {
        if (row.r <= 0.0) continue;
        if (prev && !(row.r > prev->r && row.mean_wealth > prev->mean_wealth)) out.increasing_over_positive = false;
        prev = &row;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Contraction diagnostics

struct ContractionCheck {
    std::vector<double> ratios;  // ratio at iteration k = index + 2
    double max_ratio = 0.0;
    bool below_one = false;
    bool nonincreasing = false;  // from iteration 3 on, up to rounding
    bool converged = false;
    bool passed() const { return below_one && nonincreasing && converged; }
};

/// Checks the recorded Picard ratios ||T w_k - T w_{k-1}|| / ||w_k - w_{k-1}||:
/// all below one and nonincreasing after iteration 2. Once the differences
/// approach rounding level a ratio may rise by the rounding allowance
/// (M+1) u (||w|| + ||T w||) / ||w_k - w_{k-1}|| with u the unit roundoff.
inline ContractionCheck contraction_diagnostics(const LifecycleSolution& sol) {
    ContractionCheck out;
    out.ratios = sol.contraction_ratios;
    out.converged = sol.converged;
    if (out.ratios.empty()) {
        out.below_one = out.nonincreasing = sol.converged;
        return out;
    }
    out.max_ratio = *std::max_element(out.ratios.begin(), out.ratios.end());
    out.below_one = std::all_of(out.ratios.begin(), out.ratios.end(),
                                [](double q) { return std::isfinite(q) && q < 1.0; });
    const double scale = sol.ensemble.wealth.size() ? sol.ensemble.wealth.cwiseAbs().maxCoeff() : 0.0;
    const double u = std::numeric_limits<double>::epsilon();
    const double nodes = static_cast<double>(sol.ensemble.grid.size());
    out.nonincreasing = true;
    for (std::size_t i = 1; i < out.ratios.size(); ++i) {
        // ratios[i] belongs to iteration k = i + 2; its denominator is
        // theta_{k-1} times the residual of iteration k - 1.
        const double step = sol.damping_history[i] * sol.residuals[i];
        const double allowance = step > 0.0 ? nodes * u * 2.0 * scale / step : 0.0;
        if (out.ratios[i] > out.ratios[i - 1] + allowance) out.nonincreasing = false;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Linear BSDE

/// y_{t_j} = e^{int_{t_j}^{L} r} E[g | F_{t_j}] for the linear BSDE
/// dy = -r y dt + z dB with y_L = g (deterministic r).
inline Vector linear_bsde_value(const RatePath& r, const Vector& g, const PathEnsemble& ens, int j,
                                const EstimatorSpec& est = {}) {
    const double growth = discount_factor(r, 0.0, ens.grid.node(j), ens.grid.end());
    return growth * estimate_conditional_expectation(est, ens, j, g);
}

struct MartingaleCheck {
    std::vector<double> mean;       // mean of e^{int_0^t r} y_t per node
    std::vector<double> std_error;  // SE of the difference from node 0
    double worst_z = 0.0;           // max |mean_t - mean_0| / SE
    bool passed = false;            // worst_z <= 3 (or differences below round-off)
};

/// Checks that the rescaled linear-BSDE value e^{int_0^t r} y_t (which
/// removes the deterministic drift) has constant mean across nodes within 3
/// standard errors.
inline MartingaleCheck linear_bsde_martingale_check(const RatePath& r, const Vector& g, const PathEnsemble& ens,
                                                    const EstimatorSpec& est = {}) {
    const auto& grid = ens.grid;
    const Eigen::Index n = g.size();
    MartingaleCheck out;
    Vector base;
    bool ok = true;
    for (int j = 0; j <= grid.M(); ++j) {
        const Vector y = linear_bsde_value(r, g, ens, j, est) * std::exp(r.integral(grid.t0(), grid.node(j)));
        if (j == 0) base = y;
        const Vector d = y - base;
        const double dm = d.mean();
        const double se =
            n > 1 ? std::sqrt((d.array() - dm).square().sum() / static_cast<double>(n - 1) / static_cast<double>(n))
                  : 0.0;
        out.mean.push_back(y.mean());
        out.std_error.push_back(se);
        const double roundoff = 1e-12 * std::max(1.0, std::abs(base.mean()));
        if (std::abs(dm) > roundoff) {
            const double z = se > 0.0 ? std::abs(dm) / se : std::numeric_limits<double>::infinity();
            out.worst_z = std::max(out.worst_z, z);
            if (z > 3.0) ok = false;
        }
    }
    out.passed = ok;
    return out;
}

}  // namespace olg
