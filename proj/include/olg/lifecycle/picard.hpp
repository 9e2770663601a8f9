#pragma once
// Fixed-point solver for the stochastic life-cycle problem. Optimal
// consumption is
//   c_t = (u1')^{-1}( lambda e^{int_t^L (r - delta)} E[u2'(w_L) | F_t] ),
// and wealth follows w_{j+1} = w_j + (r_j w_j + eta_j - c_j) dt. The solution
// map Theta sends a wealth ensemble to the wealth generated by the
// consumption it implies; its fixed point is the optimal wealth.
//
// Two schemes compute the fixed point.
//  - picard: iterate Theta directly (damped, halving the damping after three
//    consecutive contraction ratios >= 1). Theta is a contraction only for
//    short horizons; this scheme doubles as the contraction diagnostic.
//  - backward (default): given the current ensemble as training states, the
//    marginal value Y_t = E[u2'(w_L) | w_t, eta_t] is computed backwards in
//    time by regression, using the martingale property Y_j = E[Y_{j+1} | F_j]
//    with each path's next state re-simulated under the new consumption.
//    The resulting feedback rule is simulated forward to give the next
//    ensemble. The ensemble only supplies the regression points, so this
//    outer iteration contracts quickly at any horizon; its fixed point
//    satisfies the same first-order condition as the fixed point of Theta.
//
// Both schemes regress on the share of human wealth in total wealth,
// z = h eta / (w + h eta), and fit Y X^gamma2 with X = w + h eta: for CRRA
// utility and proportional income risk Y is homogeneous of degree -gamma2 in
// (w, eta), so Y X^gamma2 depends on z alone, and z lies in [0, 1] for
// solvent states.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "olg/core/ensemble.hpp"
#include "olg/core/income.hpp"
#include "olg/core/parallel.hpp"
#include "olg/core/rate_path.hpp"
#include "olg/core/utility.hpp"
#include "olg/lifecycle/deterministic.hpp"
#include "olg/lifecycle/regression.hpp"

namespace olg {

struct SolverSettings {
    // Both schemes update w <- theta T(w) + (1 - theta) w, with theta halved
    // (down to min_damping) after three consecutive contraction ratios >= 1.
    enum class Scheme { backward, picard };
    enum class InitialGuess { deterministic, constant };

    double tol_fix = -1.0;  // < 0: 1e-6 (1 + |mean w0|)
    int max_iter = 200;
    Scheme scheme = Scheme::backward;
    double damping = 1.0;
    double min_damping = 1e-3;
    InitialGuess initial_guess = InitialGuess::deterministic;
    EstimatorSpec estimator;
    unsigned threads = 1;
};

/// One cohort's life-cycle problem on grid [t0, t0 + L].
struct LifecycleProblem {
    UtilitySpec u1{2.0};
    UtilitySpec u2{2.0};
    DiscountSpec disc;
    IncomeModel income = IncomeModel::gbm(0.01, 0.1);
    Distribution initial_wealth = Distribution::point(10.0);
    std::optional<double> initial_wealth_mean;  // shift the sample to this mean
    TimeGrid grid{0.0, 60.0, 600};
    RatePath rate = RatePath::constant(TimeGrid(0.0, 60.0, 600), 0.03);
    int n_paths = 1000;
    std::uint64_t seed = 42;
    std::uint64_t cohort = 0;
    SolverSettings solver;

    void validate() const {
        disc.validate();
        income.validate();
        initial_wealth.validate("initial wealth law", false);
        if (n_paths < 1) throw std::invalid_argument("lifecycle: n_paths must be >= 1");
        if (rate.values().empty()) throw std::invalid_argument("lifecycle: rate path is empty");
        if (solver.max_iter < 1) throw std::invalid_argument("lifecycle: max_iter must be >= 1");
        if (!(solver.damping > 0.0 && solver.damping <= 1.0))
            throw std::invalid_argument("lifecycle: damping must be in (0, 1]");
        if (!(solver.min_damping > 0.0 && solver.min_damping <= solver.damping))
            throw std::invalid_argument("lifecycle: min_damping must be in (0, damping]");
        if (solver.estimator.method != EstimatorSpec::Method::regression)
            throw std::invalid_argument("lifecycle: the solver uses regression; nested Monte Carlo is an oracle only");
    }
};

/// Feedback consumption rule c_j(w, eta) = (u1')^{-1}(lambda D_j Y_j(w, eta))
/// with Y_j = X^{-gamma2} phi_j(z) for j < M and Y_M = u2'(w).
struct ConsumptionPolicy {
    UtilitySpec u1{2.0};
    UtilitySpec u2{2.0};
    double lambda = 0.0;
    std::vector<double> discount;  // e^{int_{t_j}^L (r - delta)} per node
    std::vector<double> human;     // human-wealth factor per node
    double floor = 1e-3;           // lower bound on X
    std::vector<RegressionFit> fits;               // phi_j, nodes 0..M-1
    std::vector<std::array<double, 2>> z_range;    // training range of z
    std::vector<std::array<double, 2>> phi_range;  // training range of the target

    int last_node() const { return static_cast<int>(discount.size()) - 1; }

    /// Total wealth (floored) and the clamped human-wealth share at node j.
    std::pair<double, double> state(int j, double w, double eta) const {
        const auto k = static_cast<std::size_t>(j);
        const double he = human[k] * eta;
        const double x = w + he;
        const double z = x > floor ? he / x : 1.0;
        if (k < z_range.size()) return {std::max(x, floor), std::clamp(z, z_range[k][0], z_range[k][1])};
        return {std::max(x, floor), z};
    }

    double marginal(int j, double w, double eta) const {
        if (j >= last_node()) return u2.marginal(w);
        const auto k = static_cast<std::size_t>(j);
        const auto [x, z] = state(j, w, eta);
        const double phi = std::clamp(fits[k].predict(z, z), phi_range[k][0], phi_range[k][1]);
        return phi * std::pow(x, -u2.gamma());
    }

    double operator()(int j, double w, double eta) const {
        return u1.inverse_marginal(lambda * discount[static_cast<std::size_t>(j)] * marginal(j, w, eta));
    }
};

struct LifecycleSolution {
    PathEnsemble ensemble;
    RatePath rate;
    int iterations = 0;
    std::vector<double> contraction_ratios;  // ||T(w_k) - T(w_{k-1})|| / ||w_k - w_{k-1}||
    std::vector<double> residuals;           // ||T(w_k) - w_k||
    std::vector<double> damping_history;
    bool converged = false;
    double kappa_used = 0.0;
    double tolerance = 0.0;
    int ridge_warnings = 0;
    std::string message;
};

namespace detail {

/// Human-wealth factor h_j: present value at t_j of income over [t_j, L] per
/// unit of current income (exact conditional means for GBM, no growth
/// otherwise), by the trapezoid rule.
inline std::vector<double> human_wealth_factor(const TimeGrid& grid, const RatePath& r, double mu) {
    const int M = grid.M();
    std::vector<double> h(static_cast<std::size_t>(M) + 1, 0.0);
    const double dt = grid.dt();
    for (int j = M - 1; j >= 0; --j) {
        const double growth = std::exp(-r.integral(grid.node(j), grid.node(j + 1)) + mu * dt);
        h[static_cast<std::size_t>(j)] = 0.5 * dt * (1.0 + growth) + growth * h[static_cast<std::size_t>(j) + 1];
    }
    return h;
}

/// Per-problem data shared by all iterations.
struct PicardContext {
    const LifecycleProblem* problem = nullptr;
    Matrix income;
    Vector w0;
    std::vector<double> r_node;    // r at each node of the cohort grid
    std::vector<double> discount;  // e^{int_{t_j}^{L} (r - delta)}
    std::vector<double> human;

    explicit PicardContext(const LifecycleProblem& p) : problem(&p) {
        const auto& g = p.grid;
        income = simulate_income(p.income, g, p.n_paths, p.seed, p.cohort, p.solver.threads);
        w0 = sample_initial_wealth(p.initial_wealth, p.n_paths, p.seed, p.cohort);
        if (p.initial_wealth_mean) w0.array() += *p.initial_wealth_mean - w0.mean();
        r_node.resize(static_cast<std::size_t>(g.size()));
        discount.resize(r_node.size());
        for (int j = 0; j <= g.M(); ++j) {
            r_node[static_cast<std::size_t>(j)] = p.rate.at(g.node(j));
            discount[static_cast<std::size_t>(j)] = discount_factor(p.rate, p.disc.delta, g.node(j), g.end());
        }
        human = human_wealth_factor(g, p.rate, p.income.is_gbm() ? p.income.gbm_params().mu : 0.0);
        share_estimator = p.solver.estimator;
        share_estimator.use_income = false;
    }

    EstimatorSpec share_estimator;  // one-variable basis in the share z

    ConsumptionPolicy empty_policy() const {
        const auto& p = *problem;
        ConsumptionPolicy policy;
        policy.u1 = p.u1;
        policy.u2 = p.u2;
        policy.lambda = p.disc.lambda;
        policy.discount = discount;
        policy.human = human;
        policy.floor = p.u2.eps();
        return policy;
    }
};

inline double sup_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

inline double inner(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

/// Wealth generated by a consumption array (explicit Euler, per path).
inline void wealth_from_consumption(const PicardContext& ctx, const Matrix& C, Matrix& W) {
    const auto& p = *ctx.problem;
    const int M = p.grid.M();
    const double dt = p.grid.dt();
    W.resize(C.rows(), C.cols());
    W.col(0) = ctx.w0;
    for (int j = 0; j < M; ++j)
        W.col(j + 1) = W.col(j) * (1.0 + ctx.r_node[static_cast<std::size_t>(j)] * dt) +
                       (ctx.income.col(j) - C.col(j)) * dt;
}

/// One application of Theta in the picard scheme: consumption implied by the
/// terminal wealth of W at every node, from in-sample regression fits on the
/// states of W. Estimates of E[u2'(w_L) | state] are clamped to the range of
/// u2'(w_L).
inline void consumption_image(const PicardContext& ctx, const Matrix& W, Matrix& C, int& ridge_warnings) {
    const auto& p = *ctx.problem;
    const int M = p.grid.M();
    const Eigen::Index n = W.rows();
    const bool scaled = p.solver.estimator.scale_by_total_wealth;
    const ConsumptionPolicy shape = ctx.empty_policy();
    Vector target(n);
    for (Eigen::Index i = 0; i < n; ++i) target[i] = p.u2.marginal(W(i, M));
    const double lo = target.minCoeff();
    const double hi = target.maxCoeff();

    C.resize(n, M + 1);
    std::vector<int> ridge(static_cast<std::size_t>(M), 0);
    parallel_for(static_cast<std::size_t>(M) + 1, p.solver.threads, [&](std::size_t jj) {
        const auto j = static_cast<Eigen::Index>(jj);
        const double scale_c = p.disc.lambda * ctx.discount[jj];
        if (static_cast<int>(jj) == M) {
            for (Eigen::Index i = 0; i < n; ++i) C(i, j) = p.u1.inverse_marginal(scale_c * target[i]);
            return;
        }
        const Vector w = W.col(j);
        const Vector eta = ctx.income.col(j);
        Vector fitted;
        Vector x = Vector::Ones(n);
        RegressionFit fit;
        if (scaled) {
            Vector z(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto [xi, zi] = shape.state(static_cast<int>(jj), w[i], eta[i]);
                x[i] = std::pow(xi, p.u2.gamma());
                z[i] = zi;
            }
            fit = fit_regression(z, z, target.cwiseProduct(x), ctx.share_estimator, false, &fitted);
        } else {
            fit = fit_regression(w, eta, target, p.solver.estimator, false, &fitted);
        }
        ridge[jj] = fit.ridge ? 1 : 0;
        for (Eigen::Index i = 0; i < n; ++i)
            C(i, j) = p.u1.inverse_marginal(scale_c * std::clamp(fitted[i] / x[i], lo, hi));
    });
    for (int r : ridge) ridge_warnings += r;
}

/// Feedback rule from the backward regression on the training states W:
/// for j = M-1, ..., 0, each path takes consumption from the current
/// estimate of Y_j, moves to its next state, and phi_j is refit to
/// Y_{j+1}(next state) X_j^gamma2. The first pass predicts Y_j by Y_{j+1} at
/// the current state; a second pass uses the fitted Y_j.
inline ConsumptionPolicy backward_policy(const PicardContext& ctx, const Matrix& W, int& ridge_warnings) {
    const auto& p = *ctx.problem;
    const int M = p.grid.M();
    const double dt = p.grid.dt();
    const Eigen::Index n = W.rows();
    const double g2 = p.u2.gamma();
    ConsumptionPolicy policy = ctx.empty_policy();
    policy.fits.resize(static_cast<std::size_t>(M));
    policy.z_range.assign(static_cast<std::size_t>(M), {0.0, 1.0});
    policy.phi_range.assign(static_cast<std::size_t>(M), {0.0, 0.0});
    Vector z(n), xg(n), target(n);
    for (int j = M - 1; j >= 0; --j) {
        const auto k = static_cast<std::size_t>(j);
        const double r_dt = ctx.r_node[k] * dt;
        const double scale_c = p.disc.lambda * ctx.discount[k];
        policy.z_range[k] = {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto [x, zi] = policy.state(j, W(i, j), ctx.income(i, j));
            xg[i] = std::pow(x, g2);
            z[i] = zi;
        }
        policy.z_range[k] = {z.minCoeff(), z.maxCoeff()};
        for (int pass = 0; pass < 2; ++pass) {
            parallel_for(static_cast<std::size_t>(n), p.solver.threads, [&](std::size_t pi) {
                const auto i = static_cast<Eigen::Index>(pi);
                const double w = W(i, j);
                const double eta = ctx.income(i, j);
                const double y = pass == 0 ? policy.marginal(j + 1, w, eta) : policy.marginal(j, w, eta);
                const double c = p.u1.inverse_marginal(scale_c * y);
                const double w_next = w * (1.0 + r_dt) + (eta - c) * dt;
                target[i] = policy.marginal(j + 1, w_next, ctx.income(i, j + 1)) * xg[i];
            });
            policy.fits[k] = fit_regression(z, z, target, ctx.share_estimator);
            policy.phi_range[k] = {target.minCoeff(), target.maxCoeff()};
        }
        if (policy.fits[k].ridge) ++ridge_warnings;
    }
    return policy;
}

/// Wealth and consumption generated by a feedback rule.
inline void simulate_policy(const PicardContext& ctx, const ConsumptionPolicy& policy, Matrix& W, Matrix& C) {
    const auto& p = *ctx.problem;
    const int M = p.grid.M();
    const double dt = p.grid.dt();
    const Eigen::Index n = ctx.w0.size();
    W.resize(n, M + 1);
    C.resize(n, M + 1);
    parallel_for(static_cast<std::size_t>(n), p.solver.threads, [&](std::size_t pi) {
        const auto i = static_cast<Eigen::Index>(pi);
        double w = ctx.w0[i];
        for (int j = 0; j <= M; ++j) {
            const double eta = ctx.income(i, j);
            const double c = policy(j, w, eta);
            W(i, j) = w;
            C(i, j) = c;
            if (j < M) w += (ctx.r_node[static_cast<std::size_t>(j)] * w + eta - c) * dt;
        }
    });
}

/// Starting ensemble. By default consumption follows c_t = k_t (w_t + h_t
/// eta_t), with k_t the consumption share of wealth in the noiseless
/// closed-form solution; with sigma = 0 this is that solution, and it keeps
/// every path solvent. Otherwise c = eta.
inline void initial_ensemble(const PicardContext& ctx, Matrix& W) {
    const auto& p = *ctx.problem;
    const int M = p.grid.M();
    const double dt = p.grid.dt();
    const double kappa = p.u1.kappa();
    const bool closed_form = p.solver.initial_guess == SolverSettings::InitialGuess::deterministic &&
                             p.u1.gamma() == p.u2.gamma();
    std::vector<double> share(static_cast<std::size_t>(M) + 1, 0.0);
    if (closed_form) {
        const double mu = p.income.is_gbm() ? p.income.gbm_params().mu : 0.0;
        const auto unit = solve_deterministic_crra(1.0, 0.0, mu, p.rate, p.disc, p.u1.gamma(), p.grid);
        for (std::size_t k = 0; k < share.size(); ++k)
            share[k] = unit.wealth[k] > 0.0 ? unit.consumption[k] / unit.wealth[k] : 0.0;
    }
    const Eigen::Index n = ctx.w0.size();
    W.resize(n, M + 1);
    parallel_for(static_cast<std::size_t>(n), p.solver.threads, [&](std::size_t pi) {
        const auto i = static_cast<Eigen::Index>(pi);
        double w = ctx.w0[i];
        for (int j = 0; j <= M; ++j) {
            const auto k = static_cast<std::size_t>(j);
            const double eta = ctx.income(i, j);
            const double c = closed_form ? std::clamp(share[k] * (w + ctx.human[k] * eta), 0.0, kappa)
                                         : std::min(eta, kappa);
            W(i, j) = w;
            if (j < M) w += (ctx.r_node[k] * w + eta - c) * dt;
        }
    });
}

}  // namespace detail

/// Consumption at node j implied by the terminal wealth of `ens` (a Picard
/// iterate): c = (u1')^{-1}(lambda D_j E[u2'(w_L) | state_j]), in [0, kappa].
/// Plain (unscaled) regression of u2'(w_L) on the state.
inline Vector consumption_from_terminal(const UtilitySpec& u1, const UtilitySpec& u2, const DiscountSpec& disc,
                                        const RatePath& r, const PathEnsemble& ens, const EstimatorSpec& est,
                                        int j) {
    const int M = ens.grid.M();
    if (j < 0 || j > M) throw std::out_of_range("consumption_from_terminal: node out of range");
    Vector target(ens.n_paths());
    for (int i = 0; i < ens.n_paths(); ++i) target[i] = u2.marginal(ens.wealth(i, M));
    Vector expected = estimate_conditional_expectation(est, ens, j, target);
    expected = expected.cwiseMax(target.minCoeff()).cwiseMin(target.maxCoeff());
    const double scale = disc.lambda * discount_factor(r, disc.delta, ens.grid.node(j), ens.grid.end());
    Vector c(expected.size());
    for (Eigen::Index i = 0; i < c.size(); ++i) c[i] = u1.inverse_marginal(scale * expected[i]);
    return c;
}

/// Wealth recursion w_{j+1} = w_j + (r_j w_j + eta_j - c_j) dt for every path.
inline Matrix wealth_recursion(const TimeGrid& grid, const RatePath& r, const Vector& w0, const Matrix& income,
                               const Matrix& consumption) {
    if (income.rows() != w0.size() || consumption.rows() != w0.size() || income.cols() != grid.size() ||
        consumption.cols() != grid.size())
        throw std::invalid_argument("wealth_recursion: array shapes do not match the grid");
    const double dt = grid.dt();
    Matrix W(w0.size(), grid.size());
    W.col(0) = w0;
    for (int j = 0; j < grid.M(); ++j)
        W.col(j + 1) = W.col(j) * (1.0 + r.at(grid.node(j)) * dt) + (income.col(j) - consumption.col(j)) * dt;
    return W;
}

/// One application of the solution map Theta: consumption from the terminal
/// wealth of `w_prev` at every node, then the wealth it generates.
struct ThetaMapResult {
    Matrix consumption;
    Matrix wealth;
};

inline ThetaMapResult theta_map_apply(const PathEnsemble& w_prev, const RatePath& r, const UtilitySpec& u1,
                                      const UtilitySpec& u2, const DiscountSpec& disc, const EstimatorSpec& est) {
    const int M = w_prev.grid.M();
    ThetaMapResult out;
    out.consumption.resize(w_prev.n_paths(), M + 1);
    for (int j = 0; j <= M; ++j) out.consumption.col(j) = consumption_from_terminal(u1, u2, disc, r, w_prev, est, j);
    out.wealth = wealth_recursion(w_prev.grid, r, w_prev.wealth.col(0), w_prev.income, out.consumption);
    return out;
}

/// Fixed-point iteration for the optimal wealth ensemble; see the header
/// comment. The returned ensemble is the image of the last iterate, so wealth
/// and consumption are exactly consistent.
inline LifecycleSolution picard_solve(const LifecycleProblem& problem) {
    problem.validate();
    const auto& s = problem.solver;
    detail::PicardContext ctx(problem);

    LifecycleSolution sol;
    sol.rate = problem.rate;
    sol.kappa_used = problem.u1.kappa();
    sol.tolerance = s.tol_fix > 0.0 ? s.tol_fix : 1e-6 * (1.0 + std::abs(ctx.w0.mean()));
    sol.ensemble.grid = problem.grid;
    sol.ensemble.seed = problem.seed;
    sol.ensemble.initial_wealth_law = problem.initial_wealth;

    Matrix W, C, G, G_prev, W_prev;
    if (problem.disc.lambda == 0.0) {
        // No bequest motive: consumption is (u1')^{-1}(0) = kappa whatever the
        // wealth, so one map application is the fixed point.
        C = Matrix::Constant(ctx.w0.size(), problem.grid.size(), problem.u1.kappa());
        detail::wealth_from_consumption(ctx, C, G);
        sol.iterations = 1;
        sol.residuals.push_back(0.0);
        sol.damping_history.push_back(1.0);
        sol.converged = true;
    } else {
        detail::initial_ensemble(ctx, W);
        double theta = s.damping;
        int bad_streak = 0;
        for (int k = 1; k <= s.max_iter; ++k) {
            if (s.scheme == SolverSettings::Scheme::backward) {
                const ConsumptionPolicy policy = detail::backward_policy(ctx, W, sol.ridge_warnings);
                detail::simulate_policy(ctx, policy, G, C);
            } else {
                detail::consumption_image(ctx, W, C, sol.ridge_warnings);
                detail::wealth_from_consumption(ctx, C, G);
            }
            const double res = detail::sup_abs(G - W);
            sol.iterations = k;
            sol.residuals.push_back(res);
            sol.damping_history.push_back(theta);
            if (k >= 2) {
                const double den = detail::sup_abs(W - W_prev);
                sol.contraction_ratios.push_back(den > 0.0 ? detail::sup_abs(G - G_prev) / den : 0.0);
            }
            if (!std::isfinite(res)) {
                sol.message = "iterates became non-finite";
                break;
            }
            if (res < sol.tolerance) {
                sol.converged = true;
                break;
            }
            if (!sol.contraction_ratios.empty() && sol.contraction_ratios.back() >= 1.0) {
                if (++bad_streak >= 3) {
                    theta = std::max(0.5 * theta, s.min_damping);
                    bad_streak = 0;
                }
            } else {
                bad_streak = 0;
            }
            W_prev = W;
            G_prev = G;
            W += theta * (G - W);
        }
        if (!sol.converged && sol.message.empty()) sol.message = "iteration limit reached";
    }

    sol.ensemble.income = std::move(ctx.income);
    sol.ensemble.wealth = std::move(G);
    sol.ensemble.consumption = std::move(C);
    return sol;
}

/// True when 0 <= c <= kappa at every (path, node).
inline bool consumption_within_bounds(const LifecycleSolution& sol) {
    const auto& c = sol.ensemble.consumption;
    return c.size() > 0 && c.minCoeff() >= 0.0 && c.maxCoeff() <= sol.kappa_used;
}

}  // namespace olg
