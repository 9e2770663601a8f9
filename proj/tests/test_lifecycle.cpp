#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "olg/lifecycle/deterministic.hpp"
#include "olg/lifecycle/diagnostics.hpp"
#include "olg/lifecycle/picard.hpp"
#include "olg/lifecycle/regression.hpp"

using namespace olg;

namespace {

DiscountSpec baseline_discount() { return DiscountSpec{0.02, 100.0}; }

LifecycleProblem small_problem(double L = 5.0, int M = 50, int N = 400, double sigma = 0.1) {
    LifecycleProblem p;
    p.grid = TimeGrid(0.0, L, M);
    p.rate = RatePath::constant(p.grid, 0.03);
    p.income = IncomeModel::gbm(0.01, sigma);
    p.n_paths = N;
    return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Deterministic closed form

TEST(Deterministic, BaselineShape) {
    const TimeGrid g(0.0, 60.0, 600);
    const auto sol = solve_deterministic_crra(10.0, 1.0, 0.01, RatePath::constant(g, 0.03), baseline_discount(), 2.0, g);
    EXPECT_GT(sol.wealth.back(), 0.0);
    EXPECT_NEAR(sol.wealth.back(), sol.terminal_wealth, 1e-3 * sol.terminal_wealth);
    for (std::size_t k = 1; k < sol.consumption.size(); ++k) EXPECT_GT(sol.consumption[k], sol.consumption[k - 1]);
    EXPECT_GT(*std::max_element(sol.wealth.begin(), sol.wealth.end()), sol.wealth.front());
}

TEST(Deterministic, ConsumptionGrowsAtEulerRate) {
    // CRRA Euler equation: c_t / c_0 = e^{(r - delta) t / gamma}.
    const TimeGrid g(0.0, 60.0, 600);
    const auto sol = solve_deterministic_crra(10.0, 1.0, 0.01, RatePath::constant(g, 0.03), baseline_discount(), 2.0, g);
    for (int j = 0; j <= 600; j += 60)
        EXPECT_NEAR(sol.consumption[static_cast<std::size_t>(j)] / sol.consumption[0], std::exp(0.005 * g.node(j)),
                    1e-12);
}

TEST(Deterministic, LogUtilityNoIncome) {
    const TimeGrid g(0.0, 60.0, 600);
    const auto sol = solve_deterministic_crra(10.0, 0.0, 0.0, RatePath::constant(g, 0.0), DiscountSpec{0.0, 1.0}, 1.0, g);
    for (double c : sol.consumption) EXPECT_NEAR(c, 10.0 / 61.0, 1e-12);
    EXPECT_NEAR(sol.terminal_wealth, 10.0 / 61.0, 1e-12);
    EXPECT_NEAR(sol.wealth.back(), 10.0 / 61.0, 1e-12);
}

TEST(Deterministic, EmptyEconomy) {
    const TimeGrid g(0.0, 60.0, 600);
    const auto sol = solve_deterministic_crra(0.0, 0.0, 0.01, RatePath::constant(g, 0.03), baseline_discount(), 2.0, g);
    for (std::size_t k = 0; k < sol.wealth.size(); ++k) {
        EXPECT_EQ(sol.wealth[k], 0.0);
        EXPECT_EQ(sol.consumption[k], 0.0);
    }
}

TEST(Deterministic, RefinementIsFirstOrderOrBetter) {
    auto at = [](int M) {
        const TimeGrid g(0.0, 60.0, M);
        return solve_deterministic_crra(10.0, 1.0, 0.01, RatePath::constant(g, 0.03), baseline_discount(), 2.0, g);
    };
    const auto a = at(300), b = at(600), c = at(1200);
    const double d1 = std::abs(a.consumption[0] - b.consumption[0]);
    const double d2 = std::abs(b.consumption[0] - c.consumption[0]);
    EXPECT_LT(d1, 0.2 * 1.0);  // O(dt) with dt = 0.2
    EXPECT_LT(d2, 0.6 * d1);
    EXPECT_LT(std::abs(b.terminal_wealth - c.terminal_wealth), 0.1);
}

TEST(Deterministic, PayoffOfUnitLogConsumptionIsZero) {
    const TimeGrid g(0.0, 7.0, 70);
    auto sol = solve_deterministic_crra(1.0, 1.0, 0.0, RatePath::constant(g, 0.0), DiscountSpec{0.0, 1.0}, 1.0, g);
    sol = with_consumption(sol, RatePath::constant(g, 0.0), std::vector<double>(sol.consumption.size(), 1.0));
    EXPECT_NEAR(deterministic_payoff(sol, DiscountSpec{0.0, 0.0}, UtilitySpec(1.0), UtilitySpec(1.0)), 0.0, 1e-14);
}

TEST(Deterministic, ClosedFormBeatsBumps) {
    const TimeGrid g(0.0, 60.0, 600);
    const auto r = RatePath::constant(g, 0.03);
    const auto sol = solve_deterministic_crra(10.0, 1.0, 0.01, r, baseline_discount(), 2.0, g);
    const UtilitySpec u(2.0);
    const double base = deterministic_payoff(sol, baseline_discount(), u, u);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unit(-0.1, 0.1);
    for (int k = 0; k < 20; ++k) {
        const double a = unit(rng);
        std::vector<double> c = sol.consumption;
        for (double& v : c) v *= 1.0 + a;
        EXPECT_LT(deterministic_payoff(with_consumption(sol, r, c), baseline_discount(), u, u), base);
    }
}

// ---------------------------------------------------------------------------
// Regression

TEST(Regression, ConstantTargetIsReproduced) {
    const auto p = small_problem();
    const auto sol = picard_solve(p);
    const Vector target = Vector::Constant(p.n_paths, 3.25);
    const Vector est = estimate_conditional_expectation({}, sol.ensemble, 20, target);
    EXPECT_LT((est.array() - 3.25).abs().maxCoeff(), 1e-10);
}

TEST(Regression, InSpanTargetIsExact) {
    const auto p = small_problem();
    const auto sol = picard_solve(p);
    const Vector w = sol.ensemble.wealth.col(20);
    const Vector target = w.array().square();
    const Vector est = estimate_conditional_expectation({}, sol.ensemble, 20, target);
    EXPECT_LT((est - target).cwiseAbs().maxCoeff(), 1e-10 * target.cwiseAbs().maxCoeff());
}

TEST(Regression, GbmConditionalMeanAgreesWithExactAndNested) {
    const auto p = small_problem(5.0, 50, 4000, 0.2);
    const auto sol = picard_solve(p);
    const int j = 25;
    const Vector target = sol.ensemble.income.col(50);
    const Vector est = estimate_conditional_expectation({}, sol.ensemble, j, target);
    const Vector exact = sol.ensemble.income.col(j) * std::pow(1.0 + 0.01 * 0.1, 25);
    const Vector d = est - exact;
    const double se = std::sqrt((target - exact).squaredNorm() / (d.size() - 1.0) / d.size());
    EXPECT_LT(std::abs(d.mean()), 3.0 * se);

    // Nested oracle at one state.
    const double eta_j = sol.ensemble.income(0, j);
    const auto nested = nested_expectation(p.income, p.grid, p.rate, j, 0.0, eta_j, 4000, 9, 0,
                                           [](double, double eta) { return eta; });
    EXPECT_LT(std::abs(nested.mean - eta_j * std::pow(1.001, 25)), 3.0 * nested.std_error);
}

TEST(Regression, RankDeficientDesignFallsBackToRidge) {
    const Vector w = Vector::LinSpaced(50, 0.0, 1.0);
    const Vector target = 2.0 * w;
    EstimatorSpec spec;
    spec.degree = 2;
    Vector fitted;
    const auto fit = fit_regression(w, w, target, spec, false, &fitted);
    EXPECT_TRUE(fit.ridge);
    EXPECT_LT((fitted - target).cwiseAbs().maxCoeff(), 1e-4);
}

// ---------------------------------------------------------------------------
// Solution map pieces

TEST(WealthRecursion, PureCompounding) {
    const TimeGrid g(0.0, 10.0, 100);
    const Matrix zero = Matrix::Zero(2, g.size());
    const Matrix W = wealth_recursion(g, RatePath::constant(g, 0.03), Vector::Constant(2, 10.0), zero, zero);
    for (int j = 0; j <= 100; ++j) EXPECT_NEAR(W(0, j), 10.0 * std::pow(1.0 + 0.003, j), 1e-12);
}

TEST(WealthRecursion, BalancedBudgetKeepsWealth) {
    const TimeGrid g(0.0, 10.0, 100);
    const Matrix eta = simulate_income(IncomeModel::gbm(0.01, 0.1), g, 3, 1);
    const Matrix W = wealth_recursion(g, RatePath::constant(g, 0.0), Vector::Constant(3, 4.0), eta, eta);
    EXPECT_LT((W.array() - 4.0).abs().maxCoeff(), 1e-12);
}

TEST(ConsumptionFromTerminal, TerminalNodeIsPathwise) {
    auto p = small_problem();
    const auto sol = picard_solve(p);
    const Vector c = consumption_from_terminal(p.u1, p.u2, p.disc, p.rate, sol.ensemble, {}, p.grid.M());
    for (int i = 0; i < 10; ++i)
        EXPECT_NEAR(c[i], p.u1.inverse_marginal(p.disc.lambda * p.u2.marginal(sol.ensemble.wealth(i, 50))), 1e-12);
}

TEST(ConsumptionFromTerminal, UnitMarginalGivesUnitConsumption) {
    // lambda D_j E[u2'(w_L)] = 1 = u1'(1) when w_L = 1, lambda = 1 and r = delta.
    const TimeGrid g(0.0, 1.0, 10);
    PathEnsemble e;
    e.grid = g;
    e.income = Matrix::Ones(5, g.size());
    e.wealth = Matrix::Ones(5, g.size());
    const Vector c = consumption_from_terminal(UtilitySpec(2.0), UtilitySpec(2.0), DiscountSpec{0.03, 1.0},
                                               RatePath::constant(g, 0.03), e, {}, 3);
    EXPECT_LT((c.array() - 1.0).abs().maxCoeff(), 1e-12);
}

// ---------------------------------------------------------------------------
// Solver

TEST(Picard, SigmaZeroMatchesClosedForm) {
    auto p = small_problem(60.0, 600, 1, 0.0);
    const auto sol = picard_solve(p);
    ASSERT_TRUE(sol.converged);
    const auto d = solve_deterministic_crra(10.0, 1.0, 0.01, p.rate, p.disc, 2.0, p.grid);
    EXPECT_LT(std::abs(sol.ensemble.wealth(0, 600) - d.terminal_wealth), 1e-2 * d.terminal_wealth);
    for (int j = 0; j <= 600; ++j)
        EXPECT_LT(std::abs(sol.ensemble.consumption(0, j) - d.consumption[static_cast<std::size_t>(j)]),
                  1e-2 * d.consumption[static_cast<std::size_t>(j)]);
}

TEST(Picard, SigmaZeroRefinementShrinksError) {
    auto err = [](int M) {
        auto p = small_problem(60.0, M, 1, 0.0);
        const auto sol = picard_solve(p);
        const auto d = solve_deterministic_crra(10.0, 1.0, 0.01, p.rate, p.disc, 2.0, p.grid);
        return std::abs(sol.ensemble.wealth(0, M) - d.terminal_wealth);
    };
    EXPECT_LT(err(600), 0.7 * err(300));
}

TEST(Picard, DegenerateEnsembleRowsAreIdentical) {
    auto p = small_problem(5.0, 50, 6, 0.0);
    const auto sol = picard_solve(p);
    const Vector mean_w = column_means(sol.ensemble.wealth);
    for (int i = 0; i < 6; ++i)
        EXPECT_LT((sol.ensemble.wealth.row(i).transpose() - mean_w).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Picard, NoBequestConsumesCap) {
    auto p = small_problem();
    p.disc.lambda = 0.0;
    p.u1 = UtilitySpec(2.0, 1e-3, 2.0, 3.0);
    const auto sol = picard_solve(p);
    EXPECT_TRUE(sol.converged);
    EXPECT_EQ(sol.iterations, 1);
    EXPECT_EQ((sol.ensemble.consumption.array() == 3.0).count(), sol.ensemble.consumption.size());
}

TEST(Picard, StochasticInvariants) {
    const auto p = small_problem(5.0, 50, 1000, 0.1);
    const auto sol = picard_solve(p);
    ASSERT_TRUE(sol.converged);
    EXPECT_TRUE(consumption_within_bounds(sol));
    const Matrix limits = natural_borrowing_limits(p.rate, p.income, p.grid, sol.ensemble.income);
    EXPECT_LE(check_borrowing_limit(sol.ensemble, limits).fraction, 1e-3);
    EXPECT_GE(sol.ensemble.wealth.col(50).minCoeff(), -1e-3 * 11.0);
    EXPECT_LE(euler_equation_residual(sol, p.u1, p.disc, euler_horizon(p.grid)).mean, 5e-2);
}

TEST(Picard, HigherIncomeConsumesMore) {
    const auto p = small_problem(5.0, 50, 1000, 0.1);
    const auto sol = picard_solve(p);
    const auto& e = sol.ensemble;
    // Rank correlation proxy: mean consumption of the top income half exceeds the bottom half.
    std::vector<std::pair<double, double>> v;
    for (int i = 0; i < e.n_paths(); ++i) v.emplace_back(e.income(i, 40), e.consumption(i, 40));
    std::sort(v.begin(), v.end());
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < v.size() / 2; ++i) lo += v[i].second;
    for (std::size_t i = v.size() / 2; i < v.size(); ++i) hi += v[i].second;
    EXPECT_GT(hi, lo);
}

TEST(Picard, DeterministicAcrossThreadCounts) {
    auto p = small_problem(5.0, 50, 500, 0.1);
    const auto a = picard_solve(p);
    const auto b = picard_solve(p);
    p.solver.threads = 4;
    const auto c = picard_solve(p);
    EXPECT_EQ(a.ensemble.wealth, b.ensemble.wealth);
    EXPECT_EQ(a.ensemble.wealth, c.ensemble.wealth);
    EXPECT_EQ(a.ensemble.consumption, c.ensemble.consumption);
}

TEST(Picard, ContractionAtShortLifespan) {
    auto p = small_problem(5.0, 50, 1, 0.0);
    p.solver.scheme = SolverSettings::Scheme::picard;
    p.solver.min_damping = 1.0;
    const auto cc = contraction_diagnostics(picard_solve(p));
    EXPECT_TRUE(cc.passed());
    EXPECT_LT(cc.max_ratio, 1.0);
}

TEST(Picard, DivergesAtLongLifespan) {
    auto p = small_problem(500.0, 5000, 1, 0.0);
    p.solver.scheme = SolverSettings::Scheme::picard;
    p.solver.min_damping = 1.0;
    p.solver.max_iter = 30;
    const auto cc = contraction_diagnostics(picard_solve(p));
    EXPECT_FALSE(cc.passed());
}

TEST(Picard, RejectsInvalidProblems) {
    auto p = small_problem();
    p.n_paths = 0;
    EXPECT_THROW(picard_solve(p), std::invalid_argument);
    p = small_problem();
    p.solver.damping = 0.0;
    EXPECT_THROW(picard_solve(p), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Diagnostics

TEST(BorrowingLimit, GbmClosedForm) {
    EXPECT_NEAR(gbm_borrowing_limit(1.0, 0.03, 0.01, 0.0, 60.0), -34.9403, 1e-4);
    EXPECT_EQ(gbm_borrowing_limit(1.0, 0.03, 0.01, 60.0, 60.0), 0.0);
    EXPECT_EQ(gbm_borrowing_limit(0.0, 0.03, 0.01, 10.0, 60.0), 0.0);
    // Tighter (higher) late in life.
    EXPECT_GT(gbm_borrowing_limit(1.0, 0.03, 0.01, 50.0, 60.0), gbm_borrowing_limit(1.0, 0.03, 0.01, 10.0, 60.0));
}

TEST(BorrowingLimit, TrapezoidMatchesClosedForm) {
    const TimeGrid g(0.0, 60.0, 600);
    const Matrix eta = Matrix::Ones(1, g.size());
    const Matrix lim = natural_borrowing_limits(RatePath::constant(g, 0.03), IncomeModel::gbm(0.01, 0.1), g, eta);
    EXPECT_NEAR(lim(0, 0), -34.9403, 1e-3 * 34.9403);
    EXPECT_EQ(lim(0, 600), 0.0);
}

TEST(Euler, TargetIsOneWhenRateEqualsDiscount) {
    auto p = small_problem(5.0, 50, 1, 0.0);
    p.disc.delta = 0.03;
    const auto sol = picard_solve(p);
    // Consumption is flat, so the marginal-utility ratio equals the unit target.
    EXPECT_LT(euler_equation_residual(sol, p.u1, p.disc, 0.5).max, 1e-4);
}

TEST(Payoff, UnitLogConsumption) {
    const TimeGrid g(0.0, 3.0, 30);
    PathEnsemble e;
    e.grid = g;
    e.consumption = Matrix::Ones(4, g.size());
    e.wealth = Matrix::Zero(4, g.size());
    e.income = Matrix::Zero(4, g.size());
    EXPECT_NEAR(payoff_evaluate(e, DiscountSpec{0.0, 0.0}, UtilitySpec(1.0), UtilitySpec(1.0)), 0.0, 1e-14);
}

TEST(Payoff, PolicyBeatsLevelBumps) {
    const auto p = small_problem(5.0, 50, 1000, 0.1);
    const auto sol = picard_solve(p);
    const double base = payoff_evaluate(sol.ensemble, p.disc, p.u1, p.u2);
    for (double a : {-0.05, 0.05}) {
        const std::vector<double> xi(51, a);
        EXPECT_LT(payoff_evaluate(perturbed_ensemble(sol, xi), p.disc, p.u1, p.u2), base);
    }
}

TEST(Sweep, PureCompoundingWithoutIncome) {
    auto p = small_problem(5.0, 50, 1, 0.0);
    p.income = IncomeModel::gbm(0.0, 0.0, Distribution::point(0.0));
    p.disc.lambda = 0.0;
    p.u1 = UtilitySpec(2.0, 1e-3, 2.0, 2e-3);  // consumption forced near zero
    const auto sol = picard_solve(p);
    const auto [m, se] = mean_wealth_at(sol.ensemble, 2.5);
    // Discrete compounding with consumption 2e-3 per unit time.
    double w = 10.0;
    for (int j = 0; j < 25; ++j) w += (0.03 * w - 2e-3) * 0.1;
    EXPECT_NEAR(m, w, 1e-12);
    EXPECT_EQ(se, 0.0);
}

TEST(Sweep, EmptyRateList) {
    const auto res = expected_wealth_sweep({}, 2.5, small_problem());
    EXPECT_TRUE(res.rows.empty());
    EXPECT_TRUE(res.increasing_over_positive);
}

TEST(LinearBsde, DeterministicTerminalValue) {
    const TimeGrid g(0.0, 60.0, 600);
    PathEnsemble e;
    e.grid = g;
    e.income = Matrix::Ones(3, g.size());
    e.wealth = Matrix::Zero(3, g.size());
    const Vector y0 = linear_bsde_value(RatePath::constant(g, 0.03), Vector::Ones(3), e, 0);
    EXPECT_NEAR(y0[0], std::exp(1.8), 1e-12 * std::exp(1.8));
    EXPECT_NEAR(std::exp(1.8), 6.0496, 1e-4);
}

TEST(LinearBsde, MeasurableTerminalCollapses) {
    const auto p = small_problem(5.0, 50, 300, 0.1);
    const auto sol = picard_solve(p);
    const Vector g = sol.ensemble.income.col(50);
    const Vector y = linear_bsde_value(p.rate, g, sol.ensemble, 50);
    EXPECT_EQ(y, g);
}

TEST(LinearBsde, DiscountedValueIsMartingale) {
    const auto p = small_problem(5.0, 50, 2000, 0.2);
    const auto sol = picard_solve(p);
    const Vector g = sol.ensemble.income.col(50).array().square();
    EXPECT_TRUE(linear_bsde_martingale_check(p.rate, g, sol.ensemble).passed);
}
