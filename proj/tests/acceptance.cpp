// Acceptance suite: one PASS/FAIL line per acceptance criterion, each at its
// stated tolerance. Usage: olg_acceptance <configs dir> <scratch dir>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "olg/cli/commands.hpp"
#include "olg/equilibrium/lifecycle_equilibrium.hpp"
#include "olg/equilibrium/olg.hpp"
#include "olg/io/config.hpp"
#include "olg/lifecycle/deterministic.hpp"
#include "olg/lifecycle/diagnostics.hpp"

namespace fs = std::filesystem;
using namespace olg;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::string num(double v) {
    std::ostringstream s;
    s << std::setprecision(4) << v;
    return s.str();
}

fs::path g_configs;
fs::path g_scratch;

io::RunConfig config(const std::string& name) { return io::load_config((g_configs / name).string()); }

// Every converged life-cycle solution seen by the suite, for the bound check.
std::vector<std::pair<std::string, bool>> g_bounds;

void record_bounds(const std::string& what, const LifecycleSolution& sol) {
    if (sol.converged) g_bounds.emplace_back(what, consumption_within_bounds(sol));
}

// The converged stochastic baseline run (sigma = 0.1, N = 4000), solved once.
const std::pair<LifecycleProblem, LifecycleSolution>& stochastic_baseline() {
    static const auto run = [] {
        const auto p = io::lifecycle_problem(config("stochastic_baseline.json"));
        auto sol = picard_solve(p);
        record_bounds("stochastic-baseline", sol);
        return std::make_pair(p, std::move(sol));
    }();
    return run;
}

Outcome sigma0_oracle() {
    const auto c = config("deterministic_baseline.json");
    const auto p = io::lifecycle_problem(c);
    const auto sol = picard_solve(p);
    record_bounds("sigma0", sol);
    const auto d = solve_deterministic_crra(c.population.initial_wealth.mean(), c.income.initial.mean(), c.income.mu,
                                            p.rate, p.disc, c.model.gamma1, p.grid);
    double err = 0.0;
    for (int j = 0; j <= p.grid.M(); ++j) {
        const auto k = static_cast<std::size_t>(j);
        err = std::max(err, std::abs(sol.ensemble.wealth(0, j) - d.wealth[k]) / std::abs(d.wealth[k]));
        err = std::max(err, std::abs(sol.ensemble.consumption(0, j) - d.consumption[k]) / std::abs(d.consumption[k]));
    }
    const bool baseline = p.grid.M() == 600 && p.grid.L() == 60.0 && p.n_paths == 1 && c.income.sigma == 0.0;
    return {baseline && sol.converged && err <= 1e-2, "max rel err " + num(err) + " (tol 1e-2, M=600)"};
}

Outcome euler_equation() {
    const auto& [p, sol] = stochastic_baseline();
    const auto eu = euler_equation_residual(sol, p.u1, p.disc, euler_horizon(p.grid));
    // Deterministic case at M and M/2: residual at most dt and shrinking at least linearly.
    auto det = io::lifecycle_problem(config("deterministic_baseline.json"));
    const auto full = picard_solve(det);
    auto coarse = det;
    coarse.grid = TimeGrid(det.grid.t0(), det.grid.L(), det.grid.M() / 2);
    coarse.rate = det.rate.resampled(coarse.grid);
    const auto half = picard_solve(coarse);
    record_bounds("sigma0 (M/2)", half);
    const double e_full = euler_equation_residual(full, det.u1, det.disc, euler_horizon(det.grid)).mean;
    const double e_half = euler_equation_residual(half, det.u1, det.disc, euler_horizon(det.grid)).mean;
    const double ratio = e_half / e_full;
    const bool ok = sol.converged && eu.mean <= 5e-2 && full.converged && half.converged &&
                    e_full <= det.grid.dt() && ratio >= 1.8;
    return {ok, "stochastic mean " + num(eu.mean) + " (tol 5e-2); deterministic " + num(e_full) + " at dt " +
                    num(det.grid.dt()) + ", halving ratio " + num(ratio)};
}

Outcome borrowing_limit() {
    const auto& [p, sol] = stochastic_baseline();
    const Matrix limits = natural_borrowing_limits(p.rate, p.income, p.grid, sol.ensemble.income);
    const auto bl = check_borrowing_limit(sol.ensemble, limits);
    const bool end_zero = (limits.col(p.grid.M()).array() == 0.0).all();
    const double w0 = gbm_borrowing_limit(1.0, 0.03, 0.01, 0.0, 60.0);
    const double rel = std::abs(w0 - (-34.9403)) / 34.9403;
    return {sol.converged && bl.fraction <= 1e-3 && end_zero && rel <= 1e-3,
            "violations " + num(bl.fraction) + " (tol 1e-3); wbar_L = 0: " + (end_zero ? "yes" : "no") +
                "; wbar_0 = " + num(w0) + " rel err " + num(rel)};
}

Outcome terminal_positivity() {
    const auto& [p, sol] = stochastic_baseline();
    const auto& e = sol.ensemble;
    const double min_wL = e.wealth.col(p.grid.M()).minCoeff();
    const double floor = -1e-3 * (1.0 + std::abs(e.wealth.col(0).mean()));
    return {sol.converged && min_wL >= floor, "min w_L " + num(min_wL) + " (floor " + num(floor) + ")"};
}

Outcome contraction() {
    const auto c = config("validate.json");
    auto p = io::lifecycle_problem(c);
    p.income = IncomeModel::gbm(c.income.mu, 0.0, Distribution::point(c.income.initial.mean()));
    p.initial_wealth = Distribution::point(c.population.initial_wealth.mean());
    p.n_paths = 1;
    p.solver.scheme = SolverSettings::Scheme::picard;
    p.solver.damping = 1.0;
    p.solver.min_damping = 1.0;
    const auto cc = contraction_diagnostics(picard_solve(p));
    std::ostringstream sink;
    cli::CommandOptions o;
    o.console = &sink;
    const int code = cli::cmd_validate(config("validate_L500.json"), o);
    return {p.grid.L() == 5.0 && cc.passed() && code == cli::kValidationFailure,
            "L=5 max ratio " + num(cc.max_ratio) + (cc.nonincreasing ? " nonincreasing" : " increasing") +
                "; L=500 validate exit " + std::to_string(code)};
}

Outcome linear_bsde() {
    const TimeGrid grid(0.0, 60.0, 600);
    const RatePath r = RatePath::constant(grid, 0.03);
    PathEnsemble e;
    e.grid = grid;
    e.income = Matrix::Ones(8, grid.size());
    e.wealth = Matrix::Zero(8, grid.size());
    e.consumption = Matrix::Zero(8, grid.size());
    const double y0 = linear_bsde_value(r, Vector::Ones(8), e, 0).mean();
    const double rel = std::abs(y0 - std::exp(1.8)) / std::exp(1.8);
    const auto& [p, sol] = stochastic_baseline();
    const auto mc = linear_bsde_martingale_check(p.rate, sol.ensemble.income.col(p.grid.M()), sol.ensemble);
    return {rel <= 1e-12 && mc.passed, "y_0 rel err " + num(rel) + " (tol 1e-12); martingale worst z " +
                                           num(mc.worst_z) + " (tol 3)"};
}

Outcome leibniz() {
    using F = std::function<double(double, double)>;
    const std::vector<std::pair<F, F>> tests = {
        {[](double, double) { return 1.0; }, [](double, double) { return 0.0; }},
        {[](double t, double) { return t; }, [](double, double) { return 1.0; }},
        {[](double, double b) { return b * b; }, [](double, double) { return 0.0; }},
        {[](double t, double b) { return t * b + b * b; }, [](double, double b) { return b; }},
        {[](double t, double b) { return t * t * b - 3.0 * b * b * b; }, [](double t, double b) { return 2.0 * t * b; }},
    };
    const std::vector<DemographicFlow> flows = {DemographicFlow::uniform(5.0), DemographicFlow::exponential(5.0, 0.02),
                                                DemographicFlow::exponential(60.0, -0.01)};
    double worst = 0.0;
    for (const auto& flow : flows)
        for (const auto& [f, df] : tests)
            for (double t : {0.0, 1.5, 7.25}) {
                const auto lc = leibniz_derivative_check(f, df, flow, t);
                worst = std::max(worst, std::abs(lc.analytic - lc.finite_difference));
            }
    return {worst <= 1e-6, "worst gap " + num(worst) + " (tol 1e-6)"};
}

Outcome lifecycle_equilibrium() {
    const auto c = config("lifecycle_equilibrium.json");
    const auto p = io::lifecycle_problem(c);
    const auto s = io::lifecycle_equilibrium_settings(c);
    const auto eq = lifecycle_equilibrium_solve(p, s);
    double sup = 0.0;
    for (std::size_t j = 0; j < eq.mean_wealth.size(); ++j) sup = std::max(sup, std::abs(eq.mean_wealth[j] - eq.K[j]));
    const auto chk = lifecycle_clearing_check(p, eq, p.seed ^ 0x9e3779b97f4a7c15ull, eq.tolerance);
    const bool setup = s.K == 10.0 && p.grid.L() == 5.0;
    return {setup && eq.converged && sup <= 1e-2 * s.K && chk.passed,
            "converged " + std::to_string(eq.converged) + " in " + std::to_string(eq.iterations()) +
                "; sup|E w - K| " + num(sup) + " (tol " + num(1e-2 * s.K) + "); fresh seed sup " +
                num(chk.sup_residual) + ", beyond 3 SE " + num(chk.excess)};
}

Outcome stationary_olg() {
    const auto c = config("stationary_uniform.json");
    const auto start = std::chrono::steady_clock::now();
    const auto res = stationary_rate_bisect(io::lifecycle_problem(c), io::demographic_flow(c),
                                            io::stationary_settings(c, 1));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {res.converged && res.stationary && res.cohorts_agree && secs <= 600.0,
            "rate " + num(res.rate) + "; stationarity excess " + num(res.stationarity_excess) +
                " (tol 1); cross-cohort excess " + num(res.cross_cohort_excess) + " (tol 1); " + num(secs) + " s"};
}

Outcome olg_fixed_point() {
    const auto ce = config("olg_exponential.json");
    const auto se = io::olg_settings(ce, 1);
    const auto flow = io::demographic_flow(ce);
    const auto exp_res = olg_equilibrium_solve(io::lifecycle_problem(ce), flow, se);
    const bool setup = ce.grid.L == 5.0 && se.n_cohorts == 21 && flow.kind() == DemographicFlow::Kind::stationary_exponential &&
                       flow.growth() == 0.02;
    const bool exp_ok = setup && exp_res.converged && exp_res.phi_residual <= 2.0 * se.tol_eq;

    // Stationary flow: the fixed point against the bisection rate.
    const auto cu = config("stationary_uniform.json");
    auto su = io::olg_settings(cu, 1);
    su.tol_eq = 1e-4;
    const auto uni = olg_equilibrium_solve(io::lifecycle_problem(cu), io::demographic_flow(cu), su);
    const auto bis = stationary_rate_bisect(io::lifecycle_problem(cu), io::demographic_flow(cu),
                                            io::stationary_settings(cu, 1));
    double gap = 0.0;
    for (double v : uni.rate.values()) gap = std::max(gap, std::abs(v - bis.rate));
    return {exp_ok && uni.converged && gap <= 1e-3,
            "exponential |Phi/K - r| " + num(exp_res.phi_residual) + " (tol " + num(2.0 * se.tol_eq) +
                "); uniform vs bisection " + num(gap) + " (tol 1e-3)"};
}

Outcome rate_sweep() {
    const auto c = config("sweep.json");
    const auto p = io::lifecycle_problem(c);
    const double t = 0.5 * p.grid.L();
    std::map<double, std::pair<double, double>> rows;
    bool converged = true;
    for (double r : {-1.0, 0.1, 0.2, 0.3, 0.4, 0.5}) {
        auto q = p;
        q.rate = RatePath::constant(q.grid, r);
        const auto sol = picard_solve(q);
        record_bounds("sweep r=" + num(r), sol);
        converged = converged && sol.converged;
        rows[r] = mean_wealth_at(sol.ensemble, t);
    }
    bool increasing = true;
    for (auto it = std::next(rows.find(0.1)); it != rows.end(); ++it)
        increasing = increasing && it->second.first > std::prev(it)->second.first;
    const auto [m, se] = rows[-1.0];
    return {converged && increasing && m <= 3.0 * se,
            std::string("increasing over 0.1..0.5: ") + (increasing ? "yes" : "no") + "; E w(r=-1) " + num(m) +
                " (3 SE " + num(3.0 * se) + ")"};
}

Outcome dK_sensitivity() {
    const auto c = config("lifecycle_equilibrium.json");
    const auto p = io::lifecycle_problem(c);
    const auto s = io::lifecycle_equilibrium_settings(c);
    const auto eq = lifecycle_equilibrium_solve(p, s);
    const auto rs = rate_sensitivity_dK(p, s, eq, c.equilibrium.dK);
    return {eq.converged && rs.converged && rs.richardson_consistent() && rs.identity_holds(5e-2),
            "observed order " + num(rs.observed_order) + ", gap " + num(rs.richardson_gap) + "; identity residual " +
                num(rs.identity_residual) + " vs 5e-2 |r| = " + num(5e-2 * rs.rate_norm)};
}

Outcome local_optimality() {
    const auto& [p, sol] = stochastic_baseline();
    const double base = payoff_evaluate(sol.ensemble, p.disc, p.u1, p.u2);
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const int M = p.grid.M();
    int dominated = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < 20; ++k) {
        // Level-and-tilt bump with |xi_j| <= 5% at every node.
        double a = 0.0, b = 0.0;
        do {
            a = 0.05 * unit(rng);
            b = 0.05 * unit(rng);
        } while (std::abs(a) + std::abs(b) > 0.05 || std::abs(a) + std::abs(b) < 0.01);
        std::vector<double> xi(static_cast<std::size_t>(M + 1));
        for (int j = 0; j <= M; ++j) xi[static_cast<std::size_t>(j)] = a + b * (2.0 * j / M - 1.0);
        const double v = payoff_evaluate(perturbed_ensemble(sol, xi), p.disc, p.u1, p.u2);
        worst = std::max(worst, v - base);
        if (v <= base) ++dominated;
    }
    return {sol.converged && dominated == 20,
            std::to_string(dominated) + "/20 dominated; best bump gain " + num(worst)};
}

std::map<std::string, std::string> read_csvs(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.path().extension() != ".csv") continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        out[fs::relative(entry.path(), root).string()] = s.str();
    }
    return out;
}

Outcome determinism() {
    const auto run = [](const std::string& tag, unsigned threads) {
        const fs::path root = g_scratch / ("determinism-" + tag);
        fs::remove_all(root);
        std::ostringstream sink;
        cli::CommandOptions o;
        o.out = root.string();
        o.threads = threads;
        o.console = &sink;
        int code = cli::cmd_sto_lifecycle(config("stochastic_baseline.json"), o);
        code = std::max(code, cli::cmd_equilibrium(config("stationary_uniform.json"), "stationary", o));
        code = std::max(code, cli::cmd_equilibrium(config("lifecycle_equilibrium.json"), "lifecycle", o));
        return std::make_pair(code, read_csvs(root));
    };
    const auto a = run("a", 1), b = run("b", 1), c = run("c", 8);
    const bool ok = a.first == 0 && b.first == 0 && c.first == 0 && !a.second.empty() && a.second == b.second &&
                    a.second == c.second;
    return {ok, std::to_string(a.second.size()) + " CSVs; repeat identical: " + (a.second == b.second ? "yes" : "no") +
                    "; 1 vs 8 threads identical: " + (a.second == c.second ? "yes" : "no")};
}

Outcome consumption_bound() {
    stochastic_baseline();
    int bad = 0;
    std::string first;
    for (const auto& [what, ok] : g_bounds)
        if (!ok && bad++ == 0) first = what;
    return {!g_bounds.empty() && bad == 0,
            std::to_string(g_bounds.size()) + " converged runs checked" + (bad ? "; first violation: " + first : "")};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 3) {
        std::cerr << "usage: olg_acceptance <configs dir> <scratch dir>\n";
        return 2;
    }
    g_configs = argv[1];
    g_scratch = argv[2];
    fs::create_directories(g_scratch);

    // The bound check runs last so that it sees every solution produced above.
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"sigma0_oracle_equivalence", sigma0_oracle},
        {"euler_equation", euler_equation},
        {"natural_borrowing_limit", borrowing_limit},
        {"terminal_positivity", terminal_positivity},
        {"contraction_diagnostics", contraction},
        {"linear_bsde_oracle", linear_bsde},
        {"leibniz_check", leibniz},
        {"lifecycle_equilibrium", lifecycle_equilibrium},
        {"stationary_olg", stationary_olg},
        {"olg_fixed_point", olg_fixed_point},
        {"rate_sweep", rate_sweep},
        {"dK_sensitivity", dK_sensitivity},
        {"local_optimality", local_optimality},
        {"determinism", determinism},
        {"consumption_bound", consumption_bound},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome r;
        try {
            r = check();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!r.passed) ++failures;
        std::cout << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(28) << name << r.detail << " ["
                  << std::fixed << std::setprecision(1) << secs << " s]" << std::defaultfloat << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size()
              << " criteria passed\n";
    return failures == 0 ? 0 : 1;
}
