#include "olg/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "olg/equilibrium/demography.hpp"
#include "olg/equilibrium/lifecycle_equilibrium.hpp"
#include "olg/equilibrium/olg.hpp"
#include "olg/io/csv.hpp"
#include "olg/io/manifest.hpp"
#include "olg/lifecycle/deterministic.hpp"
#include "olg/lifecycle/diagnostics.hpp"
#include "olg/lifecycle/picard.hpp"

namespace olg::cli {

namespace {

using io::CsvWriter;
using io::json;

std::ostream& console(const CommandOptions& o) { return o.console ? *o.console : std::cout; }

std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

/// Quantile with linear interpolation between order statistics.
double quantile(std::vector<double> v, double q) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// One command invocation: staging directory, file list and manifest.
class Run {
public:
    Run(const io::RunConfig& c, const std::string& command, const CommandOptions& o)
        : config_(c), opts_(o), dir_(run_directory(c, command, o), o.force), start_(std::chrono::steady_clock::now()) {
        manifest_["tool"] = "olgsim";
        manifest_["tool_version"] = io::kToolVersion;
        manifest_["command"] = command;
        manifest_["config_hash"] = io::config_hash(c);
        manifest_["seed"] = c.population.seed;
        manifest_["threads"] = resolve_threads(o.threads);
        manifest_["solvers"] = json::object();
        manifest_["invariants"] = json::object();
    }

    std::string file(const std::string& name) {
        files_.push_back(name);
        return dir_.file(name).string();
    }

    json& solvers() { return manifest_["solvers"]; }

    void invariant(const std::string& name, bool passed, json detail = json::object()) {
        detail["passed"] = passed;
        manifest_["invariants"][name] = std::move(detail);
    }

    int finish(bool converged, int code) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        manifest_["converged"] = converged;
        manifest_["exit_code"] = code;
        manifest_["wall_clock_seconds"] = secs;
        manifest_["files"] = files_;
        manifest_["config"] = io::to_json(config_);
        io::write_atomic(dir_.file("manifest.json"), manifest_.dump(2) + "\n");
        dir_.commit();
        console(opts_) << dir_.final_path().string() << "\n";
        return code;
    }

private:
    io::RunConfig config_;
    CommandOptions opts_;
    io::RunDirectory dir_;
    std::chrono::steady_clock::time_point start_;
    json manifest_;
    std::vector<std::string> files_;
};

json convergence_summary(const LifecycleSolution& s) {
    return {{"converged", s.converged},
            {"iterations", s.iterations},
            {"final_residual", s.residuals.empty() ? 0.0 : s.residuals.back()},
            {"tolerance", s.tolerance},
            {"ridge_warnings", s.ridge_warnings},
            {"message", s.message}};
}

void write_iterations(const std::string& path, const LifecycleSolution& s) {
    CsvWriter w(path, {"iteration", "residual", "contraction_ratio", "damping"});
    for (std::size_t k = 0; k < s.residuals.size(); ++k) {
        const double ratio = k >= 1 && k - 1 < s.contraction_ratios.size() ? s.contraction_ratios[k - 1] : std::nan("");
        w.row({static_cast<double>(k + 1), s.residuals[k], ratio, s.damping_history[k]});
    }
    w.close();
}

void write_ensemble_stats(const std::string& path, const PathEnsemble& e) {
    std::vector<std::string> header{"t"};
    const std::vector<std::pair<std::string, const Matrix*>> series{
        {"w", &e.wealth}, {"c", &e.consumption}, {"eta", &e.income}};
    const std::vector<std::pair<std::string, double>> qs{{"q05", 0.05}, {"q25", 0.25}, {"q50", 0.5}, {"q75", 0.75}, {"q95", 0.95}};
    for (const auto& [name, m] : series) {
        header.push_back(name + "_mean");
        header.push_back(name + "_std");
        for (const auto& q : qs) header.push_back(name + "_" + q.first);
    }
    CsvWriter w(path, header);
    for (int j = 0; j <= e.grid.M(); ++j) {
        std::vector<double> row{e.grid.node(j)};
        for (const auto& [name, m] : series) {
            const Vector col = m->col(j);
            const double mean = col.mean();
            const double sd = col.size() > 1
                                  ? std::sqrt((col.array() - mean).square().sum() / static_cast<double>(col.size() - 1))
                                  : 0.0;
            row.push_back(mean);
            row.push_back(sd);
            const auto values = to_std(col);
            for (const auto& q : qs) row.push_back(quantile(values, q.second));
        }
        w.row(row);
    }
    w.close();
}

void write_sample_paths(const std::string& path, const PathEnsemble& e, int k) {
    CsvWriter w(path, {"path", "t", "income", "consumption", "wealth"});
    const int n = std::min(k, e.n_paths());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= e.grid.M(); ++j)
            w.row({static_cast<double>(i), e.grid.node(j), e.income(i, j), e.consumption(i, j), e.wealth(i, j)});
    w.close();
}

void write_nbl(const std::string& path, const TimeGrid& grid, const Matrix& limits, int k) {
    std::vector<std::string> header{"t", "nbl_mean"};
    const int n = std::min<int>(k, static_cast<int>(limits.rows()));
    for (int i = 0; i < n; ++i) header.push_back("nbl_path_" + std::to_string(i));
    CsvWriter w(path, header);
    for (int j = 0; j <= grid.M(); ++j) {
        std::vector<double> row{grid.node(j), limits.col(j).mean()};
        for (int i = 0; i < n; ++i) row.push_back(limits(i, j));
        w.row(row);
    }
    w.close();
}

std::string label(double v) {
    std::ostringstream s;
    s << v;
    return s.str();
}

std::string short_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

/// Fresh seed for independent re-simulation.
std::uint64_t fresh_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ull; }

}  // namespace

io::RunConfig effective_config(io::RunConfig c, const CommandOptions& o) {
    if (o.seed) c.population.seed = *o.seed;
    return c;
}

std::string run_directory(const io::RunConfig& c, const std::string& command, const CommandOptions& o) {
    const std::string root = o.out ? *o.out : c.output.dir;
    return (std::filesystem::path(root) / (command + "-" + io::config_hash(c).substr(0, 12))).string();
}

int cmd_det_lifecycle(const io::RunConfig& c, const CommandOptions& o) {
    if (c.model.gamma1 != c.model.gamma2)
        throw io::ConfigError("det-lifecycle: the closed form needs gamma1 == gamma2");
    if (!(c.model.lambda > 0.0)) throw io::ConfigError("det-lifecycle: the closed form needs lambda > 0");
    const auto p = io::lifecycle_problem(c, o.threads);
    const double w0 = c.population.initial_wealth.mean();
    const double eta0 = c.income.initial.mean();
    const auto sol = solve_deterministic_crra(w0, eta0, c.income.mu, p.rate, p.disc, c.model.gamma1, p.grid);

    Run run(c, "det-lifecycle", o);
    CsvWriter w(run.file("det_trajectories.csv"), {"t", "income", "consumption", "wealth"});
    for (int j = 0; j <= p.grid.M(); ++j) {
        const auto k = static_cast<std::size_t>(j);
        w.row({p.grid.node(j), sol.income[k], sol.consumption[k], sol.wealth[k]});
    }
    w.close();
    run.solvers()["deterministic"] = {{"terminal_wealth", sol.terminal_wealth},
                                      {"Xi_L", sol.Xi_L},
                                      {"Theta_L", sol.Theta_L},
                                      {"w0", w0},
                                      {"eta0", eta0}};
    const double gap = std::abs(sol.wealth.back() - sol.terminal_wealth);
    run.invariant("budget_closes", gap <= 1e-9 * (1.0 + std::abs(sol.terminal_wealth)), {{"gap", gap}});
    return run.finish(true, kOk);
}

int cmd_sto_lifecycle(const io::RunConfig& c, const CommandOptions& o) {
    const auto p = io::lifecycle_problem(c, o.threads);
    const auto sol = picard_solve(p);
    const auto& e = sol.ensemble;
    const Matrix limits = natural_borrowing_limits(p.rate, p.income, p.grid, e.income);

    Run run(c, "sto-lifecycle", o);
    write_ensemble_stats(run.file("ensemble_stats.csv"), e);
    if (c.output.emit_paths) write_sample_paths(run.file("sample_paths.csv"), e, c.output.sample_paths);
    write_nbl(run.file("nbl.csv"), p.grid, limits, c.output.sample_paths);
    write_iterations(run.file("iterations.csv"), sol);

    run.solvers()["lifecycle"] = convergence_summary(sol);
    if (sol.converged) {
        run.invariant("consumption_bound", consumption_within_bounds(sol), {{"kappa", sol.kappa_used}});
        const auto bl = check_borrowing_limit(e, limits);
        run.invariant("borrowing_limit", bl.fraction <= 1e-3,
                      {{"violations", bl.violations}, {"fraction", bl.fraction}});
        const double w0 = std::abs(e.wealth.col(0).mean());
        const double min_wL = e.wealth.col(p.grid.M()).minCoeff();
        run.invariant("terminal_positivity", min_wL >= -1e-3 * (1.0 + w0), {{"min_terminal_wealth", min_wL}});
        if (e.n_paths() > 1) {
            const auto eu = euler_equation_residual(sol, p.u1, p.disc, euler_horizon(p.grid));
            run.invariant("euler_equation", eu.mean <= 5e-2, {{"mean_residual", eu.mean}, {"max_residual", eu.max}});
        }
    }
    return run.finish(sol.converged, sol.converged ? kOk : kNotConverged);
}

int cmd_nbl(const io::RunConfig& c, const CommandOptions& o) {
    const auto p = io::lifecycle_problem(c, o.threads);
    const Matrix income = simulate_income(p.income, p.grid, p.n_paths, p.seed, 0, o.threads);
    const Matrix limits = natural_borrowing_limits(p.rate, p.income, p.grid, income);

    Run run(c, "nbl", o);
    write_nbl(run.file("nbl.csv"), p.grid, limits, c.output.sample_paths);
    std::vector<std::string> header{"eta"};
    const auto times = io::nbl_static_times(c);
    for (double t : times) header.push_back("wbar_t" + label(t));
    CsvWriter w(run.file("nbl_static.csv"), header);
    for (int i = 0; i < c.nbl.eta_points; ++i) {
        const double eta = c.nbl.eta_max * i / (c.nbl.eta_points - 1);
        std::vector<double> row{eta};
        for (double t : times)
            row.push_back(gbm_borrowing_limit(eta, c.model.r, c.income.mu, t, c.grid.L));
        w.row(row);
    }
    w.close();
    const double at_end = limits.col(p.grid.M()).cwiseAbs().maxCoeff();
    run.invariant("terminal_limit_zero", at_end == 0.0, {{"max_abs_terminal_limit", at_end}});
    run.solvers()["nbl"] = {{"closed_form_t0_eta1", gbm_borrowing_limit(1.0, c.model.r, c.income.mu, 0.0, c.grid.L)}};
    return run.finish(true, kOk);
}

int cmd_equilibrium(const io::RunConfig& c, const std::string& mode, const CommandOptions& o) {
    const auto p = io::lifecycle_problem(c, o.threads);
    if (mode == "lifecycle") {
        const auto s = io::lifecycle_equilibrium_settings(c);
        const auto eq = lifecycle_equilibrium_solve(p, s);
        Run run(c, "equilibrium-lifecycle", o);
        {
            CsvWriter w(run.file("rate_path.csv"), {"t", "r"});
            for (int j = 0; j <= p.grid.M(); ++j) w.row({p.grid.node(j), eq.rate[j]});
            w.close();
        }
        {
            CsvWriter w(run.file("clearing_residual.csv"), {"t", "mean_wealth", "K", "residual", "std_error"});
            for (std::size_t j = 0; j < eq.mean_wealth.size(); ++j)
                w.row({p.grid.node(static_cast<int>(j)), eq.mean_wealth[j], eq.K[j], eq.mean_wealth[j] - eq.K[j],
                       eq.wealth_se[j]});
            w.close();
        }
        {
            CsvWriter w(run.file("iterations.csv"), {"iteration", "clearing", "map_residual", "damping"});
            for (const auto& h : eq.history)
                w.row({static_cast<double>(h.iteration), h.clearing, h.map_residual, h.damping});
            w.close();
        }
        run.solvers()["lifecycle_equilibrium"] = {{"converged", eq.converged},
                                                  {"iterations", eq.iterations()},
                                                  {"clearing", eq.clearing},
                                                  {"tolerance", eq.tolerance},
                                                  {"map_residual", eq.map_residual},
                                                  {"inner_failures", eq.inner_failures},
                                                  {"message", eq.message}};
        if (eq.converged) {
            const auto chk = lifecycle_clearing_check(p, eq, fresh_seed(p.seed), eq.tolerance);
            run.invariant("fresh_seed_clearing", chk.passed,
                          {{"sup_residual", chk.sup_residual}, {"excess_over_3se", chk.excess}});
            const bool constant_K = s.K_path.empty() && s.K != 0.0;
            if (c.equilibrium.dK > 0.0 && constant_K) {
                const auto rs = rate_sensitivity_dK(p, s, eq, c.equilibrium.dK);
                CsvWriter w(run.file("sensitivity.csv"), {"t", "drdK_dK", "drdK_half", "drdK_quarter", "drdK_extrapolated"});
                for (std::size_t j = 0; j < rs.coarse.size(); ++j)
                    w.row({p.grid.node(static_cast<int>(j)), rs.coarse[j], rs.fine[j], rs.finest[j], rs.extrapolated[j]});
                w.close();
                run.invariant("dK_richardson", rs.richardson_consistent(),
                              {{"gap", rs.richardson_gap}, {"observed_order", rs.observed_order}});
                run.invariant("dK_identity", rs.identity_holds(),
                              {{"residual", rs.identity_residual}, {"rate_norm", rs.rate_norm}});
            }
        }
        return run.finish(eq.converged, eq.converged ? kOk : kNotConverged);
    }
    if (mode == "olg") {
        const auto flow = io::demographic_flow(c);
        const auto s = io::olg_settings(c, o.threads);
        LifecycleProblem base = p;
        base.solver.threads = 1;
        const auto res = olg_equilibrium_solve(base, flow, s);
        Run run(c, "equilibrium-olg", o);
        const TimeGrid& cal = res.rate.grid();
        {
            CsvWriter w(run.file("rate_path.csv"), {"t", "r", "phi"});
            for (int j = 0; j <= cal.M(); ++j)
                w.row({cal.node(j), res.rate[j], res.phi.empty() ? std::nan("") : res.phi[static_cast<std::size_t>(j)]});
            w.close();
        }
        {
            CsvWriter w(run.file("clearing_residual.csv"), {"t", "wealth", "K", "residual", "std_error"});
            for (std::size_t j = 0; j < res.wealth.size(); ++j)
                w.row({cal.node(static_cast<int>(j)), res.wealth[j], res.K[j], res.wealth[j] - res.K[j], res.wealth_se[j]});
            w.close();
        }
        {
            CsvWriter w(run.file("iterations.csv"), {"iteration", "clearing", "rate_residual", "damping", "projected"});
            for (const auto& h : res.history)
                w.row({static_cast<double>(h.iteration), h.clearing, h.map_residual, h.damping, h.projected ? 1.0 : 0.0});
            w.close();
        }
        run.solvers()["olg_equilibrium"] = {{"converged", res.converged},
                                            {"iterations", res.iterations()},
                                            {"rate_residual", res.map_residual},
                                            {"tolerance", res.tolerance},
                                            {"clearing", res.clearing},
                                            {"phi_residual", res.phi_residual},
                                            {"ball_radius", res.ball_radius},
                                            {"projection_share", res.projection_share},
                                            {"inner_failures", res.inner_failures},
                                            {"message", res.message}};
        if (res.converged) {
            run.invariant("phi_self_consistency", res.phi_residual <= 2.0 * res.tolerance,
                          {{"phi_residual", res.phi_residual}, {"bound", 2.0 * res.tolerance}});
            const double bound = 1e-2 * (1.0 + std::abs(s.K));
            run.invariant("clearing", res.clearing <= bound, {{"clearing", res.clearing}, {"bound", bound}});
        }
        return run.finish(res.converged, res.converged ? kOk : kNotConverged);
    }
    if (mode == "stationary") {
        const auto flow = io::demographic_flow(c);
        const auto s = io::stationary_settings(c, o.threads);
        LifecycleProblem base = p;
        base.solver.threads = 1;
        const auto res = stationary_rate_bisect(base, flow, s);
        Run run(c, "equilibrium-stationary", o);
        {
            CsvWriter w(run.file("rate_path.csv"), {"t", "r"});
            for (double t : res.times) w.row({t, res.rate});
            w.close();
        }
        {
            CsvWriter w(run.file("clearing_residual.csv"), {"t", "wealth", "K", "residual", "std_error"});
            for (std::size_t j = 0; j < res.times.size(); ++j)
                w.row({res.times[j], res.family_wealth[j], s.K, res.family_wealth[j] - s.K, res.family_se[j]});
            w.close();
        }
        {
            CsvWriter w(run.file("iterations.csv"), {"evaluation", "r", "excess_wealth"});
            for (std::size_t k = 0; k < res.trace.size(); ++k)
                w.row({static_cast<double>(k + 1), res.trace[k][0], res.trace[k][1]});
            w.close();
        }
        {
            CsvWriter w(run.file("cross_cohort.csv"), {"cohort", "age", "mean_wealth", "pooled_mean", "std_error"});
            for (const auto& x : res.cross_cohort) w.row({static_cast<double>(x.cohort), x.age, x.mean, x.pooled, x.se});
            w.close();
        }
        run.solvers()["stationary_bisection"] = {{"rate", res.rate},
                                                 {"bracket", {res.r_lo, res.r_hi}},
                                                 {"evaluations", res.evaluations},
                                                 {"widenings", res.widenings},
                                                 {"representative_wealth", res.wealth},
                                                 {"representative_se", res.wealth_se},
                                                 {"converged", res.converged},
                                                 {"message", res.message}};
        run.invariant("first_order_stationarity", res.stationary,
                      {{"max_gap_over_3se", res.stationarity_excess}, {"sup_deviation", res.sup_deviation}});
        run.invariant("cross_cohort_profiles", res.cohorts_agree, {{"max_gap_over_3se", res.cross_cohort_excess}});
        return run.finish(res.converged, res.converged ? kOk : kNotConverged);
    }
    throw io::ConfigError("equilibrium: mode must be lifecycle, olg or stationary");
}

int cmd_sweep(const io::RunConfig& c, const CommandOptions& o) {
    const auto p = io::lifecycle_problem(c, o.threads);
    const double t_probe = c.sweep.t_probe >= 0.0 ? c.sweep.t_probe : 0.5 * c.grid.L;
    const auto res = expected_wealth_sweep(c.sweep.rates, t_probe, p);
    Run run(c, "sweep", o);
    CsvWriter w(run.file("sweep.csv"), {"r", "mean_wealth", "std_error", "converged"});
    bool all = true;
    for (const auto& row : res.rows) {
        w.row({row.r, row.mean_wealth, row.std_error, row.converged ? 1.0 : 0.0});
        all = all && row.converged;
    }
    w.close();
    run.solvers()["sweep"] = {{"t_probe", t_probe}, {"rows", res.rows.size()}, {"all_converged", all}};
    run.invariant("increasing_over_positive_rates", res.increasing_over_positive);
    return run.finish(all, kOk);
}

int cmd_validate(const io::RunConfig& c, const CommandOptions& o, std::vector<CheckRow>* rows_out) {
    std::vector<CheckRow> rows;
    auto add = [&](std::string name, double value, double threshold, bool passed, std::string note = "") {
        rows.push_back({std::move(name), value, threshold, passed, std::move(note)});
    };
    const auto base = io::lifecycle_problem(c, o.threads);
    const TimeGrid& grid = base.grid;
    const int M = grid.M();

    // Contraction of the literal Picard map (sigma = 0, one path, no damping).
    LifecycleProblem pc = base;
    pc.income = IncomeModel::gbm(c.income.mu, 0.0, Distribution::point(c.income.initial.mean()));
    pc.initial_wealth = Distribution::point(c.population.initial_wealth.mean());
    pc.n_paths = 1;
    pc.solver.scheme = SolverSettings::Scheme::picard;
    pc.solver.damping = 1.0;
    pc.solver.min_damping = 1.0;
    const auto contraction = contraction_diagnostics(picard_solve(pc));
    add("contraction", contraction.max_ratio, 1.0, contraction.passed(),
        contraction.passed() ? "" : (contraction.converged ? "ratios not decreasing" : "Picard iteration diverged"));

    // sigma -> 0 against the closed form.
    if (c.model.gamma1 == c.model.gamma2 && c.model.lambda > 0.0) {
        LifecycleProblem p0 = pc;
        p0.solver = base.solver;
        const auto s0 = picard_solve(p0);
        const auto d = solve_deterministic_crra(c.population.initial_wealth.mean(), c.income.initial.mean(),
                                                c.income.mu, base.rate, base.disc, c.model.gamma1, grid);
        double err = 0.0;
        for (int j = 0; j <= M; ++j) {
            const auto k = static_cast<std::size_t>(j);
            err = std::max(err, std::abs(s0.ensemble.wealth(0, j) - d.wealth[k]) / std::max(std::abs(d.wealth[k]), 1e-12));
            err = std::max(err, std::abs(s0.ensemble.consumption(0, j) - d.consumption[k]) /
                                    std::max(std::abs(d.consumption[k]), 1e-12));
        }
        const double tol = 1e-2 * std::max(1.0, grid.dt() / 0.1);
        add("sigma0_oracle", err, tol, s0.converged && err <= tol, s0.converged ? "" : "solver did not converge");

        // Deterministic Euler residual: first order in dt or better.
        LifecycleProblem ph = p0;
        ph.grid = TimeGrid(grid.t0(), grid.L(), std::max(1, M / 2));
        ph.rate = base.rate.resampled(ph.grid);
        const auto sh = picard_solve(ph);
        const double e_full = euler_equation_residual(s0, base.u1, base.disc, euler_horizon(grid)).mean;
        const double e_half = euler_equation_residual(sh, base.u1, base.disc, euler_horizon(grid)).mean;
        const bool order_ok = e_full <= grid.dt() && (e_full < 1e-12 || e_half / e_full >= 1.8);
        add("euler_deterministic_order", e_full, grid.dt(), s0.converged && sh.converged && order_ok);
    } else {
        add("sigma0_oracle", 0.0, 0.0, true, "not applicable (gamma1 != gamma2 or lambda = 0)");
    }

    // Stochastic run at the configured scale.
    const char* stochastic_checks[] = {"consumption_bound", "borrowing_limit", "terminal_positivity", "euler_equation",
                                       "bsde_martingale"};
    if (contraction.passed()) {
        const auto sol = picard_solve(base);
        const auto& e = sol.ensemble;
        if (!sol.converged) {
            for (const char* n : stochastic_checks) add(n, 0.0, 0.0, false, "stochastic solve did not converge");
        } else {
            const bool bounded = consumption_within_bounds(sol);
            add("consumption_bound", e.consumption.maxCoeff(), sol.kappa_used, bounded);
            const Matrix limits = natural_borrowing_limits(base.rate, base.income, grid, e.income);
            const auto bl = check_borrowing_limit(e, limits);
            const bool end_zero = limits.col(M).cwiseAbs().maxCoeff() == 0.0;
            add("borrowing_limit", bl.fraction, 1e-3, bl.fraction <= 1e-3 && end_zero);
            const double w0 = std::abs(e.wealth.col(0).mean());
            const double min_wL = e.wealth.col(M).minCoeff();
            add("terminal_positivity", min_wL, -1e-3 * (1.0 + w0), min_wL >= -1e-3 * (1.0 + w0));
            if (e.n_paths() > 1) {
                const auto eu = euler_equation_residual(sol, base.u1, base.disc, euler_horizon(grid));
                add("euler_equation", eu.mean, 5e-2, eu.mean <= 5e-2);
                const Vector g = e.income.col(M);
                const auto mc = linear_bsde_martingale_check(base.rate, g, e);
                add("bsde_martingale", mc.worst_z, 3.0, mc.passed);
            } else {
                add("euler_equation", 0.0, 5e-2, true, "single path");
                add("bsde_martingale", 0.0, 3.0, true, "single path");
            }
        }
    } else {
        for (const char* n : stochastic_checks) add(n, 0.0, 0.0, false, "skipped: outside the contraction regime");
    }

    // Linear BSDE with deterministic terminal value 1.
    {
        PathEnsemble e;
        e.grid = grid;
        e.income = Matrix::Ones(4, grid.size());
        e.wealth = Matrix::Zero(4, grid.size());
        e.consumption = Matrix::Zero(4, grid.size());
        const Vector g = Vector::Ones(4);
        const double y0 = linear_bsde_value(base.rate, g, e, 0).mean();
        const double exact = std::exp(base.rate.integral(grid.t0(), grid.end()));
        const double rel = std::abs(y0 - exact) / exact;
        add("linear_bsde_oracle", rel, 1e-12, rel <= 1e-12);
    }

    // Demographic flow checks.
    {
        const auto flow = io::demographic_flow(c);
        double worst = 0.0;
        for (int i = 0; i < 20; ++i) worst = std::max(worst, std::abs(flow.mass(0.37 * i - 2.0) - 1.0));
        add("demography_normalization", worst, 1e-8, worst <= 1e-8);
        bool shift = true;
        for (int i = 0; i < 10; ++i) {
            const double t = 0.7 * i, b = t - 0.09 * c.grid.L * i, h = 1.3 + 0.5 * i;
            shift = shift && flow.n(t, b) == flow.n(t + h, b + h);
        }
        add("stationary_shift", shift ? 0.0 : 1.0, 0.0, shift);
        const auto lc = leibniz_derivative_check([](double t, double b) { return t * b + b * b; },
                                                 [](double, double b) { return b; }, flow, 1.5);
        const double gap = std::abs(lc.analytic - lc.finite_difference);
        add("leibniz", gap, 1e-6, gap <= 1e-6);
    }

    auto& out = console(o);
    out << std::left << std::setw(28) << "check" << std::setw(16) << "value" << std::setw(16) << "threshold"
        << "result\n";
    bool all = true;
    for (const auto& r : rows) {
        all = all && r.passed;
        out << std::left << std::setw(28) << r.name << std::setw(16) << short_number(r.value) << std::setw(16)
            << short_number(r.threshold) << (r.passed ? "PASS" : "FAIL");
        if (!r.note.empty()) out << "  (" << r.note << ")";
        out << "\n";
    }
    if (rows_out) *rows_out = rows;
    return all ? kOk : kValidationFailure;
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"olgsim: life-cycle consumption and equilibrium interest-rate solver"};
    app.require_subcommand(1);
    std::string config_path;
    CommandOptions opts;
    std::string out_dir;
    std::uint64_t seed = 0;
    std::string mode;
    auto add_common = [&](CLI::App* sub, bool writes) {
        sub->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Master seed (overrides the config)");
        sub->add_option("--threads", opts.threads, "Worker threads (0 = all cores)")->capture_default_str();
        if (writes) {
            sub->add_option("--out", out_dir, "Root directory for run outputs");
            sub->add_flag("--force", opts.force, "Overwrite an existing run directory");
        }
    };
    auto* det = app.add_subcommand("det-lifecycle", "Closed-form deterministic life cycle");
    auto* sto = app.add_subcommand("sto-lifecycle", "Stochastic life cycle (forward-backward solver)");
    auto* nbl = app.add_subcommand("nbl", "Natural borrowing limits");
    auto* eq = app.add_subcommand("equilibrium", "Equilibrium interest rate");
    auto* sweep = app.add_subcommand("sweep", "Expected wealth across constant rates");
    auto* val = app.add_subcommand("validate", "Invariant suite");
    for (auto* s : {det, sto, nbl, eq, sweep}) add_common(s, true);
    add_common(val, false);
    eq->add_option("mode", mode, "lifecycle | olg | stationary")
        ->required()
        ->check(CLI::IsMember({"lifecycle", "olg", "stationary"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }
    auto* chosen = app.get_subcommands().front();
    if (!out_dir.empty()) opts.out = out_dir;
    if (chosen->count("--seed")) opts.seed = seed;

    try {
        const auto cfg = effective_config(io::load_config(config_path), opts);
        if (chosen == det) return cmd_det_lifecycle(cfg, opts);
        if (chosen == sto) return cmd_sto_lifecycle(cfg, opts);
        if (chosen == nbl) return cmd_nbl(cfg, opts);
        if (chosen == eq) return cmd_equilibrium(cfg, mode, opts);
        if (chosen == sweep) return cmd_sweep(cfg, opts);
        return cmd_validate(cfg, opts);
    } catch (const io::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const io::OutputExists& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kNotConverged;
    }
}

}  // namespace olg::cli
