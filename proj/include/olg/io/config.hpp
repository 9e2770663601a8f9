#pragma once
// Run configuration: a JSON document with nested sections. Every key is
// optional (defaults reproduce the reference life-cycle economy); unknown
// keys are rejected.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "olg/core/ensemble.hpp"
#include "olg/core/income.hpp"
#include "olg/core/utility.hpp"
#include "olg/equilibrium/demography.hpp"
#include "olg/equilibrium/lifecycle_equilibrium.hpp"
#include "olg/equilibrium/olg.hpp"
#include "olg/lifecycle/picard.hpp"

namespace olg::io {

using json = nlohmann::ordered_json;

/// Malformed or out-of-range configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ModelConfig {
    double gamma1 = 2.0, gamma2 = 2.0;
    double eps = 1e-3, p = 2.0, c_max = 1e6;
    double delta = 0.02, lambda = 100.0;
    double r = 0.03;  // constant rate of the life-cycle commands
};

struct IncomeConfig {
    double mu = 0.01, sigma = 0.1;
    Distribution initial = Distribution::point(1.0);
    bool exact_gbm = false;
};

struct PopulationConfig {
    Distribution initial_wealth = Distribution::point(10.0);
    int n_paths = 1000;
    std::uint64_t seed = 42;
};

struct GridConfig {
    double L = 60.0;
    int M = 600;
};

struct SolverConfig {
    double tol = -1.0;  // <= 0: 1e-6 (1 + |E w0|)
    double damping = 1.0;
    double min_damping = 1e-3;
    int max_iter = 200;
    int degree = 3;
    std::string estimator = "regression";
    std::string scheme = "backward";
    std::string initial_guess = "deterministic";
};

struct EquilibriumConfig {
    double K = 10.0;
    std::vector<double> K_path;
    double T0 = 0.0, T1 = -1.0;  // T1 <= T0: T0 + L
    int cohorts = 21;
    std::string flow = "uniform";
    double growth = 0.02;
    double r_lo = -0.05, r_hi = 0.15;
    double interval = 1e-4;
    double theta = 0.5;
    double tol_eq = -1.0;  // <= 0: mode default
    int max_iter = 100;
    double r0 = 0.03;
    double radius = 1.0;
    std::string update = "clearing";
    double dK = 0.0;       // > 0: also estimate dr/dK (life-cycle mode)
};

struct SweepConfig {
    std::vector<double> rates{-1.0, 0.1, 0.2, 0.3, 0.4, 0.5};
    double t_probe = -1.0;  // < 0: L/2
};

struct NblConfig {
    std::vector<double> static_times;  // empty: L/6, L/2, 5L/6 (10, 30, 50 for L = 60)
    double eta_max = 2.0;
    int eta_points = 21;
};

struct OutputConfig {
    std::string dir = "runs";
    bool emit_paths = true;
    int sample_paths = 10;
};

struct RunConfig {
    ModelConfig model;
    IncomeConfig income;
    PopulationConfig population;
    GridConfig grid;
    SolverConfig solver;
    EquilibriumConfig equilibrium;
    SweepConfig sweep;
    NblConfig nbl;
    OutputConfig output;
};

namespace detail {

inline void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

inline void read_number(const json& j, const char* key, double& out, const std::string& where) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number()) throw ConfigError(where + "." + key + ": expected a number");
    out = j.at(key).get<double>();
    if (!std::isfinite(out)) throw ConfigError(where + "." + key + ": must be finite");
}

inline void read_int(const json& j, const char* key, int& out, const std::string& where) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
    out = j.at(key).get<int>();
}

inline Distribution read_distribution(const json& j, const std::string& where) {
    if (j.is_number()) return Distribution::point(j.get<double>());
    if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
        throw ConfigError(where + ": expected a number or an object with a 'kind'");
    const std::string kind = j.at("kind").get<std::string>();
    double a = 0.0, b = 0.0;
    if (kind == "point") {
        reject_unknown(j, where, {"kind", "value"});
        read_number(j, "value", a, where);
        return Distribution::point(a);
    }
    if (kind == "uniform") {
        reject_unknown(j, where, {"kind", "lo", "hi"});
        read_number(j, "lo", a, where);
        read_number(j, "hi", b, where);
        return Distribution::uniform(a, b);
    }
    if (kind == "lognormal") {
        reject_unknown(j, where, {"kind", "mu", "sigma"});
        read_number(j, "mu", a, where);
        read_number(j, "sigma", b, where);
        return Distribution::lognormal(a, b);
    }
    if (kind == "pareto") {
        reject_unknown(j, where, {"kind", "scale", "shape"});
        read_number(j, "scale", a, where);
        read_number(j, "shape", b, where);
        return Distribution::pareto(a, b);
    }
    throw ConfigError(where + ": unknown distribution kind '" + kind + "'");
}

inline json write_distribution(const Distribution& d) {
    switch (d.kind) {
        case Distribution::Kind::point: return {{"kind", "point"}, {"value", d.a}};
        case Distribution::Kind::uniform: return {{"kind", "uniform"}, {"lo", d.a}, {"hi", d.b}};
        case Distribution::Kind::lognormal: return {{"kind", "lognormal"}, {"mu", d.a}, {"sigma", d.b}};
        case Distribution::Kind::pareto: return {{"kind", "pareto"}, {"scale", d.a}, {"shape", d.b}};
    }
    return {};
}

inline void read_numbers(const json& j, const char* key, std::vector<double>& out, const std::string& where) {
    if (!j.contains(key)) return;
    const auto& a = j.at(key);
    if (!a.is_array()) throw ConfigError(where + "." + key + ": expected an array");
    out.clear();
    for (const auto& v : a) {
        if (!v.is_number()) throw ConfigError(where + "." + key + ": expected numbers");
        out.push_back(v.get<double>());
        if (!std::isfinite(out.back())) throw ConfigError(where + "." + key + ": must be finite");
    }
}

inline void require_choice(const std::string& v, std::initializer_list<const char*> options, const std::string& where) {
    for (const char* o : options)
        if (v == o) return;
    throw ConfigError(where + ": unsupported value '" + v + "'");
}

}  // namespace detail

/// Checks ranges; throws ConfigError.
inline void validate(const RunConfig& c) {
    auto need = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    need(c.model.gamma1 > 0.0 && c.model.gamma2 > 0.0, "model: gamma1 and gamma2 must be > 0");
    need(c.model.eps > 0.0 && c.model.p >= 1.0 && c.model.c_max > c.model.eps, "model: need eps > 0, p >= 1, c_max > eps");
    need(c.model.delta >= 0.0 && c.model.lambda >= 0.0, "model: delta and lambda must be >= 0");
    need(c.income.sigma >= 0.0, "income: sigma must be >= 0");
    need(c.grid.L > 0.0, "grid: L must be > 0");
    need(c.grid.M >= 10, "grid: M must be >= 10");
    need(c.population.n_paths >= 1, "population: n_paths must be >= 1");
    need(c.solver.max_iter >= 1, "solver: max_iter must be >= 1");
    need(c.solver.damping > 0.0 && c.solver.damping <= 1.0, "solver: damping must be in (0, 1]");
    need(c.solver.min_damping > 0.0 && c.solver.min_damping <= c.solver.damping,
         "solver: min_damping must be in (0, damping]");
    need(c.solver.degree >= 0 && c.solver.degree <= kMaxDegree, "solver: degree must be in [0, 8]");
    detail::require_choice(c.solver.estimator, {"regression"}, "solver.estimator");
    detail::require_choice(c.solver.scheme, {"backward", "picard"}, "solver.scheme");
    detail::require_choice(c.solver.initial_guess, {"deterministic", "constant"}, "solver.initial_guess");
    need(c.equilibrium.cohorts >= 2, "equilibrium: cohorts must be >= 2");
    detail::require_choice(c.equilibrium.flow, {"uniform", "exponential"}, "equilibrium.flow");
    detail::require_choice(c.equilibrium.update, {"clearing", "phi"}, "equilibrium.update");
    need(c.equilibrium.r_hi > c.equilibrium.r_lo, "equilibrium: bracket must satisfy r_lo < r_hi");
    need(c.equilibrium.interval > 0.0, "equilibrium: interval must be > 0");
    need(c.equilibrium.theta > 0.0 && c.equilibrium.theta <= 1.0, "equilibrium: theta must be in (0, 1]");
    need(c.equilibrium.max_iter >= 1, "equilibrium: max_iter must be >= 1");
    need(c.equilibrium.radius >= 0.0, "equilibrium: radius must be >= 0");
    need(c.equilibrium.dK >= 0.0, "equilibrium: dK must be >= 0");
    need(c.equilibrium.K_path.empty() || static_cast<int>(c.equilibrium.K_path.size()) == c.grid.M + 1,
         "equilibrium: K_path must have M+1 entries");
    need(c.sweep.t_probe < 0.0 || c.sweep.t_probe <= c.grid.L, "sweep: t_probe must lie in [0, L]");
    for (double t : c.nbl.static_times) need(t >= 0.0 && t <= c.grid.L, "nbl: static_times must lie in [0, L]");
    need(c.nbl.eta_max > 0.0 && c.nbl.eta_points >= 2, "nbl: need eta_max > 0 and eta_points >= 2");
    need(c.output.sample_paths >= 0, "output: sample_paths must be >= 0");
    try {
        c.income.initial.validate("income.eta0", true);
        c.population.initial_wealth.validate("population.initial_wealth", false);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

inline RunConfig parse_config(const json& root) {
    using namespace detail;
    RunConfig c;
    reject_unknown(root, "config",
                   {"model", "income", "population", "grid", "solver", "equilibrium", "sweep", "nbl", "output"});
    if (root.contains("model")) {
        const auto& j = root.at("model");
        reject_unknown(j, "model", {"gamma1", "gamma2", "eps", "p", "c_max", "delta", "lambda", "r"});
        read_number(j, "gamma1", c.model.gamma1, "model");
        read_number(j, "gamma2", c.model.gamma2, "model");
        read_number(j, "eps", c.model.eps, "model");
        read_number(j, "p", c.model.p, "model");
        read_number(j, "c_max", c.model.c_max, "model");
        read_number(j, "delta", c.model.delta, "model");
        read_number(j, "lambda", c.model.lambda, "model");
        read_number(j, "r", c.model.r, "model");
    }
    if (root.contains("income")) {
        const auto& j = root.at("income");
        reject_unknown(j, "income", {"kind", "mu", "sigma", "eta0", "exact_gbm"});
        std::string kind = "gbm";
        read(j, "kind", kind, "income");
        require_choice(kind, {"gbm"}, "income.kind");
        read_number(j, "mu", c.income.mu, "income");
        read_number(j, "sigma", c.income.sigma, "income");
        if (j.contains("eta0")) c.income.initial = read_distribution(j.at("eta0"), "income.eta0");
        read(j, "exact_gbm", c.income.exact_gbm, "income");
    }
    if (root.contains("population")) {
        const auto& j = root.at("population");
        reject_unknown(j, "population", {"initial_wealth", "n_paths", "seed"});
        if (j.contains("initial_wealth"))
            c.population.initial_wealth = read_distribution(j.at("initial_wealth"), "population.initial_wealth");
        read_int(j, "n_paths", c.population.n_paths, "population");
        if (j.contains("seed")) {
            if (!j.at("seed").is_number_unsigned()) throw ConfigError("population.seed: expected an unsigned integer");
            c.population.seed = j.at("seed").get<std::uint64_t>();
        }
    }
    if (root.contains("grid")) {
        const auto& j = root.at("grid");
        reject_unknown(j, "grid", {"L", "M"});
        read_number(j, "L", c.grid.L, "grid");
        read_int(j, "M", c.grid.M, "grid");
    }
    if (root.contains("solver")) {
        const auto& j = root.at("solver");
        reject_unknown(j, "solver",
                       {"tol", "damping", "min_damping", "max_iter", "degree", "estimator", "scheme", "initial_guess"});
        read_number(j, "tol", c.solver.tol, "solver");
        read_number(j, "damping", c.solver.damping, "solver");
        read_number(j, "min_damping", c.solver.min_damping, "solver");
        read_int(j, "max_iter", c.solver.max_iter, "solver");
        read_int(j, "degree", c.solver.degree, "solver");
        read(j, "estimator", c.solver.estimator, "solver");
        read(j, "scheme", c.solver.scheme, "solver");
        read(j, "initial_guess", c.solver.initial_guess, "solver");
    }
    if (root.contains("equilibrium")) {
        const auto& j = root.at("equilibrium");
        reject_unknown(j, "equilibrium",
                       {"K", "K_path", "window", "cohorts", "flow", "growth", "bracket", "interval", "theta", "tol_eq",
                        "max_iter", "r0", "radius", "update", "dK"});
        auto& e = c.equilibrium;
        read_number(j, "K", e.K, "equilibrium");
        read_numbers(j, "K_path", e.K_path, "equilibrium");
        if (j.contains("window")) {
            std::vector<double> w;
            read_numbers(j, "window", w, "equilibrium");
            if (w.size() != 2) throw ConfigError("equilibrium.window: expected [T0, T1]");
            e.T0 = w[0];
            e.T1 = w[1];
            if (!(e.T1 > e.T0)) throw ConfigError("equilibrium.window: need T0 < T1");
        }
        read_int(j, "cohorts", e.cohorts, "equilibrium");
        read(j, "flow", e.flow, "equilibrium");
        read_number(j, "growth", e.growth, "equilibrium");
        if (j.contains("bracket")) {
            std::vector<double> b;
            read_numbers(j, "bracket", b, "equilibrium");
            if (b.size() != 2) throw ConfigError("equilibrium.bracket: expected [r_lo, r_hi]");
            e.r_lo = b[0];
            e.r_hi = b[1];
        }
        read_number(j, "interval", e.interval, "equilibrium");
        read_number(j, "theta", e.theta, "equilibrium");
        read_number(j, "tol_eq", e.tol_eq, "equilibrium");
        read_int(j, "max_iter", e.max_iter, "equilibrium");
        read_number(j, "r0", e.r0, "equilibrium");
        read_number(j, "radius", e.radius, "equilibrium");
        read(j, "update", e.update, "equilibrium");
        read_number(j, "dK", e.dK, "equilibrium");
    }
    if (root.contains("sweep")) {
        const auto& j = root.at("sweep");
        reject_unknown(j, "sweep", {"rates", "t_probe"});
        read_numbers(j, "rates", c.sweep.rates, "sweep");
        read_number(j, "t_probe", c.sweep.t_probe, "sweep");
    }
    if (root.contains("nbl")) {
        const auto& j = root.at("nbl");
        reject_unknown(j, "nbl", {"static_times", "eta_max", "eta_points"});
        read_numbers(j, "static_times", c.nbl.static_times, "nbl");
        read_number(j, "eta_max", c.nbl.eta_max, "nbl");
        read_int(j, "eta_points", c.nbl.eta_points, "nbl");
    }
    if (root.contains("output")) {
        const auto& j = root.at("output");
        reject_unknown(j, "output", {"dir", "emit_paths", "sample_paths"});
        read(j, "dir", c.output.dir, "output");
        read(j, "emit_paths", c.output.emit_paths, "output");
        read_int(j, "sample_paths", c.output.sample_paths, "output");
    }
    validate(c);
    return c;
}

inline RunConfig parse_config_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: not valid JSON: ") + e.what());
    }
    return parse_config(root);
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// Fully populated JSON form; parse_config(to_json(c)) reproduces c.
inline json to_json(const RunConfig& c) {
    using detail::write_distribution;
    json j;
    j["model"] = {{"gamma1", c.model.gamma1}, {"gamma2", c.model.gamma2}, {"eps", c.model.eps},
                  {"p", c.model.p},           {"c_max", c.model.c_max},   {"delta", c.model.delta},
                  {"lambda", c.model.lambda}, {"r", c.model.r}};
    j["income"] = {{"kind", "gbm"},
                   {"mu", c.income.mu},
                   {"sigma", c.income.sigma},
                   {"eta0", write_distribution(c.income.initial)},
                   {"exact_gbm", c.income.exact_gbm}};
    j["population"] = {{"initial_wealth", write_distribution(c.population.initial_wealth)},
                       {"n_paths", c.population.n_paths},
                       {"seed", c.population.seed}};
    j["grid"] = {{"L", c.grid.L}, {"M", c.grid.M}};
    j["solver"] = {{"tol", c.solver.tol},         {"damping", c.solver.damping},   {"min_damping", c.solver.min_damping},
                   {"max_iter", c.solver.max_iter}, {"degree", c.solver.degree},     {"estimator", c.solver.estimator},
                   {"scheme", c.solver.scheme},   {"initial_guess", c.solver.initial_guess}};
    const auto& e = c.equilibrium;
    j["equilibrium"] = {{"K", e.K},
                        {"K_path", e.K_path},
                        {"window", {e.T0, e.T1 > e.T0 ? e.T1 : e.T0 + c.grid.L}},  // default resolved
                        {"cohorts", e.cohorts},
                        {"flow", e.flow},
                        {"growth", e.growth},
                        {"bracket", {e.r_lo, e.r_hi}},
                        {"interval", e.interval},
                        {"theta", e.theta},
                        {"tol_eq", e.tol_eq},
                        {"max_iter", e.max_iter},
                        {"r0", e.r0},
                        {"radius", e.radius},
                        {"update", e.update},
                        {"dK", e.dK}};
    j["sweep"] = {{"rates", c.sweep.rates}, {"t_probe", c.sweep.t_probe}};
    j["nbl"] = {{"static_times", c.nbl.static_times}, {"eta_max", c.nbl.eta_max}, {"eta_points", c.nbl.eta_points}};
    j["output"] = {{"dir", c.output.dir}, {"emit_paths", c.output.emit_paths}, {"sample_paths", c.output.sample_paths}};
    return j;
}

// Translation into solver inputs.

inline std::vector<double> nbl_static_times(const RunConfig& c) {
    if (!c.nbl.static_times.empty()) return c.nbl.static_times;
    return {c.grid.L / 6.0, c.grid.L / 2.0, 5.0 * c.grid.L / 6.0};
}

inline UtilitySpec utility1(const RunConfig& c) {
    return UtilitySpec(c.model.gamma1, c.model.eps, c.model.p, c.model.c_max);
}
inline UtilitySpec utility2(const RunConfig& c) {
    return UtilitySpec(c.model.gamma2, c.model.eps, c.model.p, c.model.c_max);
}

inline LifecycleProblem lifecycle_problem(const RunConfig& c, unsigned threads = 1) {
    LifecycleProblem p;
    p.u1 = utility1(c);
    p.u2 = utility2(c);
    p.disc = DiscountSpec{c.model.delta, c.model.lambda};
    p.income = IncomeModel::gbm(c.income.mu, c.income.sigma, c.income.initial);
    p.income.exact_gbm = c.income.exact_gbm;
    p.initial_wealth = c.population.initial_wealth;
    p.grid = TimeGrid(0.0, c.grid.L, c.grid.M);
    p.rate = RatePath::constant(p.grid, c.model.r);
    p.n_paths = c.population.n_paths;
    p.seed = c.population.seed;
    auto& s = p.solver;
    s.tol_fix = c.solver.tol;
    s.damping = c.solver.damping;
    s.min_damping = c.solver.min_damping;
    s.max_iter = c.solver.max_iter;
    s.estimator.degree = c.solver.degree;
    s.scheme = c.solver.scheme == "picard" ? SolverSettings::Scheme::picard : SolverSettings::Scheme::backward;
    s.initial_guess = c.solver.initial_guess == "constant" ? SolverSettings::InitialGuess::constant
                                                           : SolverSettings::InitialGuess::deterministic;
    s.threads = threads;
    return p;
}

inline DemographicFlow demographic_flow(const RunConfig& c) {
    if (c.equilibrium.flow == "exponential") return DemographicFlow::exponential(c.grid.L, c.equilibrium.growth);
    return DemographicFlow::uniform(c.grid.L);
}

inline LifecycleEquilibriumSettings lifecycle_equilibrium_settings(const RunConfig& c) {
    LifecycleEquilibriumSettings s;
    s.K = c.equilibrium.K;
    s.K_path = c.equilibrium.K_path;
    s.theta = c.equilibrium.theta;
    s.tol_eq = c.equilibrium.tol_eq;
    s.max_iter = c.equilibrium.max_iter;
    s.r0 = c.equilibrium.r0;
    return s;
}

inline OlgSettings olg_settings(const RunConfig& c, unsigned threads) {
    OlgSettings s;
    s.K = c.equilibrium.K;
    s.T0 = c.equilibrium.T0;
    s.T1 = c.equilibrium.T1;
    s.n_cohorts = c.equilibrium.cohorts;
    s.theta = c.equilibrium.theta;
    if (c.equilibrium.tol_eq > 0.0) s.tol_eq = c.equilibrium.tol_eq;
    s.max_iter = c.equilibrium.max_iter;
    s.r0 = c.equilibrium.r0;
    s.radius = c.equilibrium.radius;
    s.update = c.equilibrium.update == "phi" ? OlgSettings::Update::phi : OlgSettings::Update::clearing;
    s.threads = threads;
    return s;
}

inline StationarySettings stationary_settings(const RunConfig& c, unsigned threads) {
    StationarySettings s;
    s.K = c.equilibrium.K;
    s.r_lo = c.equilibrium.r_lo;
    s.r_hi = c.equilibrium.r_hi;
    s.interval = c.equilibrium.interval;
    s.T0 = c.equilibrium.T0;
    s.T1 = c.equilibrium.T1;
    s.n_cohorts = c.equilibrium.cohorts;
    s.threads = threads;
    return s;
}

}  // namespace olg::io
