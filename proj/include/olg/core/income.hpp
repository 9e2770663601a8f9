#pragma once
// Income dynamics (GBM or custom Ito diffusion), initial-value laws and the
// seeded Euler-Maruyama path simulator.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "olg/core/parallel.hpp"
#include "olg/core/random.hpp"
#include "olg/core/time_grid.hpp"

namespace olg {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
using Vector = Eigen::VectorXd;

/// Law of an initial value (income or wealth at birth).
struct Distribution {
    enum class Kind { point, uniform, lognormal, pareto };
    Kind kind = Kind::point;
    double a = 0.0;  // point value | lower bound | log-mean | Pareto scale
    double b = 0.0;  // unused      | upper bound | log-sd   | Pareto shape

    static Distribution point(double v) { return {Kind::point, v, 0.0}; }
    static Distribution uniform(double lo, double hi) { return {Kind::uniform, lo, hi}; }
    static Distribution lognormal(double m, double s) { return {Kind::lognormal, m, s}; }
    static Distribution pareto(double scale, double shape) { return {Kind::pareto, scale, shape}; }

    void validate(const std::string& what, bool nonnegative_support) const {
        auto fail = [&](const std::string& msg) { throw std::invalid_argument(what + ": " + msg); };
        if (!std::isfinite(a) || !std::isfinite(b)) fail("parameters must be finite");
        switch (kind) {
            case Kind::point:
                if (nonnegative_support && a < 0.0) fail("point value must be >= 0");
                break;
            case Kind::uniform:
                if (!(b > a)) fail("uniform law needs lower < upper");
                if (nonnegative_support && a < 0.0) fail("uniform support must be >= 0");
                break;
            case Kind::lognormal:
                if (!(b > 0.0)) fail("lognormal scale must be > 0");
                break;
            case Kind::pareto:
                if (!(a > 0.0) || !(b > 0.0)) fail("pareto scale and shape must be > 0");
                break;
        }
    }

    double mean() const {
        switch (kind) {
            case Kind::point: return a;
            case Kind::uniform: return 0.5 * (a + b);
            case Kind::lognormal: return std::exp(a + 0.5 * b * b);
            case Kind::pareto: return b > 1.0 ? a * b / (b - 1.0) : INFINITY;
        }
        return a;
    }

    template <class Rng>
    double sample(Rng& rng) const {
        switch (kind) {
            case Kind::point: return a;
            case Kind::uniform: return std::uniform_real_distribution<double>(a, b)(rng);
            case Kind::lognormal: return std::exp(a + b * std::normal_distribution<double>(0.0, 1.0)(rng));
            case Kind::pareto: {
                const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
                return a * std::pow(1.0 - u, -1.0 / b);
            }
        }
        return a;
    }
};

/// Income diffusion d eta = mu(t, eta) dt + sigma(t, eta) dB.
struct IncomeModel {
    struct Gbm {
        double mu = 0.01;
        double sigma = 0.1;
    };
    struct Custom {
        std::function<double(double, double)> drift;
        std::function<double(double, double)> vol;
    };

    std::variant<Gbm, Custom> kind = Gbm{};
    Distribution initial = Distribution::point(1.0);
    bool exact_gbm = false;  // validation flag: log-exact GBM steps instead of Euler

    static IncomeModel gbm(double mu, double sigma, Distribution initial = Distribution::point(1.0)) {
        IncomeModel m;
        m.kind = Gbm{mu, sigma};
        m.initial = initial;
        return m;
    }

    bool is_gbm() const { return std::holds_alternative<Gbm>(kind); }
    const Gbm& gbm_params() const { return std::get<Gbm>(kind); }

    void validate() const {
        initial.validate("income initial law", true);
        if (const auto* g = std::get_if<Gbm>(&kind)) {
            if (!std::isfinite(g->mu) || !std::isfinite(g->sigma) || g->sigma < 0.0)
                throw std::invalid_argument("income: GBM needs finite mu and sigma >= 0");
        } else {
            const auto& c = std::get<Custom>(kind);
            if (!c.drift || !c.vol) throw std::invalid_argument("income: custom model needs drift and vol");
        }
    }

    double drift(double t, double eta) const {
        if (const auto* g = std::get_if<Gbm>(&kind)) return g->mu * eta;
        return std::get<Custom>(kind).drift(t, eta);
    }
    double vol(double t, double eta) const {
        if (const auto* g = std::get_if<Gbm>(&kind)) return g->sigma * eta;
        return std::get<Custom>(kind).vol(t, eta);
    }
};

/// One income path from a given start value using generator `rng`.
template <class Rng>
void simulate_income_path(const IncomeModel& model, const TimeGrid& grid, double eta0, Rng& rng,
                          double* out, std::ptrdiff_t stride, int first_node = 0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);
    double eta = eta0;
    out[first_node * stride] = eta;
    const bool exact = model.exact_gbm && model.is_gbm();
    for (int j = first_node; j < grid.M(); ++j) {
        const double z = normal(rng);
        if (exact) {
            const auto& g = model.gbm_params();
            eta *= std::exp((g.mu - 0.5 * g.sigma * g.sigma) * dt + g.sigma * sdt * z);
        } else {
            const double t = grid.node(j);
            eta += model.drift(t, eta) * dt + model.vol(t, eta) * sdt * z;
        }
        eta = std::max(eta, 0.0);
        out[(j + 1) * stride] = eta;
    }
}

/// N x (M+1) income array; row p depends only on (seed, cohort, p).
inline Matrix simulate_income(const IncomeModel& model, const TimeGrid& grid, int n_paths, std::uint64_t seed,
                              std::uint64_t cohort = 0, unsigned threads = 1) {
    if (n_paths < 1) throw std::invalid_argument("simulate_income: n_paths must be >= 1");
    model.validate();
    Matrix eta(n_paths, grid.size());
    const std::ptrdiff_t stride = eta.outerStride();
    parallel_for(static_cast<std::size_t>(n_paths), threads, [&](std::size_t p) {
        auto init_rng = make_path_stream(seed, StreamKind::initial_income, cohort, p);
        const double eta0 = model.initial.sample(init_rng);
        auto rng = make_path_stream(seed, StreamKind::income, cohort, p);
        simulate_income_path(model, grid, eta0, rng, eta.data() + p, stride);
    });
    return eta;
}

/// Initial wealth draws, one per path.
inline Vector sample_initial_wealth(const Distribution& law, int n_paths, std::uint64_t seed,
                                    std::uint64_t cohort = 0) {
    law.validate("initial wealth law", false);
    Vector w(n_paths);
    for (int p = 0; p < n_paths; ++p) {
        auto rng = make_path_stream(seed, StreamKind::initial_wealth, cohort, static_cast<std::uint64_t>(p));
        w[p] = law.sample(rng);
    }
    return w;
}

}  // namespace olg
