#pragma once
// Overlapping-generations equilibrium: the Phi_L rate map, the clearing
// iteration on the calendar window, and the constant-rate search for
// stationary populations.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "olg/core/rate_path.hpp"
#include "olg/equilibrium/cohorts.hpp"
#include "olg/equilibrium/demography.hpp"
#include "olg/equilibrium/lifecycle_equilibrium.hpp"
#include "olg/equilibrium/result.hpp"
#include "olg/lifecycle/picard.hpp"

namespace olg {

/// Rate implied by the aggregate wealth balance, per calendar node:
///   Phi_t = n(t,t-L) E[w^{t-L}_t] - n(t,t) E[w^t_t] - (N_t - C_t) - int E[w^b_t] d_t n(t,b) db,
/// which equals r W_t - dW/dt; divided by K it has the equilibrium rate as a
/// fixed point. Cohorts must already be solved at r.
inline std::vector<double> olg_phi_map(const CohortFamily& cohorts, const DemographicFlow& flow, double K) {
    if (!flow.has_time_derivative())
        throw std::invalid_argument("phi map: the demographic flow has no time derivative");
    if (K == 0.0) throw std::domain_error("phi map: K must be nonzero");
    if (!cohorts.solved()) throw std::logic_error("phi map: cohorts are not solved");
    using Q = CohortFamily::Quantity;
    const TimeGrid& cal = cohorts.calendar();
    const TimeGrid& life = cohorts.base().grid;
    const int M = life.M();
    const auto weights = trapezoid_weights(life);
    std::vector<double> out(static_cast<std::size_t>(cal.size()));
    for (int j = 0; j <= cal.M(); ++j) {
        const double t = cal.node(j);
        const Aggregate agg = cohorts.aggregates(flow, t);
        const double L = cohorts.L();
        double dn_term = 0.0;
        for (int k = 0; k <= M; ++k) {
            const double age = life.node(k) - life.t0();
            dn_term += weights[static_cast<std::size_t>(k)] * flow.dn_dt(t, t - age) *
                       cohorts.mean_at_age(t - age, Q::wealth, k);
        }
        const double oldest = flow.n(t, t - L) * cohorts.mean_at_age(t - L, Q::wealth, M);
        const double newborn = flow.n(t, t) * cohorts.mean_at_age(t, Q::wealth, 0);
        const double phi = oldest - newborn - (agg.income - agg.consumption) - dn_term;
        out[static_cast<std::size_t>(j)] = phi / K;
    }
    return out;
}

struct OlgSettings {
    enum class Update { clearing, phi };
    double K = 10.0;
    double T0 = 0.0;
    double T1 = -1.0;        // <= T0 selects T0 + L
    int n_cohorts = 21;
    double theta = 0.5;
    double tol_eq = 1e-3;    // rate units
    int max_iter = 100;
    double r0 = 0.03;
    double radius = 1.0;     // R in the admissible ball R + 2 |nu| sup_b E|w_b|
    double bump = 1e-3;      // uniform bump for the clearing slope
    Update update = Update::clearing;
    unsigned threads = 1;

    void validate() const {
        if (!std::isfinite(K) || K == 0.0) throw std::invalid_argument("olg: K must be finite and nonzero");
        if (!(theta > 0.0 && theta <= 1.0)) throw std::invalid_argument("olg: theta must be in (0, 1]");
        if (!(tol_eq > 0.0)) throw std::invalid_argument("olg: tol_eq must be > 0");
        if (max_iter < 1) throw std::invalid_argument("olg: max_iter must be >= 1");
        if (n_cohorts < 2) throw std::invalid_argument("olg: need at least 2 cohorts");
        if (!(radius >= 0.0)) throw std::invalid_argument("olg: radius must be >= 0");
        if (!(bump > 0.0)) throw std::invalid_argument("olg: bump must be > 0");
    }
};

struct OlgResult : EquilibriumResult {
    std::vector<double> phi;        // Phi_L(r)/K at the final rate
    std::vector<double> wealth;     // aggregate wealth per calendar node
    std::vector<double> slope;      // dW_t/dr used by the clearing update
    double phi_residual = 0.0;      // sup |Phi_L(r)/K - r|
    double ball_radius = 0.0;
    double projection_share = 0.0;  // fraction of iterations that hit the ball
};

namespace detail {

inline std::vector<Aggregate> all_aggregates(const CohortFamily& f, const DemographicFlow& flow) {
    std::vector<Aggregate> out;
    for (int j = 0; j <= f.calendar().M(); ++j) out.push_back(f.aggregates(flow, f.calendar().node(j)));
    return out;
}

}  // namespace detail

/// Damped equilibrium iteration on the calendar window starting from r0.
/// The default update moves r_t against the clearing error with the chord
/// slope dW_t/dr from a uniform bump; the alternative applies
/// r <- (1 - theta) r + theta Phi_L(r)/K. Iterates are projected onto the
/// ball |r| <= R + 2 |nu| sup_b E|w_b|.
inline OlgResult olg_equilibrium_solve(const LifecycleProblem& base, const DemographicFlow& flow,
                                       const OlgSettings& s) {
    s.validate();
    flow.validate();
    base.validate();
    if (std::abs(flow.L() - base.grid.L()) > 1e-12)
        throw std::invalid_argument("olg: flow and life-cycle lifespans differ");
    const double T1 = s.T1 > s.T0 ? s.T1 : s.T0 + base.grid.L();
    CohortFamily family(base, s.T0, T1, s.n_cohorts);
    const TimeGrid& cal = family.calendar();
    OlgResult out;
    out.K.assign(static_cast<std::size_t>(cal.size()), s.K);
    out.tolerance = s.tol_eq;

    RatePath r = RatePath::constant(cal, s.r0);
    family.solve(r, s.threads);
    out.ball_radius = s.radius + 2.0 * flow.norm(s.T0, T1) * family.initial_wealth_norm();
    auto aggs = detail::all_aggregates(family, flow);

    std::vector<double> slope(static_cast<std::size_t>(cal.size()), 0.0);
    if (s.update == OlgSettings::Update::clearing) {
        CohortFamily bumped = family;
        bumped.solve(r.axpby(1.0, RatePath::constant(cal, s.bump), 1.0), s.threads);
        for (int j = 0; j <= cal.M(); ++j) {
            const auto k = static_cast<std::size_t>(j);
            slope[k] = (bumped.aggregates(flow, cal.node(j)).wealth - aggs[k].wealth) / s.bump;
            if (!(std::abs(slope[k]) > 1e-12)) {
                out.rate = r;
                out.message = "aggregate wealth does not respond to the rate";
                return out;
            }
        }
    }
    out.slope = slope;

    int projections = 0;
    for (int k = 1; k <= s.max_iter; ++k) {
        if (!family.all_converged()) ++out.inner_failures;
        EquilibriumIteration it;
        it.iteration = k;
        it.damping = s.theta;
        std::vector<double> next = r.values();
        double clearing = 0.0, rate_err = 0.0;
        for (std::size_t j = 0; j < next.size(); ++j) {
            clearing = std::max(clearing, std::abs(aggs[j].wealth - s.K));
            if (s.update == OlgSettings::Update::clearing) {
                const double step = (aggs[j].wealth - s.K) / slope[j];
                rate_err = std::max(rate_err, std::abs(step));
                next[j] -= s.theta * step;
            }
        }
        if (s.update == OlgSettings::Update::phi) {
            const auto phi = olg_phi_map(family, flow, s.K);
            for (std::size_t j = 0; j < next.size(); ++j) {
                rate_err = std::max(rate_err, std::abs(phi[j] - next[j]));
                next[j] = (1.0 - s.theta) * next[j] + s.theta * phi[j];
            }
        }
        it.clearing = clearing;
        it.map_residual = rate_err;
        out.rate = r;
        out.clearing = clearing;
        out.map_residual = rate_err;
        if (!std::isfinite(rate_err)) {
            out.history.push_back(it);
            out.message = "rate iterates became non-finite";
            break;
        }
        if (rate_err <= s.tol_eq && family.all_converged()) {
            out.history.push_back(it);
            out.converged = true;
            break;
        }
        for (double& v : next) {
            const double c = std::clamp(v, -out.ball_radius, out.ball_radius);
            if (c != v) it.projected = true;
            v = c;
        }
        if (it.projected) ++projections;
        out.history.push_back(it);
        r = RatePath(cal, std::move(next));
        family.solve(r, s.threads);
        aggs = detail::all_aggregates(family, flow);
    }
    out.projection_share = static_cast<double>(projections) / std::max(1, out.iterations());
    if (out.projection_share > 0.5) {
        out.converged = false;
        out.message = "iterates left the admissible ball on more than half of the iterations; lifespan too long";
    } else if (!out.converged && out.message.empty()) {
        out.message = "outer iteration limit reached";
    }
    for (const auto& a : aggs) {
        out.wealth.push_back(a.wealth);
        out.mean_wealth.push_back(a.wealth);
        out.wealth_se.push_back(a.wealth_se);
    }
    if (flow.has_time_derivative()) {
        out.phi = olg_phi_map(family, flow, s.K);
        out.phi_residual = detail::sup_gap(out.phi, out.rate.values());
    }
    return out;
}

// Constant-rate search for stationary populations.

struct StationarySettings {
    double K = 10.0;
    double r_lo = -0.05;
    double r_hi = 0.15;
    double interval = 1e-4;  // bisection stops when r_hi - r_lo <= interval
    int max_widen = 4;
    double T0 = 0.0;
    double T1 = -1.0;        // <= T0 selects T0 + L
    int n_cohorts = 21;
    unsigned threads = 1;

    void validate() const {
        if (!std::isfinite(K)) throw std::invalid_argument("stationary: K must be finite");
        if (!(r_hi > r_lo)) throw std::invalid_argument("stationary: bracket must satisfy r_lo < r_hi");
        if (!(interval > 0.0)) throw std::invalid_argument("stationary: interval must be > 0");
        if (max_widen < 0) throw std::invalid_argument("stationary: max_widen must be >= 0");
    }
};

struct StationaryResult {
    double rate = 0.0;
    double r_lo = 0.0, r_hi = 0.0;   // final bracket
    int evaluations = 0;
    int widenings = 0;
    std::vector<std::array<double, 2>> trace;  // (r, W(r) - K) per evaluation
    double wealth = 0.0;             // representative aggregate wealth at the rate
    double wealth_se = 0.0;
    // Verification on the full cohort family at the constant rate.
    std::vector<double> times;
    std::vector<double> family_wealth;
    std::vector<double> family_se;
    double stationarity_excess = 0.0;  // max_t |W_t - K| / (3 SE_t); <= 1 passes
    double sup_deviation = 0.0;        // max_t |W_t - W_t*|
    bool stationary = false;
    struct CohortComparison {
        int cohort = 0;
        double age = 0.0;
        double mean = 0.0, pooled = 0.0, se = 0.0;
    };
    std::vector<CohortComparison> cross_cohort;
    double cross_cohort_excess = 0.0;  // max |mean - pooled| / (3 SE); <= 1 passes
    bool cohorts_agree = false;
    bool converged = false;
    std::string message;
};

/// Aggregate wealth of a stationary population at constant rate r from one
/// representative cohort: W = sum_k omega_k f(a_k) E[w(a_k)] with the age
/// density f. Returns (W, SE).
inline std::pair<double, double> representative_wealth(const LifecycleProblem& base, const DemographicFlow& flow,
                                                       double r) {
    LifecycleProblem p = base;
    p.grid = base.grid.shifted_to(0.0);
    p.rate = RatePath::constant(p.grid, r);
    const auto sol = picard_solve(p);
    if (!sol.converged) throw std::runtime_error("stationary: life-cycle solve did not converge at r = " + std::to_string(r));
    const auto weights = trapezoid_weights(p.grid);
    Vector beta(p.grid.size());
    for (int k = 0; k <= p.grid.M(); ++k) {
        const double age = p.grid.node(k);
        beta[k] = weights[static_cast<std::size_t>(k)] * flow.n(0.0, -age);
    }
    const Vector y = sol.ensemble.wealth * beta;
    const double m = y.mean();
    const double var = y.size() > 1 ? (y.array() - m).square().sum() / static_cast<double>(y.size() - 1) : 0.0;
    return {m, std::sqrt(var / static_cast<double>(y.size()))};
}

/// Bisection for the constant rate clearing W(r) = K, then verification of
/// first-order stationarity and cross-cohort age profiles on the full family.
inline StationaryResult stationary_rate_bisect(const LifecycleProblem& base, const DemographicFlow& flow,
                                               const StationarySettings& s) {
    s.validate();
    flow.validate();
    if (!flow.stationary()) throw std::invalid_argument("stationary: the flow must be stationary");
    if (std::abs(flow.L() - base.grid.L()) > 1e-12)
        throw std::invalid_argument("stationary: flow and life-cycle lifespans differ");
    StationaryResult out;
    auto excess = [&](double r) {
        ++out.evaluations;
        const double e = representative_wealth(base, flow, r).first - s.K;
        out.trace.push_back({r, e});
        return e;
    };
    double lo = s.r_lo, hi = s.r_hi;
    double f_lo = excess(lo), f_hi = excess(hi);
    while (f_lo * f_hi > 0.0) {
        if (out.widenings >= s.max_widen)
            throw std::runtime_error(
                "stationary: no sign change of aggregate wealth minus K after widening the bracket to [" +
                std::to_string(lo) + ", " + std::to_string(hi) +
                "]; K lies outside the attainable range (expected wealth stays non-positive as r -> -1 and grows "
                "without bound as r increases)");
        const double mid = 0.5 * (lo + hi), half = hi - lo;
        lo = mid - half;
        hi = mid + half;
        f_lo = excess(lo);
        f_hi = excess(hi);
        ++out.widenings;
    }
    while (hi - lo > s.interval) {
        const double mid = 0.5 * (lo + hi);
        const double f_mid = excess(mid);
        if (f_mid == 0.0) {
            lo = hi = mid;
            break;
        }
        if ((f_mid < 0.0) == (f_lo < 0.0)) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    out.r_lo = lo;
    out.r_hi = hi;
    out.rate = 0.5 * (lo + hi);
    std::tie(out.wealth, out.wealth_se) = representative_wealth(base, flow, out.rate);

    // Verification on the cohort family.
    const double T1 = s.T1 > s.T0 ? s.T1 : s.T0 + base.grid.L();
    CohortFamily family(base, s.T0, T1, s.n_cohorts);
    family.solve(RatePath::constant(family.calendar(), out.rate), s.threads);
    if (!family.all_converged()) out.message = "a cohort solve did not converge at the bisection rate";
    const TimeGrid& cal = family.calendar();
    const int j_ref = cal.M() / 2;
    std::vector<double> W;
    for (int j = 0; j <= cal.M(); ++j) {
        const Aggregate a = family.aggregates(flow, cal.node(j));
        out.times.push_back(cal.node(j));
        out.family_wealth.push_back(a.wealth);
        out.family_se.push_back(a.wealth_se);
        const double se = std::sqrt(a.wealth_se * a.wealth_se + out.wealth_se * out.wealth_se);
        out.stationarity_excess = std::max(out.stationarity_excess, std::abs(a.wealth - s.K) / (3.0 * se));
    }
    for (double w : out.family_wealth)
        out.sup_deviation = std::max(out.sup_deviation, std::abs(w - out.family_wealth[static_cast<std::size_t>(j_ref)]));
    out.stationary = out.stationarity_excess <= 1.0;

    // Cross-cohort: each cohort's mean wealth at ages L/4, L/2, 3L/4, L
    // against the mean pooled over all cohorts; the standard error is that of
    // the difference (the cohort is part of the pool).
    const TimeGrid& life = base.grid;
    const int n = family.size();
    for (int q = 1; q <= 4; ++q) {
        const int k = static_cast<int>(std::lround(q * life.M() / 4.0));
        std::vector<double> means(static_cast<std::size_t>(n)), vars(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const auto col = family.data(i, CohortFamily::Quantity::wealth).col(k);
            const double m = col.mean();
            const double v = col.size() > 1 ? (col.array() - m).square().sum() / static_cast<double>(col.size() - 1) : 0.0;
            means[static_cast<std::size_t>(i)] = m;
            vars[static_cast<std::size_t>(i)] = v / static_cast<double>(col.size());
        }
        double pooled = 0.0, pooled_var = 0.0;
        for (int i = 0; i < n; ++i) {
            pooled += means[static_cast<std::size_t>(i)] / n;
            pooled_var += vars[static_cast<std::size_t>(i)] / (static_cast<double>(n) * n);
        }
        for (int i = 0; i < n; ++i) {
            const double vi = vars[static_cast<std::size_t>(i)];
            const double se = std::sqrt(std::max(0.0, vi * (1.0 - 2.0 / n) + pooled_var));
            StationaryResult::CohortComparison c{i, life.node(k) - life.t0(), means[static_cast<std::size_t>(i)], pooled, se};
            out.cross_cohort.push_back(c);
            const double gap = std::abs(c.mean - c.pooled);
            out.cross_cohort_excess = std::max(out.cross_cohort_excess, se > 0.0 ? gap / (3.0 * se) : (gap > 0.0 ? 1e300 : 0.0));
        }
    }
    out.cohorts_agree = out.cross_cohort_excess <= 1.0;
    out.converged = family.all_converged();
    return out;
}

}  // namespace olg
