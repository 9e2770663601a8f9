#pragma once
// Single-cohort general equilibrium: the rate path that keeps expected wealth
// equal to the capital supply K_t. Along the explicit wealth recursion,
// E[w_j] = K_j for all j holds exactly when
//   r_j K_j = E[c_j] - E[eta_j] + (K_{j+1} - K_j)/dt,
// which is iterated with damping. The initial wealth sample is shifted to
// mean K_0 so the first node clears by construction.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "olg/core/ensemble.hpp"
#include "olg/core/rate_path.hpp"
#include "olg/equilibrium/result.hpp"
#include "olg/lifecycle/picard.hpp"

namespace olg {

struct LifecycleEquilibriumSettings {
    double K = 10.0;
    std::vector<double> K_path;           // optional: K per node (overrides K)
    double theta = 0.5;                   // damping of the rate update
    double tol_eq = -1.0;                 // wealth units; <= 0 selects 1e-3 (1 + |K|)
    double tol_rate = 0.0;                // if > 0, also require sup|Phi(r) - r| <= tol_rate
    int max_iter = 200;
    int patience = 20;                    // stop after this many iterations without a new best residual
    double r0 = 0.03;
    std::optional<RatePath> initial_rate; // warm start (overrides r0)
    std::optional<double> initial_mean;   // mean of the w0 sample; default K_0
    double bump = 1e-3;                   // uniform rate bump for the K = 0 chord slope
    double max_step = 0.05;               // K = 0: cap on |r change| per node and iteration

    void validate() const {
        if (!(theta > 0.0 && theta <= 1.0)) throw std::invalid_argument("equilibrium: theta must be in (0, 1]");
        if (max_iter < 1) throw std::invalid_argument("equilibrium: max_iter must be >= 1");
        if (!std::isfinite(K)) throw std::invalid_argument("equilibrium: K must be finite");
        for (double k : K_path)
            if (!std::isfinite(k)) throw std::invalid_argument("equilibrium: K path must be finite");
        if (!(bump > 0.0)) throw std::invalid_argument("equilibrium: bump must be > 0");
        if (patience < 1) throw std::invalid_argument("equilibrium: patience must be >= 1");
    }
};

/// Capital target per node, from the constant K or the user path.
inline std::vector<double> capital_path(const LifecycleEquilibriumSettings& s, const TimeGrid& grid) {
    if (s.K_path.empty()) return std::vector<double>(static_cast<std::size_t>(grid.size()), s.K);
    if (static_cast<int>(s.K_path.size()) != grid.size())
        throw std::invalid_argument("equilibrium: K path length must equal M+1");
    return s.K_path;
}

/// Rate implied by consumption and income means: (E[c] - E[eta] + dK/dt) / K
/// per node, with a forward difference for dK/dt (backward at the last node).
inline std::vector<double> lifecycle_rate_map(const std::vector<double>& mean_c, const std::vector<double>& mean_eta,
                                              const std::vector<double>& K, double dt) {
    const std::size_t n = K.size();
    if (mean_c.size() != n || mean_eta.size() != n || n < 2)
        throw std::invalid_argument("equilibrium: mismatched node counts");
    std::vector<double> out(n);
    for (std::size_t j = 0; j < n; ++j) {
        if (K[j] == 0.0) throw std::domain_error("equilibrium: the rate map divides by K; K must be nonzero");
        const double kdot = j + 1 < n ? (K[j + 1] - K[j]) / dt : (K[j] - K[j - 1]) / dt;
        out[j] = (mean_c[j] - mean_eta[j] + kdot) / K[j];
    }
    return out;
}

/// Damped update (1 - theta) r + theta phi.
inline RatePath damped_rate_update(const RatePath& r, const std::vector<double>& phi, double theta) {
    return r.axpby(1.0 - theta, RatePath(r.grid(), phi), theta);
}

namespace detail {

struct CohortMeans {
    LifecycleSolution solution;
    std::vector<double> c, eta, w, w_se;
};

inline std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline CohortMeans solve_at(const LifecycleProblem& base, const RatePath& r, double mean0) {
    LifecycleProblem p = base;
    p.rate = r;
    p.initial_wealth_mean = mean0;
    CohortMeans m;
    m.solution = picard_solve(p);
    const auto& e = m.solution.ensemble;
    m.c = to_std(column_means(e.consumption));
    m.eta = to_std(column_means(e.income));
    m.w = to_std(column_means(e.wealth));
    m.w_se = to_std(column_std_errors(e.wealth));
    return m;
}

inline double sup_gap(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
    return s;
}

}  // namespace detail

/// Damped fixed-point iteration for the life-cycle equilibrium rate; for
/// K = 0 a chord root-finder on E[c_t] - E[eta_t] is used instead.
inline EquilibriumResult lifecycle_equilibrium_solve(const LifecycleProblem& base,
                                                     const LifecycleEquilibriumSettings& s) {
    s.validate();
    base.validate();
    const TimeGrid& grid = base.grid;
    EquilibriumResult out;
    out.K = capital_path(s, grid);
    const double Kmax = *std::max_element(out.K.begin(), out.K.end(),
                                          [](double a, double b) { return std::abs(a) < std::abs(b); });
    out.tolerance = s.tol_eq > 0.0 ? s.tol_eq : 1e-3 * (1.0 + std::abs(Kmax));
    const double mean0 = s.initial_mean.value_or(out.K.front());
    const bool zero_capital = std::all_of(out.K.begin(), out.K.end(), [](double k) { return k == 0.0; });
    if (!zero_capital && std::any_of(out.K.begin(), out.K.end(), [](double k) { return k == 0.0; }))
        throw std::domain_error("equilibrium: K path must be nonzero everywhere or identically zero");

    RatePath r = s.initial_rate ? s.initial_rate->resampled(grid) : RatePath::constant(grid, s.r0);
    std::vector<double> slope;
    if (zero_capital) {
        // Chord slope of E[c_t] - E[eta_t] under a uniform rate bump.
        const auto lo = detail::solve_at(base, r, mean0);
        const auto hi = detail::solve_at(base, r.axpby(1.0, RatePath::constant(grid, s.bump), 1.0), mean0);
        slope.resize(lo.c.size());
        for (std::size_t j = 0; j < slope.size(); ++j) {
            slope[j] = ((hi.c[j] - hi.eta[j]) - (lo.c[j] - lo.eta[j])) / s.bump;
            if (!(std::abs(slope[j]) > 1e-12)) {
                out.rate = r;
                out.message = "consumption does not respond to the rate; the K = 0 root is undetermined";
                return out;
            }
        }
    }

    double best = std::numeric_limits<double>::infinity();
    int best_at = 0;
    for (int k = 1; k <= s.max_iter; ++k) {
        detail::CohortMeans m;
        try {
            m = detail::solve_at(base, r, mean0);
        } catch (const std::logic_error& e) {
            // The life-cycle problem became ill-posed along the iteration.
            out.rate = r;
            out.message = std::string("life-cycle solve failed: ") + e.what();
            return out;
        }
        if (!m.solution.converged) ++out.inner_failures;
        EquilibriumIteration it;
        it.iteration = k;
        it.damping = s.theta;
        it.clearing = detail::sup_gap(m.w, out.K);
        std::vector<double> next;
        if (zero_capital) {
            next = r.values();
            double g = 0.0;
            for (std::size_t j = 0; j < next.size(); ++j) {
                const double gap = m.c[j] - m.eta[j];
                g = std::max(g, std::abs(gap));
                next[j] -= std::clamp(s.theta * gap / slope[j], -s.max_step, s.max_step);
            }
            it.map_residual = g;
        } else {
            const auto phi = lifecycle_rate_map(m.c, m.eta, out.K, grid.dt());
            it.map_residual = detail::sup_gap(phi, r.values());
            next = damped_rate_update(r, phi, s.theta).values();
        }
        out.history.push_back(it);
        out.rate = r;
        out.mean_wealth = m.w;
        out.wealth_se = m.w_se;
        out.clearing = it.clearing;
        out.map_residual = it.map_residual;
        if (!std::isfinite(it.map_residual)) {
            out.message = "rate iterates became non-finite";
            return out;
        }
        const bool rate_ok = !(s.tol_rate > 0.0) || it.map_residual <= s.tol_rate;
        if (it.clearing <= out.tolerance && rate_ok && m.solution.converged) {
            out.converged = true;
            return out;
        }
        if (it.map_residual < best) {
            best = it.map_residual;
            best_at = k;
        } else if (k - best_at >= s.patience) {
            out.message = "no progress in " + std::to_string(s.patience) + " iterations";
            return out;
        }
        r = RatePath(grid, std::move(next));
    }
    out.message = "outer iteration limit reached";
    return out;
}

/// Independent re-simulation at the equilibrium rate with another seed.
struct ClearingCheck {
    double sup_residual = 0.0;  // sup_t |E[w_t] - K_t|
    double excess = 0.0;        // sup_t (|E[w_t] - K_t| - 3 SE_t)
    bool passed = false;
};

inline ClearingCheck lifecycle_clearing_check(const LifecycleProblem& base, const EquilibriumResult& eq,
                                              std::uint64_t seed, double tolerance) {
    LifecycleProblem p = base;
    p.seed = seed;
    const auto m = detail::solve_at(p, eq.rate, eq.K.front());
    ClearingCheck c;
    c.excess = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m.w.size(); ++j) {
        const double gap = std::abs(m.w[j] - eq.K[j]);
        c.sup_residual = std::max(c.sup_residual, gap);
        c.excess = std::max(c.excess, gap - 3.0 * m.w_se[j]);
    }
    c.passed = m.solution.converged && c.excess <= tolerance;
    return c;
}

/// Finite-difference dr/dK with the consistency and identity diagnostics.
struct RateSensitivity {
    std::vector<double> coarse;       // central difference at dK
    std::vector<double> fine;         // central difference at dK/2
    std::vector<double> finest;       // central difference at dK/4
    std::vector<double> extrapolated; // (4 fine - coarse) / 3
    double richardson_gap = 0.0;      // sup |coarse - fine|
    double fine_gap = 0.0;            // sup |fine - finest|
    double observed_order = 0.0;      // log2(richardson_gap / fine_gap), 2 for an O(dK^2) difference
    double identity_residual = 0.0;   // sup |D_r E[c](r') - K r' - r|
    double rate_norm = 0.0;           // sup |r|
    bool converged = false;
    std::string message;

    /// Second-order agreement: the observed order is near 2 and the dK and
    /// dK/2 estimates agree to 1% of the extrapolated derivative.
    bool richardson_consistent() const {
        double scale = 0.0;
        for (double v : extrapolated) scale = std::max(scale, std::abs(v));
        return converged && observed_order >= 1.5 && observed_order <= 2.5 && richardson_gap <= 1e-2 * scale;
    }
    bool identity_holds(double rel_tol = 5e-2) const {
        return converged && identity_residual <= rel_tol * rate_norm;
    }
};

/// Perturbed solves keep the base initial-wealth sample fixed (mean K), so K
/// acts only through the rate map and the differentiated identity
///   D_r E[c](dr/dK) - K dr/dK - r = 0
/// holds; the directional derivative is a central bump along dr/dK.
inline RateSensitivity rate_sensitivity_dK(const LifecycleProblem& base, const LifecycleEquilibriumSettings& s,
                                           const EquilibriumResult& eq, double dK, double tol_rate = 1e-10) {
    if (!s.K_path.empty()) throw std::invalid_argument("sensitivity: requires a constant K");
    if (s.K == 0.0) throw std::domain_error("sensitivity: K must be nonzero");
    if (!(dK > 0.0)) throw std::invalid_argument("sensitivity: dK must be > 0");
    RateSensitivity out;
    if (!eq.converged) {
        out.message = "base equilibrium did not converge";
        return out;
    }
    auto solve_K = [&](double K) {
        LifecycleEquilibriumSettings t = s;
        t.K = K;
        t.initial_mean = s.K;
        t.initial_rate = eq.rate;
        t.tol_eq = std::numeric_limits<double>::infinity();
        t.tol_rate = tol_rate;
        t.max_iter = std::max(s.max_iter, 400);
        return lifecycle_equilibrium_solve(base, t);
    };
    const auto r0 = solve_K(s.K);
    const auto rp = solve_K(s.K + dK), rm = solve_K(s.K - dK);
    const auto hp = solve_K(s.K + 0.5 * dK), hm = solve_K(s.K - 0.5 * dK);
    const auto qp = solve_K(s.K + 0.25 * dK), qm = solve_K(s.K - 0.25 * dK);
    out.converged = r0.converged && rp.converged && rm.converged && hp.converged && hm.converged &&
                    qp.converged && qm.converged;
    if (!out.converged) out.message = "a perturbed equilibrium did not converge";
    const std::size_t n = r0.rate.values().size();
    out.coarse.resize(n);
    out.fine.resize(n);
    out.finest.resize(n);
    out.extrapolated.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        out.coarse[j] = (rp.rate.values()[j] - rm.rate.values()[j]) / (2.0 * dK);
        out.fine[j] = (hp.rate.values()[j] - hm.rate.values()[j]) / dK;
        out.finest[j] = (qp.rate.values()[j] - qm.rate.values()[j]) / (0.5 * dK);
        out.extrapolated[j] = (4.0 * out.fine[j] - out.coarse[j]) / 3.0;
        out.richardson_gap = std::max(out.richardson_gap, std::abs(out.coarse[j] - out.fine[j]));
        out.fine_gap = std::max(out.fine_gap, std::abs(out.fine[j] - out.finest[j]));
    }
    out.observed_order = out.fine_gap > 0.0 ? std::log2(out.richardson_gap / out.fine_gap) : 0.0;
    out.rate_norm = r0.rate.sup_norm();

    // Directional derivative of E[c] along r' with a bump of size h ||r'|| = 1e-4.
    const RatePath dir(r0.rate.grid(), out.extrapolated);
    const double h = dir.sup_norm() > 0.0 ? 1e-4 / dir.sup_norm() : 1.0;
    const auto up = detail::solve_at(base, r0.rate.axpby(1.0, dir, h), s.K);
    const auto dn = detail::solve_at(base, r0.rate.axpby(1.0, dir, -h), s.K);
    for (std::size_t j = 0; j < n; ++j) {
        const double dc = (up.c[j] - dn.c[j]) / (2.0 * h);
        const double res = dc - s.K * out.extrapolated[j] - r0.rate.values()[j];
        out.identity_residual = std::max(out.identity_residual, std::abs(res));
    }
    return out;
}

}  // namespace olg
