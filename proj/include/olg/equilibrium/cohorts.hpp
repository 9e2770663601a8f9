#pragma once
// Families of cohorts born over [T0 - L, T1] and their population aggregates
// on the calendar window [T0, T1].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <stdexcept>
#include <vector>

#include "olg/core/parallel.hpp"
#include "olg/core/rate_path.hpp"
#include "olg/equilibrium/demography.hpp"
#include "olg/lifecycle/picard.hpp"

namespace olg {

/// Expected aggregates at one calendar time with Monte Carlo standard errors.
struct Aggregate {
    double wealth = 0.0;
    double consumption = 0.0;
    double income = 0.0;
    double wealth_se = 0.0;
    double consumption_se = 0.0;
    double income_se = 0.0;
};

class CohortFamily {
public:
    enum class Quantity { wealth, consumption, income };

    /// `base` supplies the life-cycle model, the lifespan grid (its t0 is
    /// ignored), path count and seed; cohort i uses stream index i.
    CohortFamily(LifecycleProblem base, double T0, double T1, int n_cohorts = 21)
        : base_(std::move(base)), T0_(T0), T1_(T1) {
        if (!(T1 > T0)) throw std::invalid_argument("cohorts: window must satisfy T1 > T0");
        if (n_cohorts < 2) throw std::invalid_argument("cohorts: need at least 2 cohorts");
        const double L = base_.grid.L();
        for (int i = 0; i < n_cohorts; ++i) births_.push_back((T0 - L) + (T1 - T0 + L) * i / (n_cohorts - 1));
        const double dt = base_.grid.dt();
        const int M_cal = std::max(1, static_cast<int>(std::lround((T1 - T0) / dt)));
        calendar_ = TimeGrid(T0, T1 - T0, M_cal);
    }

    const LifecycleProblem& base() const { return base_; }
    const std::vector<double>& births() const { return births_; }
    const TimeGrid& calendar() const { return calendar_; }
    double T0() const { return T0_; }
    double T1() const { return T1_; }
    double L() const { return base_.grid.L(); }
    int size() const { return static_cast<int>(births_.size()); }
    const std::vector<LifecycleSolution>& solutions() const { return solutions_; }
    bool solved() const { return !solutions_.empty(); }

    /// Rate path seen by a cohort born at b (constant extrapolation of r
    /// outside its grid).
    RatePath cohort_rate(const RatePath& r, double b) const {
        const TimeGrid g = base_.grid.shifted_to(b);
        std::vector<double> v(static_cast<std::size_t>(g.size()));
        for (int k = 0; k < g.size(); ++k) v[static_cast<std::size_t>(k)] = r.at(g.node(k));
        return RatePath(g, std::move(v));
    }

    /// Solves every cohort at calendar rate r; cohorts run in parallel.
    void solve(const RatePath& r, unsigned threads = 1) {
        std::vector<LifecycleSolution> out(births_.size());
        parallel_for(births_.size(), threads, [&](std::size_t i) {
            LifecycleProblem p = base_;
            p.grid = base_.grid.shifted_to(births_[i]);
            p.rate = cohort_rate(r, births_[i]);
            p.cohort = static_cast<std::uint64_t>(i);
            p.solver.threads = 1;
            out[i] = picard_solve(p);
        });
        solutions_ = std::move(out);
    }

    bool all_converged() const {
        return solved() && std::all_of(solutions_.begin(), solutions_.end(), [](const auto& s) { return s.converged; });
    }

    int total_iterations() const {
        int n = 0;
        for (const auto& s : solutions_) n += s.iterations;
        return n;
    }

    const Matrix& data(int i, Quantity q) const {
        const auto& e = solutions_.at(static_cast<std::size_t>(i)).ensemble;
        switch (q) {
            case Quantity::wealth:
                return e.wealth;
            case Quantity::consumption:
                return e.consumption;
            case Quantity::income:
                break;
        }
        return e.income;
    }

    /// Mean over paths of quantity q for cohort i at age node k.
    double cohort_mean(int i, Quantity q, int k) const { return data(i, q).col(k).mean(); }

    /// Interpolation weights in birth date: b = (1 - w) b_i + w b_{i+1}.
    std::pair<int, double> locate_birth(double b) const {
        const double lo = births_.front();
        const double hi = births_.back();
        const double tol = 1e-9 * std::max(1.0, std::abs(hi - lo));
        if (b < lo - tol || b > hi + tol) throw std::out_of_range("cohorts: birth date outside the simulated range");
        const double step = (hi - lo) / (size() - 1);
        int i = static_cast<int>(std::floor((b - lo) / step));
        i = std::clamp(i, 0, size() - 2);
        return {i, std::clamp((b - births_[static_cast<std::size_t>(i)]) / step, 0.0, 1.0)};
    }

    /// Mean of quantity q at age node k for birth date b (linear in b at a
    /// fixed age).
    double mean_at_age(double b, Quantity q, int k) const {
        const auto [i, w] = locate_birth(b);
        return (1.0 - w) * cohort_mean(i, q, k) + w * cohort_mean(i + 1, q, k);
    }

    /// Expected aggregates at calendar time t in [T0, T1]: trapezoid rule over
    /// the age nodes a_k, birth b = t - a_k, cohort values interpolated in b.
    /// The standard error is exact for this estimator: cohorts are
    /// independent, and within a cohort the weighted sum is formed per path.
    Aggregate aggregates(const DemographicFlow& flow, double t) const {
        require_solved();
        if (t < T0_ - 1e-9 || t > T1_ + 1e-9) throw std::out_of_range("cohorts: time outside the window");
        const auto weights = trapezoid_weights(base_.grid);
        const int M = base_.grid.M();
        const Eigen::Index n = data(0, Quantity::wealth).rows();
        // Per-cohort path weights: beta(i, k).
        Matrix beta = Matrix::Zero(size(), M + 1);
        for (int k = 0; k <= M; ++k) {
            const double age = base_.grid.node(k) - base_.grid.t0();
            const double b = t - age;
            const auto [i, w] = locate_birth(b);
            const double mass = weights[static_cast<std::size_t>(k)] * flow.n(t, b);
            beta(i, k) += (1.0 - w) * mass;
            beta(i + 1, k) += w * mass;
        }
        Aggregate out;
        double var_w = 0.0, var_c = 0.0, var_n = 0.0;
        for (int i = 0; i < size(); ++i) {
            if (beta.row(i).cwiseAbs().sum() == 0.0) continue;
            const Vector bw = beta.row(i).transpose();
            const Vector yw = data(i, Quantity::wealth) * bw;
            const Vector yc = data(i, Quantity::consumption) * bw;
            const Vector yn = data(i, Quantity::income) * bw;
            out.wealth += yw.mean();
            out.consumption += yc.mean();
            out.income += yn.mean();
            var_w += sample_variance(yw) / static_cast<double>(n);
            var_c += sample_variance(yc) / static_cast<double>(n);
            var_n += sample_variance(yn) / static_cast<double>(n);
        }
        out.wealth_se = std::sqrt(var_w);
        out.consumption_se = std::sqrt(var_c);
        out.income_se = std::sqrt(var_n);
        return out;
    }

    /// sup_b E|w_b^b| over the simulated cohorts.
    double initial_wealth_norm() const {
        require_solved();
        double s = 0.0;
        for (int i = 0; i < size(); ++i) s = std::max(s, data(i, Quantity::wealth).col(0).cwiseAbs().mean());
        return s;
    }

private:
    void require_solved() const {
        if (!solved()) throw std::logic_error("cohorts: solve() has not been called");
    }

    static double sample_variance(const Vector& v) {
        if (v.size() < 2) return 0.0;
        const double m = v.mean();
        return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
    }

    LifecycleProblem base_;
    double T0_;
    double T1_;
    std::vector<double> births_;
    TimeGrid calendar_{0.0, 1.0, 1};
    std::vector<LifecycleSolution> solutions_;
};

}  // namespace olg
