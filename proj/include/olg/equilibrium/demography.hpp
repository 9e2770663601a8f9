#pragma once
// Demographic flows: for each calendar time t a density n(t, b) over birth
// dates b in [t - L, t], with its time derivative.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

namespace olg {

/// Composite 5-point Gauss-Legendre rule on [a, b].
template <class F>
double integrate(F&& f, double a, double b, int panels = 64) {
    static constexpr std::array<double, 5> x{0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640,
                                             0.9061798459386640};
    static constexpr std::array<double, 5> w{0.5688888888888889, 0.4786286704993665, 0.4786286704993665,
                                             0.2369268850561891, 0.2369268850561891};
    if (panels < 1) throw std::invalid_argument("integrate: need at least one panel");
    const double h = (b - a) / panels;
    double total = 0.0;
    for (int k = 0; k < panels; ++k) {
        const double mid = a + (k + 0.5) * h;
        for (std::size_t q = 0; q < x.size(); ++q) total += w[q] * f(mid + 0.5 * h * x[q]);
    }
    return 0.5 * h * total;
}

class DemographicFlow {
public:
    enum class Kind { stationary_uniform, stationary_exponential, custom };
    using Density = std::function<double(double, double)>;  // (t, b)

    static DemographicFlow uniform(double L) { return DemographicFlow(Kind::stationary_uniform, L, 0.0); }

    /// Stationary flow with age density proportional to e^{-g a}.
    static DemographicFlow exponential(double L, double g) {
        return DemographicFlow(Kind::stationary_exponential, L, g);
    }

    /// Arbitrary flow; `density_dt` may be empty, which disables Phi_L.
    static DemographicFlow custom(double L, Density density, Density density_dt = {}) {
        if (!density) throw std::invalid_argument("demography: custom flow needs a density");
        DemographicFlow f(Kind::custom, L, 0.0);
        f.density_ = std::move(density);
        f.density_dt_ = std::move(density_dt);
        return f;
    }

    Kind kind() const { return kind_; }
    double L() const { return L_; }
    double growth() const { return g_; }
    bool stationary() const { return kind_ != Kind::custom; }
    bool has_time_derivative() const { return kind_ != Kind::custom || static_cast<bool>(density_dt_); }

    /// n(t, b); zero outside [t - L, t].
    double n(double t, double b) const {
        const double age = t - b;
        if (age < 0.0 || age > L_) return 0.0;
        if (kind_ == Kind::custom) return density_(t, b);
        return age_density(age);
    }

    /// d/dt n(t, b) for b inside [t - L, t].
    double dn_dt(double t, double b) const {
        const double age = t - b;
        if (age < 0.0 || age > L_) return 0.0;
        switch (kind_) {
            case Kind::stationary_uniform:
                return 0.0;
            case Kind::stationary_exponential:
                return -g_ * age_density(age);
            case Kind::custom:
                break;
        }
        if (!density_dt_) throw std::invalid_argument("demography: custom flow has no time derivative");
        return density_dt_(t, b);
    }

    /// sup |n| + sup |d_t n| over t and b in [t - L, t]. Exact for the
    /// stationary kinds; for custom flows sampled on t in [t_lo, t_hi].
    double norm(double t_lo = 0.0, double t_hi = 0.0, int samples = 200) const {
        if (kind_ == Kind::stationary_uniform) return 1.0 / L_;
        if (kind_ == Kind::stationary_exponential) return age_density(g_ >= 0.0 ? 0.0 : L_) * (1.0 + std::abs(g_));
        double sup_n = 0.0, sup_dn = 0.0;
        for (int i = 0; i <= samples; ++i) {
            const double t = t_lo + (t_hi - t_lo) * i / samples;
            for (int k = 0; k <= samples; ++k) {
                const double b = t - L_ * k / samples;
                sup_n = std::max(sup_n, std::abs(n(t, b)));
                if (density_dt_) sup_dn = std::max(sup_dn, std::abs(dn_dt(t, b)));
            }
        }
        return sup_n + sup_dn;
    }

    /// Integral of n(t, .) over [t - L, t] (should be 1).
    double mass(double t) const {
        return integrate([&](double b) { return n(t, b); }, t - L_, t);
    }

    void validate() const {
        if (!(L_ > 0.0) || !std::isfinite(L_)) throw std::invalid_argument("demography: L must be positive");
        if (!std::isfinite(g_)) throw std::invalid_argument("demography: growth rate must be finite");
    }

private:
    DemographicFlow(Kind kind, double L, double g) : kind_(kind), L_(L), g_(g) { validate(); }

    double age_density(double age) const {
        if (kind_ == Kind::stationary_uniform || std::abs(g_ * L_) < 1e-12) return 1.0 / L_;
        return g_ * std::exp(-g_ * age) / (1.0 - std::exp(-g_ * L_));
    }

    Kind kind_;
    double L_;
    double g_;
    Density density_;
    Density density_dt_;
};

/// Analytic (four-term Leibniz formula) and finite-difference values of
/// d/dt int_{t-L}^{t} f(t, b) n(t, b) db. The difference is a centered one
/// Richardson-extrapolated over h and h/2 (O(h^4)), so a moderate h keeps
/// round-off small for large integrands.
struct LeibnizCheck {
    double analytic = 0.0;
    double finite_difference = 0.0;
};

inline LeibnizCheck leibniz_derivative_check(const std::function<double(double, double)>& f,
                                             const std::function<double(double, double)>& df_dt,
                                             const DemographicFlow& flow, double t, double h = 1e-2) {
    const double L = flow.L();
    LeibnizCheck out;
    out.analytic = f(t, t) * flow.n(t, t) - f(t, t - L) * flow.n(t, t - L) +
                   integrate([&](double b) { return df_dt(t, b) * flow.n(t, b); }, t - L, t) +
                   integrate([&](double b) { return f(t, b) * flow.dn_dt(t, b); }, t - L, t);
    const auto I = [&](double s) { return integrate([&](double b) { return f(s, b) * flow.n(s, b); }, s - L, s); };
    const auto D = [&](double s) { return (I(t + s) - I(t - s)) / (2.0 * s); };
    out.finite_difference = (4.0 * D(0.5 * h) - D(h)) / 3.0;
    return out;
}

}  // namespace olg
