#pragma once
// Regularized CRRA utility. Above the threshold eps it is x^(1-gamma)/(1-gamma)
// (log x for gamma = 1); below it is continued by the concave quadratic
//   -x^2/(2 eps^p) + (eps^-gamma + eps^(1-p)) x + C
// which matches value and slope at eps. The marginal utility is therefore
// continuous, strictly decreasing and positive on the whole real line.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace olg {

class UtilitySpec {
public:
    /// c_max is the consumption cap used by the inverse marginal (the bound kappa).
    explicit UtilitySpec(double gamma = 2.0, double eps = 1e-3, double p = 2.0, double c_max = 1e6)
        : gamma_(gamma), eps_(eps), p_(p), c_max_(c_max) {
        if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("UtilitySpec: gamma must be > 0");
        if (!(eps > 0.0) || !std::isfinite(eps)) throw std::invalid_argument("UtilitySpec: eps must be > 0");
        if (!(p >= 1.0) || !std::isfinite(p)) throw std::invalid_argument("UtilitySpec: p must be >= 1");
        if (!(c_max > eps) || !std::isfinite(c_max)) throw std::invalid_argument("UtilitySpec: c_max must exceed eps");
        eps_p_ = std::pow(eps_, p_);
        knot_slope_ = std::pow(eps_, -gamma_);
        zero_slope_ = knot_slope_ + std::pow(eps_, 1.0 - p_);
        offset_ = crra(eps_) - std::pow(eps_, 1.0 - gamma_) - 0.5 * std::pow(eps_, 2.0 - p_);
        compute_lipschitz_constants();
    }

    double gamma() const { return gamma_; }
    double eps() const { return eps_; }
    double p() const { return p_; }

    double value(double x) const {
        if (x >= eps_) return crra(x);
        return -x * x / (2.0 * eps_p_) + zero_slope_ * x + offset_;
    }

    double marginal(double x) const {
        if (x >= eps_) return std::pow(x, -gamma_);
        return zero_slope_ - x / eps_p_;
    }

    double second_derivative(double x) const {
        if (x >= eps_) return -gamma_ * std::pow(x, -gamma_ - 1.0);
        return -1.0 / eps_p_;
    }

    /// Inverse of the marginal utility on [0, kappa]: exact inverse of each
    /// branch, clamped to the consumption bounds.
    double inverse_marginal(double y) const {
        if (!(y >= 0.0)) throw std::domain_error("inverse_marginal: argument must be >= 0");
        if (y >= zero_slope_) return 0.0;
        if (y > knot_slope_) return std::clamp((zero_slope_ - y) * eps_p_, 0.0, eps_);
        if (y == 0.0) return c_max_;
        return std::min(std::pow(y, -1.0 / gamma_), c_max_);
    }

    /// Reference inverse by bracketed bisection of the marginal on [0, kappa].
    double inverse_marginal_bisect(double y) const {
        if (!(y >= 0.0)) throw std::domain_error("inverse_marginal: argument must be >= 0");
        if (marginal(0.0) <= y) return 0.0;
        if (marginal(c_max_) >= y) return c_max_;
        double lo = 0.0, hi = c_max_;
        for (int it = 0; it < 2000; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            (marginal(mid) > y ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

    /// Consumption bound: sup over y >= 0 of the inverse marginal.
    double kappa() const { return c_max_; }
    /// Sampled Lipschitz constant of the marginal utility on [0, kappa].
    double lipschitz_marginal() const { return lip_marginal_; }
    /// Sampled Lipschitz constant of the clamped inverse marginal on [0, inf).
    double lipschitz_inverse() const { return lip_inverse_; }
    /// Largest of kappa and the two Lipschitz constants.
    double bound_constant() const { return std::max({c_max_, lip_marginal_, lip_inverse_}); }

private:
    double crra(double x) const {
        if (gamma_ == 1.0) return std::log(x);
        return std::pow(x, 1.0 - gamma_) / (1.0 - gamma_);
    }

    void compute_lipschitz_constants() {
        // Difference quotients on log-spaced samples; both functions are
        // piecewise smooth with their steepest region near the knot / cap.
        constexpr int samples = 4000;
        auto sweep = [&](double lo, double hi, auto&& f) {
            double best = 0.0;
            double x_prev = 0.0, f_prev = f(0.0);
            const double a = std::log(lo), b = std::log(hi);
            for (int i = 0; i <= samples; ++i) {
                const double x = std::exp(a + (b - a) * i / samples);
                const double fx = f(x);
                if (x > x_prev) best = std::max(best, std::abs(fx - f_prev) / (x - x_prev));
                x_prev = x;
                f_prev = fx;
            }
            return best;
        };
        lip_marginal_ = sweep(eps_ * 1e-6, c_max_, [&](double x) { return marginal(x); });
        const double y_cap = std::pow(c_max_, -gamma_);
        lip_inverse_ = sweep(y_cap * 1e-3, zero_slope_ * 2.0, [&](double y) { return inverse_marginal(y); });
    }

    double gamma_, eps_, p_, c_max_;
    double eps_p_ = 1.0, knot_slope_ = 1.0, zero_slope_ = 1.0, offset_ = 0.0;
    double lip_marginal_ = 0.0, lip_inverse_ = 0.0;
};

}  // namespace olg
