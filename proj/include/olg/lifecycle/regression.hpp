#pragma once
// Cross-sectional least-squares conditional expectations: the target is
// projected onto total-degree-d polynomials in the standardized state
// (w_t, eta_t) at one time node. State variables without cross-sectional
// spread are dropped (they carry no information at that node).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "olg/core/ensemble.hpp"
#include "olg/core/income.hpp"
#include "olg/core/random.hpp"
#include "olg/core/rate_path.hpp"

namespace olg {

/// How conditional expectations are estimated.
struct EstimatorSpec {
    enum class Method { regression, nested };
    Method method = Method::regression;
    int degree = 3;
    bool use_wealth = true;
    bool use_income = true;
    int inner_paths = 200;  // nested Monte Carlo only
    // Life-cycle solver only: regress u2'(w_L) X^gamma2 on the human-wealth
    // share z = h eta / X, X = w + h eta, instead of u2'(w_L) on (w, eta).
    bool scale_by_total_wealth = true;
};

/// Ridge penalty used when the design matrix is rank deficient.
inline constexpr double kRidgePenalty = 1e-8;

/// Largest supported basis (total degree 8 in two variables).
inline constexpr int kMaxDegree = 8;
inline constexpr std::size_t kMaxBasis = 45;

/// A fitted polynomial in the standardized state at one node.
struct RegressionFit {
    std::array<double, 2> mean{0.0, 0.0};
    std::array<double, 2> scale{1.0, 1.0};
    std::array<bool, 2> active{false, false};
    std::vector<std::array<int, 2>> exponents;  // monomial powers of (w, eta)
    Vector coefficients;
    bool ridge = false;            // rank-deficient design, ridge fallback used
    double residual_variance = 0;  // mean squared residual (dof-corrected)
    Matrix covariance;             // (A^T A)^{-1}; filled only on request

    int size() const { return static_cast<int>(exponents.size()); }

    void basis_row(double w, double eta, double* out) const {
        const double z[2] = {active[0] ? (w - mean[0]) / scale[0] : 0.0,
                             active[1] ? (eta - mean[1]) / scale[1] : 0.0};
        for (std::size_t k = 0; k < exponents.size(); ++k) {
            double v = 1.0;
            for (int i = 0; i < exponents[k][0]; ++i) v *= z[0];
            for (int i = 0; i < exponents[k][1]; ++i) v *= z[1];
            out[k] = v;
        }
    }

    double predict(double w, double eta) const {
        std::array<double, kMaxBasis> row;
        basis_row(w, eta, row.data());
        double s = 0.0;
        for (std::size_t k = 0; k < exponents.size(); ++k) s += row[k] * coefficients[static_cast<Eigen::Index>(k)];
        return s;
    }

    /// Standard error of the fitted mean at a state (requires covariance).
    double predict_std_error(double w, double eta) const {
        if (covariance.size() == 0) throw std::logic_error("RegressionFit: covariance not computed");
        Vector row(size());
        basis_row(w, eta, row.data());
        return std::sqrt(std::max(0.0, residual_variance * row.dot(covariance * row)));
    }
};

namespace detail {

inline std::vector<std::array<int, 2>> monomials(int degree, bool use_w, bool use_eta) {
    std::vector<std::array<int, 2>> out;
    for (int total = 0; total <= degree; ++total)
        for (int a = total; a >= 0; --a) {
            const int b = total - a;
            if ((a > 0 && !use_w) || (b > 0 && !use_eta)) continue;
            out.push_back({a, b});
        }
    return out;
}

inline void standardize(const Vector& x, double& mean, double& scale, bool& active) {
    mean = x.mean();
    const double var = (x.array() - mean).square().mean();
    scale = std::sqrt(var);
    active = scale > 1e-12 * std::max(1.0, std::abs(mean));
    if (!active) scale = 1.0;
}

}  // namespace detail

/// Least-squares fit of `target` on the polynomial basis in (w, eta).
/// Optionally returns the in-sample fitted values through `fitted`.
inline RegressionFit fit_regression(const Vector& w, const Vector& eta, const Vector& target,
                                    const EstimatorSpec& spec, bool with_covariance = false,
                                    Vector* fitted = nullptr) {
    if (spec.degree < 0 || spec.degree > kMaxDegree)
        throw std::invalid_argument("regression: degree must be in [0, 8]");
    if (w.size() != target.size() || eta.size() != target.size())
        throw std::invalid_argument("regression: state and target sizes differ");
    if (!target.allFinite()) throw std::invalid_argument("regression: target must be finite");

    RegressionFit fit;
    detail::standardize(w, fit.mean[0], fit.scale[0], fit.active[0]);
    detail::standardize(eta, fit.mean[1], fit.scale[1], fit.active[1]);
    fit.active[0] = fit.active[0] && spec.use_wealth;
    fit.active[1] = fit.active[1] && spec.use_income;
    fit.exponents = detail::monomials(spec.degree, fit.active[0], fit.active[1]);

    const Eigen::Index n = target.size();
    const Eigen::Index P = fit.size();
    Matrix A(n, P);
    std::vector<double> row(static_cast<std::size_t>(P));
    for (Eigen::Index i = 0; i < n; ++i) {
        fit.basis_row(w[i], eta[i], row.data());
        for (Eigen::Index k = 0; k < P; ++k) A(i, k) = row[static_cast<std::size_t>(k)];
    }

    if (P == 1) {
        fit.coefficients = Vector::Constant(1, target.mean());
    } else {
        Eigen::ColPivHouseholderQR<Matrix> qr(A);
        if (qr.rank() < P) {
            fit.ridge = true;
            Matrix G = A.transpose() * A;
            G.diagonal().array() += kRidgePenalty;
            fit.coefficients = G.ldlt().solve(A.transpose() * target);
        } else {
            fit.coefficients = qr.solve(target);
        }
    }
    Vector values = A * fit.coefficients;
    const Vector resid = target - values;
    const double dof = static_cast<double>(std::max<Eigen::Index>(1, n - P));
    fit.residual_variance = resid.squaredNorm() / dof;
    if (with_covariance) {
        Matrix G = A.transpose() * A;
        if (fit.ridge) G.diagonal().array() += kRidgePenalty;
        fit.covariance = G.ldlt().solve(Matrix::Identity(P, P));
    }
    if (fitted) *fitted = std::move(values);
    return fit;
}

/// Fitted values of a regression on its own sample.
inline Vector predict_all(const RegressionFit& fit, const Vector& w, const Vector& eta) {
    Vector out(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) out[i] = fit.predict(w[i], eta[i]);
    return out;
}

/// Regression estimate of E[target | state at node j] for every path. At the
/// last node every path-functional is known, so the estimate is the target.
inline Vector estimate_conditional_expectation(const EstimatorSpec& spec, const PathEnsemble& ens, int j,
                                               const Vector& target, int* ridge_warnings = nullptr) {
    if (spec.method != EstimatorSpec::Method::regression)
        throw std::invalid_argument("estimate_conditional_expectation: nested estimates need nested_expectation()");
    if (j < 0 || j > ens.grid.M()) throw std::out_of_range("estimate_conditional_expectation: node out of range");
    if (!target.allFinite()) throw std::invalid_argument("estimate_conditional_expectation: target must be finite");
    if (j == ens.grid.M()) return target;
    const Vector w = ens.wealth.size() ? Vector(ens.wealth.col(j)) : Vector::Zero(target.size());
    const Vector eta = ens.income.col(j);
    Vector fitted;
    const auto fit = fit_regression(w, eta, target, spec, false, &fitted);
    if (fit.ridge && ridge_warnings) ++*ridge_warnings;
    return fitted;
}

/// Result of a nested Monte Carlo estimate at one state.
struct NestedEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

/// Consumption rule c(node, w, eta) used to push inner wealth paths forward.
using PolicyFn = std::function<double(int, double, double)>;

/// Nested Monte Carlo oracle: K inner continuations from (w_j, eta_j) at node
/// j, wealth pushed forward with `policy` (zero consumption if empty), and
/// the average of terminal(w_L, eta_L).
inline NestedEstimate nested_expectation(const IncomeModel& model, const TimeGrid& grid, const RatePath& r, int j,
                                         double w_j, double eta_j, int inner_paths, std::uint64_t seed,
                                         std::uint64_t probe, const std::function<double(double, double)>& terminal,
                                         const PolicyFn& policy = {}) {
    if (inner_paths < 2) throw std::invalid_argument("nested_expectation: need at least 2 inner paths");
    const int M = grid.M();
    const double dt = grid.dt();
    std::vector<double> eta(static_cast<std::size_t>(M) + 1);
    double sum = 0.0, sum_sq = 0.0;
    for (int k = 0; k < inner_paths; ++k) {
        auto rng = make_path_stream(seed, StreamKind::nested, probe, static_cast<std::uint64_t>(k));
        simulate_income_path(model, grid, eta_j, rng, eta.data(), 1, j);
        double w = w_j;
        for (int s = j; s < M; ++s) {
            const double c = policy ? policy(s, w, eta[static_cast<std::size_t>(s)]) : 0.0;
            w += (r.at(grid.node(s)) * w + eta[static_cast<std::size_t>(s)] - c) * dt;
        }
        const double v = terminal(w, eta[static_cast<std::size_t>(M)]);
        sum += v;
        sum_sq += v * v;
    }
    const double n = inner_paths;
    const double mean = sum / n;
    const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
    return {mean, std::sqrt(var / n)};
}

}  // namespace olg
