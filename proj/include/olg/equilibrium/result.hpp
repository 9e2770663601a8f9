#pragma once
// Result record shared by the equilibrium solvers.

#include <string>
#include <vector>

#include "olg/core/rate_path.hpp"

namespace olg {

struct EquilibriumIteration {
    int iteration = 0;
    double clearing = 0.0;     // sup_t |E[aggregate wealth](t) - K_t|
    double map_residual = 0.0; // sup_t |Phi(r)_t - r_t| (or its clearing analogue)
    double damping = 0.0;
    bool projected = false;    // iterate clipped to the admissible ball
};

struct EquilibriumResult {
    RatePath rate;
    std::vector<double> K;             // capital target per node of rate.grid()
    std::vector<EquilibriumIteration> history;
    std::vector<double> mean_wealth;   // expected aggregate wealth at the final rate
    std::vector<double> wealth_se;     // its Monte Carlo standard error
    double clearing = 0.0;
    double map_residual = 0.0;
    double tolerance = 0.0;
    int inner_failures = 0;            // life-cycle solves that did not converge
    bool converged = false;
    std::string message;

    int iterations() const { return static_cast<int>(history.size()); }
};

}  // namespace olg
