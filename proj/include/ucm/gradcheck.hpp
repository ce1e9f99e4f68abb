#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ucm/blocks.hpp"
#include "ucm/network.hpp"
#include "ucm/objectives.hpp"

namespace ucm {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Compares the tape's analytic gradient against central differences of the
// same forward function, per tensor (input and every parameter).
//
// `forward` must be a pure function of its differentiable inputs; stochastic
// pieces have to be re-seeded identically on every call.
template <typename Real>
GradCheckResult gradcheck(const std::string& name,
                          const std::function<TensorT<Real>()>& forward,
                          const std::vector<TensorT<Real>>& wrt, double fd_step, double tol,
                          std::size_t max_coords_per_tensor = 0);

// 64-bit shadow-mode suite over every block plus both loss regimes
// (inputs <= 1 x 4 x 8 x 8), tolerance 1e-5.
std::vector<GradCheckResult> run_block_gradchecks(std::uint64_t seed);

// end-to-end check through a reduced model on a 1 x 3 x 32 x 32 input,
// sampled coordinates, 64-bit shadow mode
GradCheckResult run_model_gradcheck(std::uint64_t seed);

}  // namespace ucm
