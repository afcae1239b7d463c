#pragma once

#include <cstdint>

#include "dualenkf/model.hpp"

namespace dualenkf {

/// Chain of d_s masses: A = [[0, I], [−𝕋, −𝕋]], B = [0; I] with 𝕋 the
/// tridiagonal Toeplitz matrix (2 on the diagonal, −1 off it), C = R = G = I,
/// σ = sigma_scale·B. flip_stability negates A. LQG, average cost.
LqProblem gen_spring_mass_damper(int masses, double sigma_scale, bool flip_stability = false);

/// Controllable canonical (companion) form with last row a ~ 𝒩(0, I) from the
/// Generator substream of seed, B = e_d, C = R = G = I, σ = sigma_scale·B.
/// LQG, average cost.
LqProblem gen_random_canonical(int dim, std::uint64_t seed, double sigma_scale);

}  // namespace dualenkf
