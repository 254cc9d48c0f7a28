#pragma once

#include "mdlab/rng.hpp"

namespace mdlab {

// Linear noise schedule sigma(t) = t * sigma_max. Survival probability
// alpha_t = exp(-sigma(t)) is the chance a token is still unmasked at time t.
struct NoiseSchedule {
    double sigma_max = 10.0;

    // Timesteps below this are rejected by nelbo_weight (pole at t=0) and the
    // perplexity sampler clamps its draws here.
    static constexpr double kTMin = 1e-3;
};

// Masking ratio for one training draw, uniform on (0, 1].
double sample_mask_ratio(Rng& rng);

// alpha_t = exp(-t * sigma_max). Domain error outside [0, 1].
double alpha(double t, const NoiseSchedule& schedule);

// Per-timestep loss weight sigma_max * exp(-t*sigma_max) / (1 - exp(-t*sigma_max)),
// i.e. -alpha'_t / (1 - alpha_t) with the sign absorbed. Domain error for
// t < kTMin (the integrand diverges at t = 0) or t > 1.
double nelbo_weight(double t, const NoiseSchedule& schedule);

}  // namespace mdlab
