#include "mdlab/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mdlab {

double sample_mask_ratio(Rng& rng) {
    return rng.uniform_open0_closed1();
}

double alpha(double t, const NoiseSchedule& schedule) {
    if (!(t >= 0.0 && t <= 1.0))
        throw std::invalid_argument("alpha: t outside [0, 1]: " + std::to_string(t));
    return std::exp(-t * schedule.sigma_max);
}

double nelbo_weight(double t, const NoiseSchedule& schedule) {
    if (!(t >= NoiseSchedule::kTMin && t <= 1.0))
        throw std::invalid_argument("nelbo_weight: t outside [" + std::to_string(NoiseSchedule::kTMin) +
                                    ", 1]: " + std::to_string(t));
    double st = t * schedule.sigma_max;
    // 1 - exp(-st) via expm1 keeps the small-t end accurate
    return schedule.sigma_max * std::exp(-st) / (-std::expm1(-st));
}

}  // namespace mdlab
