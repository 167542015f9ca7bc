#include "flas/training/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace flas::train {

double lr_schedule(std::size_t step, double peak, std::size_t warmup, std::size_t max_steps) {
    if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
    if (step >= max_steps) return 0.0;
    const double span = static_cast<double>(std::max<std::size_t>(1, max_steps - warmup));
    const double frac = static_cast<double>(step - warmup) / span;
    return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace flas::train
