#pragma once

#include <cstddef>

namespace flas::train {

// Linear 0 -> peak over warmup steps, then cosine from peak to 0 at max_steps.
double lr_schedule(std::size_t step, double peak, std::size_t warmup, std::size_t max_steps);

}  // namespace flas::train
