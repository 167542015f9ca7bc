#pragma once

#include "flas/numcore/tensor.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace flas {

struct GradCheckOptions {
    double step = 1e-5;
    // Coordinates probed per tensor; tensors larger than this are sampled.
    std::size_t max_coords = 64;
    std::uint64_t seed = 0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Compares reverse-mode gradients of the scalar `f()` with central differences
// (f(x+he) - f(x-he)) / 2h over coordinates of each tensor in `inputs`. The
// inputs are perturbed in place and restored. Relative error uses the
// denominator max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& opts = {});

// Single-input form: f receives a leaf copy of x.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           const GradCheckOptions& opts = {});

}  // namespace flas
