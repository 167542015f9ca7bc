#pragma once

#include "flas/numcore/tensor.hpp"

#include <functional>
#include <vector>

namespace flas::flow {

// field(h_k, t_k, k) -> velocity with the shape of h_k.
using VelocityField = std::function<Tensor(const Tensor& h, double t, std::size_t step)>;

struct EulerResult {
    Tensor final_state;
    std::vector<Tensor> velocities;  // v_0 .. v_{N-1}
    std::vector<Tensor> states;      // h_0 .. h_N, only when requested
};

// h_{k+1} = h_k + (T/N) field(h_k, kT/N, k).
EulerResult euler_integrate(const Tensor& h0, double T, std::size_t n_steps, const VelocityField& field,
                            bool keep_states = false);

}  // namespace flas::flow
