#pragma once

#include "flas/numcore/tensor.hpp"

#include <cstdint>
#include <vector>

namespace flas {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled-weight-decay Adam over a fixed parameter list. Moment buffers are
// shaped exactly like the parameters.
class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWConfig config = {});

    void step(double lr);
    void zero_grad();

    std::int64_t steps_taken() const { return t_; }
    void set_steps_taken(std::int64_t t) { t_ = t; }
    const std::vector<Tensor>& params() const { return params_; }
    std::vector<Tensor>& first_moments() { return m_; }
    std::vector<Tensor>& second_moments() { return v_; }
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }

private:
    std::vector<Tensor> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    AdamWConfig config_;
    std::int64_t t_ = 0;
};

// Rescales gradients in place so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::vector<Tensor>& params, double max_norm);

}  // namespace flas
