#pragma once

#include "flas/numcore/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace flas {

namespace detail {
struct TapeNode {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    std::function<void()> backward;
};

struct TapeState {
    std::vector<TapeNode> nodes;
};
}  // namespace detail

// Define-by-run recording of differentiable ops. Constructing a Tape makes it
// the active recorder for the current thread until it is destroyed; nested
// tapes shadow outer ones. A tape must stay on the thread that created it.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::size_t size() const { return state_->nodes.size(); }
    void backward(const Tensor& root);
    // Drops all recorded ops; tensors produced earlier become detached.
    void clear();

    const detail::TapeState& state() const { return *state_; }

private:
    std::shared_ptr<detail::TapeState> state_;
    std::shared_ptr<detail::TapeState> previous_;
};

// Suspends recording for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Reverse-mode pass from a scalar produced on the tape that recorded it.
void backward(const Tensor& root);

bool grad_enabled();

namespace detail {
// Returns the active tape when recording is on and any input needs a gradient.
std::shared_ptr<TapeState> recording_tape(std::initializer_list<const Tensor*> inputs);
// Records `output` as produced by `inputs` with the given backward rule.
void record(const std::shared_ptr<TapeState>& tape, std::vector<Tensor> inputs, const Tensor& output,
            std::function<void()> rule);
}  // namespace detail

}  // namespace flas
