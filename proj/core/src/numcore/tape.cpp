#include "flas/numcore/tape.hpp"

#include "flas/errors.hpp"

namespace flas {

namespace {
thread_local std::shared_ptr<detail::TapeState> t_active;
thread_local bool t_grad_enabled = true;
}  // namespace

Tape::Tape() : state_(std::make_shared<detail::TapeState>()), previous_(t_active) { t_active = state_; }

Tape::~Tape() { t_active = previous_; }

void Tape::clear() { state_->nodes.clear(); }

void Tape::backward(const Tensor& root) {
    if (!root.defined() || root.impl()->tape.lock() != state_) {
        throw UsageError("backward: root tensor was not recorded on this tape");
    }
    if (root.numel() != 1) throw UsageError("backward: root must be a scalar, got " + shape_str(root.shape()));

    flas::backward(root);
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled && t_active != nullptr; }

void backward(const Tensor& root) {
    if (!root.defined()) throw UsageError("backward: undefined root");
    auto tape = root.impl()->tape.lock();
    if (!tape) throw UsageError("backward: root tensor is not on a live tape");
    if (root.numel() != 1) throw UsageError("backward: root must be a scalar, got " + shape_str(root.shape()));
    auto& nodes = tape->nodes;
    for (auto& n : nodes) n.output->grad.clear();
    root.impl()->grad_buffer()[0] = 1.0;
    for (std::size_t i = root.impl()->node + 1; i-- > 0;) {
        auto& n = nodes[i];
        if (n.output->grad.empty()) continue;
        n.backward();
    }
}

namespace detail {

std::shared_ptr<TapeState> recording_tape(std::initializer_list<const Tensor*> inputs) {
    if (!t_grad_enabled || !t_active) return nullptr;
    for (const auto* t : inputs) {
        if (t && t->defined() && t->requires_grad()) return t_active;
    }
    return nullptr;
}

void record(const std::shared_ptr<TapeState>& tape, std::vector<Tensor> inputs, const Tensor& output,
            std::function<void()> rule) {
    TapeNode node;
    node.inputs.reserve(inputs.size());
    for (auto& t : inputs) node.inputs.push_back(t.impl());
    node.output = output.impl();
    node.backward = std::move(rule);
    output.impl()->requires_grad = true;
    output.impl()->tape = tape;
    output.impl()->node = tape->nodes.size();
    tape->nodes.push_back(std::move(node));
}

}  // namespace detail

}  // namespace flas
