#pragma once

#include "flas/base_lm/model.hpp"
#include "flas/flow/euler.hpp"
#include "flas/flow/flow_block.hpp"

#include <optional>
#include <vector>

namespace flas::flow {

inline constexpr double kDefaultSteerT = 2.0;

// Stateful steering hook for one generation stream. Owns the concept cache
// and the per-step self-attention stores; a call with pos_offset == 0 starts
// a new sequence.
class FlowSteerer {
public:
    // n_steps == 0 uses the checkpoint's N.
    FlowSteerer(const FlowModel& flow, ConceptCache cache, double T, std::size_t n_steps = 0, bool record = false);

    Tensor operator()(const Tensor& h, std::size_t pos_offset);
    lm::Hook hook();

    double T() const { return T_; }
    std::size_t n_steps() const { return n_steps_; }
    const ConceptCache& concept_cache() const { return cache_; }
    // One entry per hook call, with states and velocities, when recording.
    const std::vector<EulerResult>& records() const { return records_; }
    void reset();

private:
    const FlowModel* flow_;
    ConceptCache cache_;
    double T_;
    std::size_t n_steps_;
    bool record_;
    FlowSelfAttnCache self_cache_;
    std::vector<EulerResult> records_;
};

// Full-sequence steering of h [seq, d] (rows from position 0) with causal
// self-attention and no incremental state.
Tensor steer(const FlowModel& flow, const Tensor& h, const ConceptCache& cache, double T = kDefaultSteerT,
             std::size_t n_steps = 0);

// Concept text -> encoder -> cache convenience.
ConceptCache concept_cache_for(const FlowModel& flow, const lm::LanguageModel& base, const std::string& concept_text);

}  // namespace flas::flow
