#pragma once

#include "flas/baselines/baselines.hpp"
#include "flas/base_lm/model.hpp"
#include "flas/flow/flow_block.hpp"

#include <optional>
#include <string>

namespace flas::flow {

enum class Method { flas, additive, act, none };

Method method_from_string(const std::string& s);
std::string to_string(Method m);

struct MethodSpec {
    Method method = Method::flas;
    std::string concept_text;
    // T for flas, alpha for additive, lambda for act. Unset picks the
    // method's default (2, 1, 1).
    std::optional<double> strength;
    std::size_t n_steps = 0;  // flas only; 0 keeps the checkpoint's N
};

double default_strength(Method m);

// Builds a fresh hook for one generation stream. `none` gives an empty hook.
// flas needs `flow`; additive and act need `baselines` holding the concept.
lm::Hook make_hook(const MethodSpec& spec, const lm::LanguageModel& base, const FlowModel* flow,
                   const baselines::BaselineSet* baselines);

}  // namespace flas::flow
