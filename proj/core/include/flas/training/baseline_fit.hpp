#pragma once

#include "flas/base_lm/model.hpp"
#include "flas/baselines/baselines.hpp"
#include "flas/training/corpus.hpp"

#include <cstdint>

namespace flas::train {

// Layer-l activations of a chat example, mean-pooled over response tokens.
Tensor pooled_response_activation(const lm::LanguageModel& base, const TrainingExample& example);

// Fits DiffMean and Linear-AcT for every concept present in `examples`.
// Positives are that concept's examples, negatives are drawn from the other
// concepts; at most per_side of each.
baselines::BaselineSet fit_toy_baselines(const lm::LanguageModel& base, const std::vector<TrainingExample>& examples,
                                         std::size_t per_side = 72, std::uint64_t seed = 0);

}  // namespace flas::train
