#pragma once

#include "flas/base_lm/model.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace flas::lm {

struct PretrainConfig {
    std::size_t steps = 1500;
    std::size_t batch_size = 8;
    double lr = 3e-3;
    std::size_t warmup = 100;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    std::uint64_t seed = 0;
};

using ProgressFn = std::function<void(std::size_t step, double loss)>;

// Plain next-token training of every base parameter on complete sequences.
// Parameters are frozen again on return.
std::vector<double> pretrain(LanguageModel& model, const std::vector<std::vector<TokenId>>& sequences,
                             const PretrainConfig& config, const ProgressFn& progress = {});

// Mean next-token loss over all positions of the given sequences.
double sequence_loss(const LanguageModel& model, const std::vector<std::vector<TokenId>>& sequences);

}  // namespace flas::lm
