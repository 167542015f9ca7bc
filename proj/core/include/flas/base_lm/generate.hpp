#pragma once

#include "flas/base_lm/model.hpp"

#include <cstdint>
#include <vector>

namespace flas::lm {

struct GenerationOptions {
    std::size_t max_new = 40;
    double temperature = 0.0;  // 0 selects greedy argmax
    std::uint64_t seed = 0;
    bool stop_at_eos = true;
};

struct GenerationResult {
    TokenSequence tokens;               // prompt followed by generated tokens
    std::vector<TokenId> generated;
    std::vector<Tensor> hidden;         // pre-hook layer-ℓ rows per forward call
    std::vector<Tensor> steered;        // post-hook rows per forward call
    std::vector<Tensor> step_logits;    // next-token logits row used at each step
};

// Prefills the prompt and decodes incrementally with the base KV cache. The
// hook sees every position: the prompt rows at prefill, then each new token.
GenerationResult generate_steered(const LanguageModel& model, const TokenSequence& prompt, const Hook& hook,
                                  const GenerationOptions& opts);

TokenId sample_token(std::span<const double> logits, double temperature, std::uint64_t& rng_state);

}  // namespace flas::lm
