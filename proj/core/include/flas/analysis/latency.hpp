#pragma once

#include "flas/base_lm/model.hpp"
#include "flas/base_lm/tokenizer.hpp"

#include <functional>
#include <string>
#include <vector>

namespace flas::analysis {

// Makes a fresh hook per generation; an empty hook means unsteered.
using HookFactory = std::function<lm::Hook()>;

struct LatencyMethod {
    std::string name;
    HookFactory make;
};

struct LatencyRow {
    std::string method;
    double prefill_ms_mean = 0.0;
    double prefill_ms_median = 0.0;
    double per_token_ms_mean = 0.0;
    double per_token_ms_median = 0.0;
    double prefill_ratio = 1.0;    // mean vs the first method
    double per_token_ratio = 1.0;  // mean vs the first method
};

struct LatencyOptions {
    std::size_t repeats = 10;
    std::size_t warmup = 2;
    std::size_t new_tokens = 32;
};

// Times prefill and greedy per-token decoding of every prompt under each
// method. Runs interleave methods within a repeat; warmup repeats are
// discarded. Ratios are relative to methods.front().
std::vector<LatencyRow> measure_latency(const lm::LanguageModel& base, const std::vector<LatencyMethod>& methods,
                                        const std::vector<lm::TokenSequence>& prompts, const LatencyOptions& options);

}  // namespace flas::analysis
