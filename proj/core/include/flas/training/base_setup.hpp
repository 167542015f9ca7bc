#pragma once

#include "flas/base_lm/model.hpp"
#include "flas/base_lm/pretrain.hpp"
#include "flas/training/corpus.hpp"

#include <filesystem>
#include <string>

namespace flas::train {

struct BaseSetup {
    lm::LMConfig lm;
    CorpusOptions corpus;
    lm::PretrainConfig pretrain;
    std::uint64_t init_seed = 0;
};

// Stable hex key over every field that influences the pretrained weights.
std::string base_cache_key(const BaseSetup& setup);

// Loads <cache_dir>/base-<key>.weights when present, otherwise pretrains on
// the toy corpus and writes that file. An empty cache_dir disables caching.
lm::LanguageModel load_or_pretrain_base(const BaseSetup& setup, const std::filesystem::path& cache_dir,
                                        const lm::ProgressFn& progress = {});

}  // namespace flas::train
