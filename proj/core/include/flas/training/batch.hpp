#pragma once

#include "flas/base_lm/tokenizer.hpp"
#include "flas/training/corpus.hpp"

#include <cstdint>
#include <vector>

namespace flas::train {

struct Batch {
    // Right-padded [rows, max_len] token and label matrices.
    std::vector<std::vector<TokenId>> tokens;
    std::vector<std::vector<std::int64_t>> labels;
    std::vector<std::size_t> lengths;  // non-pad tokens per row
    std::vector<std::string> concepts;
    std::vector<std::size_t> source_index;  // example index of each row
    std::size_t skipped = 0;

    std::size_t rows() const { return tokens.size(); }
    std::size_t width() const { return tokens.empty() ? 0 : tokens.front().size(); }
    std::size_t supervised_tokens() const;
};

// Next-token labels over a chat sequence: position i predicts token i+1 when
// that token belongs to the response, otherwise -100.
std::vector<std::int64_t> response_labels(const lm::TokenSequence& seq);

// Sequences longer than max_len lose response tokens from the end; a row
// with no response token left is skipped with a warning on stderr.
Batch build_batch(const std::vector<TrainingExample>& examples, std::size_t max_len);

}  // namespace flas::train
