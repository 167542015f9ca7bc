#include "flas/training/batch.hpp"

#include "flas/errors.hpp"

#include <algorithm>
#include <iostream>

namespace flas::train {

std::size_t Batch::supervised_tokens() const {
    std::size_t n = 0;
    for (const auto& row : labels) n += std::count_if(row.begin(), row.end(), [](auto l) { return l != kIgnoreLabel; });
    return n;
}

std::vector<std::int64_t> response_labels(const lm::TokenSequence& seq) {
    std::vector<std::int64_t> labels(seq.size(), kIgnoreLabel);
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        if (seq.roles[i + 1] == lm::Role::output) labels[i] = seq.ids[i + 1];
    }
    return labels;
}

Batch build_batch(const std::vector<TrainingExample>& examples, std::size_t max_len) {
    if (examples.empty()) throw DataError("build_batch: empty batch");
    Batch batch;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& e = examples[i];
        auto seq = lm::format_example(e.prompt, e.output);
        const auto prompt_len = static_cast<std::size_t>(
            std::count(seq.roles.begin(), seq.roles.end(), lm::Role::prompt));
        if (prompt_len >= max_len) {
            std::cerr << "warning: example " << i << " has no response token within max_len " << max_len
                      << "; skipped\n";
            ++batch.skipped;
            continue;
        }
        if (seq.size() > max_len) {
            seq.ids.resize(max_len);
            seq.roles.resize(max_len);
        }
        batch.lengths.push_back(seq.size());
        batch.labels.push_back(response_labels(seq));
        batch.tokens.push_back(seq.ids);
        batch.concepts.push_back(e.concept_text);
        batch.source_index.push_back(i);
    }
    std::size_t width = 0;
    for (auto n : batch.lengths) width = std::max(width, n);
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        batch.tokens[r].resize(width, lm::tok::kPad);
        batch.labels[r].resize(width, kIgnoreLabel);
    }
    return batch;
}

}  // namespace flas::train
