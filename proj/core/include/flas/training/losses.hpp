#pragma once

#include "flas/numcore/ops.hpp"

#include <string>
#include <vector>

namespace flas::train {

// Mean next-token cross-entropy of per-row logits over all supervised
// positions of the batch. Returns a scalar; 0 when nothing is supervised.
Tensor lm_loss(const std::vector<Tensor>& row_logits, const std::vector<std::vector<std::int64_t>>& row_labels);

// Mean of v [seq, d] over the first `length` rows, shape [d].
Tensor pool_velocity(const Tensor& v, std::size_t length);

// Mean cosine over ordered pairs (i, j) with different concepts. Pairs with
// a zero-norm vector contribute 0; no such pair gives 0.
Tensor diversity_loss(const std::vector<Tensor>& pooled, const std::vector<std::string>& concepts);

// Same quantity without recording, for evaluation.
double mean_inter_concept_cosine(const std::vector<Tensor>& pooled, const std::vector<std::string>& concepts);

}  // namespace flas::train
