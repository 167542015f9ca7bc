#include "flas/training/losses.hpp"

#include "flas/errors.hpp"
#include "flas/numcore/tape.hpp"

#include <cmath>

namespace flas::train {

namespace {

constexpr double kZeroNorm = 1e-12;

double norm_of(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v * v;
    return std::sqrt(s);
}

}  // namespace

Tensor lm_loss(const std::vector<Tensor>& row_logits, const std::vector<std::vector<std::int64_t>>& row_labels) {
    if (row_logits.size() != row_labels.size()) throw DimensionError("lm_loss: logits/labels row count mismatch");
    std::vector<CrossEntropy> parts;
    std::size_t total = 0;
    for (std::size_t r = 0; r < row_logits.size(); ++r) {
        parts.push_back(masked_cross_entropy(row_logits[r], row_labels[r]));
        total += parts.back().token_count;
    }
    if (total == 0) return Tensor::scalar(0.0);
    Tensor loss;
    for (const auto& ce : parts) {
        if (ce.token_count == 0) continue;
        Tensor w = scale(ce.loss, static_cast<double>(ce.token_count) / static_cast<double>(total));
        loss = loss.defined() ? add(loss, w) : w;
    }
    return loss;
}

Tensor pool_velocity(const Tensor& v, std::size_t length) {
    if (v.ndim() != 2) throw DimensionError("pool_velocity: expected [seq, d], got " + shape_str(v.shape()));
    if (length == 0 || length > v.dim(0)) throw DataError("pool_velocity: invalid length");
    Tensor rows = length == v.dim(0) ? v : slice(v, 0, 0, length);
    return mean_axis(rows, 0);
}

Tensor diversity_loss(const std::vector<Tensor>& pooled, const std::vector<std::string>& concepts) {
    if (pooled.size() != concepts.size()) throw DimensionError("diversity_loss: pooled/concept count mismatch");
    std::vector<double> norms;
    for (const auto& p : pooled) norms.push_back(norm_of(p));
    Tensor acc;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < pooled.size(); ++i) {
        for (std::size_t j = 0; j < pooled.size(); ++j) {
            if (i == j || concepts[i] == concepts[j]) continue;
            ++pairs;
            if (norms[i] < kZeroNorm || norms[j] < kZeroNorm) continue;
            Tensor dot = sum(mul(pooled[i], pooled[j]));
            Tensor denom = mul(sqrt(sum(square(pooled[i]))), sqrt(sum(square(pooled[j]))));
            Tensor c = div(dot, denom);
            acc = acc.defined() ? add(acc, c) : c;
        }
    }
    if (pairs == 0 || !acc.defined()) return Tensor::scalar(0.0);
    return scale(acc, 1.0 / static_cast<double>(pairs));
}

double mean_inter_concept_cosine(const std::vector<Tensor>& pooled, const std::vector<std::string>& concepts) {
    NoGradGuard guard;
    return diversity_loss(pooled, concepts).item();
}

}  // namespace flas::train
