#include "flas/training/baseline_fit.hpp"

#include "flas/errors.hpp"
#include "flas/numcore/ops.hpp"
#include "flas/numcore/tape.hpp"

#include <algorithm>
#include <map>
#include <random>

namespace flas::train {

namespace {

Tensor stack_rows(const std::vector<Tensor>& rows) {
    std::vector<Tensor> parts;
    for (const auto& r : rows) parts.push_back(reshape(r, {1, r.numel()}));
    return concat(parts, 0);
}

}  // namespace

Tensor pooled_response_activation(const lm::LanguageModel& base, const TrainingExample& example) {
    NoGradGuard guard;
    const auto seq = lm::format_example(example.prompt, example.output);
    const Tensor h = base.forward_hooked(seq.ids).hidden;
    const std::size_t d = h.dim(1);
    std::vector<double> acc(d, 0.0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (seq.roles[i] != lm::Role::output) continue;
        for (std::size_t j = 0; j < d; ++j) acc[j] += h.data()[i * d + j];
        ++n;
    }
    if (n == 0) throw DataError("example has no response tokens");
    for (double& v : acc) v /= static_cast<double>(n);
    return Tensor({d}, std::move(acc));
}

baselines::BaselineSet fit_toy_baselines(const lm::LanguageModel& base, const std::vector<TrainingExample>& examples,
                                         std::size_t per_side, std::uint64_t seed) {
    if (per_side < 2) throw ConfigError("baseline fit needs at least 2 examples per side");
    std::map<std::string, std::vector<std::size_t>> by_concept;
    for (std::size_t i = 0; i < examples.size(); ++i) by_concept[examples[i].concept_text].push_back(i);
    if (by_concept.size() < 2) throw DataError("baseline fit needs at least two concepts");

    std::vector<Tensor> pooled;
    for (const auto& e : examples) pooled.push_back(pooled_response_activation(base, e));

    std::mt19937_64 rng(seed);
    baselines::BaselineSet set;
    for (const auto& [c, idx] : by_concept) {
        std::vector<std::size_t> pos = idx, neg;
        for (const auto& [other, oidx] : by_concept) {
            if (other != c) neg.insert(neg.end(), oidx.begin(), oidx.end());
        }
        std::shuffle(pos.begin(), pos.end(), rng);
        std::shuffle(neg.begin(), neg.end(), rng);
        const std::size_t m = std::min({per_side, pos.size(), neg.size()});
        if (m < 2) throw DataError("concept '" + c + "' has fewer than 2 examples");
        pos.resize(m);
        neg.resize(m);
        std::vector<Tensor> p, n;
        for (auto i : pos) p.push_back(pooled[i]);
        for (auto i : neg) n.push_back(pooled[i]);
        set.diffmean[c] = baselines::diffmean_fit(p, n);
        set.act[c] = baselines::act_fit(stack_rows(n), stack_rows(p));
    }
    return set;
}

}  // namespace flas::train
