#include "flas/base_lm/generate.hpp"

#include "flas/errors.hpp"
#include "flas/numcore/tape.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace flas::lm {

TokenId sample_token(std::span<const double> logits, double temperature, std::uint64_t& rng_state) {
    if (temperature <= 0.0) {
        return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> w(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) w[i] = std::exp((logits[i] - mx) / temperature);
    std::mt19937_64 rng(rng_state);
    std::discrete_distribution<int> dist(w.begin(), w.end());
    const auto id = static_cast<TokenId>(dist(rng));
    rng_state = rng();
    return id;
}

GenerationResult generate_steered(const LanguageModel& model, const TokenSequence& prompt, const Hook& hook,
                                  const GenerationOptions& opts) {
    if (opts.temperature < 0.0) throw UsageError("temperature must be >= 0");
    GenerationResult result;
    result.tokens = prompt;
    if (opts.max_new == 0) return result;
    if (prompt.empty()) throw DataError("generate: empty prompt");

    NoGradGuard guard;
    KVCache cache;
    std::uint64_t rng_state = opts.seed;
    const std::size_t vocab = model.config().vocab_size;

    auto out = model.forward_incremental(prompt.ids, cache, hook);
    for (std::size_t step = 0; step < opts.max_new; ++step) {
        result.hidden.push_back(out.hidden);
        result.steered.push_back(out.steered);
        const std::size_t rows = out.logits.dim(0);
        Tensor last = slice(out.logits, 0, rows - 1, rows);
        result.step_logits.push_back(last);
        const TokenId next = sample_token(last.data().subspan(0, vocab), opts.temperature, rng_state);
        result.generated.push_back(next);
        result.tokens.push(next, Role::output);
        if (opts.stop_at_eos && next == tok::kEos) break;
        if (step + 1 == opts.max_new) break;
        if (cache.length() + 1 > model.config().max_seq) break;
        const TokenId one[1] = {next};
        out = model.forward_incremental(one, cache, hook);
    }
    return result;
}

}  // namespace flas::lm
