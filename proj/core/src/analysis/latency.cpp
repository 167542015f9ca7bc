#include "flas/analysis/latency.hpp"

#include "flas/errors.hpp"
#include "flas/numcore/tape.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

namespace flas::analysis {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

// Prefill time and mean per-token decode time for one prompt.
std::pair<double, double> time_one(const lm::LanguageModel& base, const lm::Hook& hook, const lm::TokenSequence& prompt,
                                   std::size_t new_tokens) {
    lm::KVCache cache;
    auto t0 = Clock::now();
    auto out = base.forward_incremental(prompt.ids, cache, hook);
    const double prefill = ms_since(t0);
    const std::size_t budget = std::min(new_tokens, base.config().max_seq - prompt.size());
    if (budget == 0) return {prefill, 0.0};
    t0 = Clock::now();
    for (std::size_t i = 0; i < budget; ++i) {
        const std::size_t rows = out.logits.dim(0);
        Tensor last = slice(out.logits, 0, rows - 1, rows);
        auto d = last.data();
        const TokenId next = static_cast<TokenId>(std::max_element(d.begin(), d.end()) - d.begin());
        const TokenId one[1] = {next};
        out = base.forward_incremental(one, cache, hook);
    }
    return {prefill, ms_since(t0) / budget};
}

}  // namespace

std::vector<LatencyRow> measure_latency(const lm::LanguageModel& base, const std::vector<LatencyMethod>& methods,
                                        const std::vector<lm::TokenSequence>& prompts, const LatencyOptions& options) {
    if (methods.empty() || prompts.empty()) throw UsageError("measure_latency: no methods or prompts");
    if (options.repeats == 0) throw UsageError("measure_latency: repeats must be >= 1");
    for (const auto& p : prompts) {
        if (p.empty() || p.size() >= base.config().max_seq) throw DataError("measure_latency: bad prompt length");
    }
    NoGradGuard guard;
    std::vector<std::vector<double>> prefill(methods.size()), per_token(methods.size());
    for (std::size_t r = 0; r < options.warmup + options.repeats; ++r) {
        for (std::size_t m = 0; m < methods.size(); ++m) {
            double pf = 0.0, pt = 0.0;
            for (const auto& p : prompts) {
                auto [a, b] = time_one(base, methods[m].make(), p, options.new_tokens);
                pf += a;
                pt += b;
            }
            if (r < options.warmup) continue;
            prefill[m].push_back(pf / prompts.size());
            per_token[m].push_back(pt / prompts.size());
        }
    }
    std::vector<LatencyRow> rows;
    for (std::size_t m = 0; m < methods.size(); ++m) {
        LatencyRow row;
        row.method = methods[m].name;
        row.prefill_ms_mean = mean(prefill[m]);
        row.prefill_ms_median = median(prefill[m]);
        row.per_token_ms_mean = mean(per_token[m]);
        row.per_token_ms_median = median(per_token[m]);
        rows.push_back(row);
    }
    for (auto& row : rows) {
        row.prefill_ratio = row.prefill_ms_mean / rows.front().prefill_ms_mean;
        row.per_token_ratio = row.per_token_ms_mean / rows.front().per_token_ms_mean;
    }
    return rows;
}

}  // namespace flas::analysis
