#include "flas/base_lm/pretrain.hpp"

#include "flas/errors.hpp"
#include "flas/numcore/optim.hpp"
#include "flas/numcore/tape.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace flas::lm {

namespace {

std::vector<std::int64_t> next_token_labels(const std::vector<TokenId>& ids) {
    std::vector<std::int64_t> labels(ids.size(), kIgnoreLabel);
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) labels[i] = ids[i + 1];
    return labels;
}

}  // namespace

std::vector<double> pretrain(LanguageModel& model, const std::vector<std::vector<TokenId>>& sequences,
                             const PretrainConfig& config, const ProgressFn& progress) {
    if (sequences.empty()) throw DataError("pretrain: no sequences");
    model.set_trainable(true);
    AdamW opt(model.parameters(), {0.9, 0.95, 1e-8, config.weight_decay});
    std::mt19937_64 rng(config.seed);
    std::uniform_int_distribution<std::size_t> pick(0, sequences.size() - 1);
    std::vector<double> losses;
    losses.reserve(config.steps);

    for (std::size_t step = 0; step < config.steps; ++step) {
        double lr = config.lr;
        if (step < config.warmup) {
            lr *= static_cast<double>(step + 1) / static_cast<double>(config.warmup);
        } else {
            const double frac = static_cast<double>(step - config.warmup) /
                                static_cast<double>(std::max<std::size_t>(1, config.steps - config.warmup));
            lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
        }
        opt.zero_grad();
        Tape tape;
        std::size_t total_tokens = 0;
        std::vector<std::pair<Tensor, std::size_t>> parts;
        for (std::size_t b = 0; b < config.batch_size; ++b) {
            const auto& ids = sequences[pick(rng)];
            auto labels = next_token_labels(ids);
            auto ce = masked_cross_entropy(model.forward(ids), labels);
            total_tokens += ce.token_count;
            parts.emplace_back(ce.loss, ce.token_count);
        }
        Tensor loss;
        for (auto& [l, n] : parts) {
            Tensor w = scale(l, static_cast<double>(n) / static_cast<double>(total_tokens));
            loss = loss.defined() ? add(loss, w) : w;
        }
        tape.backward(loss);
        auto params = opt.params();
        clip_grad_norm(params, config.clip_norm);
        opt.step(lr);
        losses.push_back(loss.item());
        if (progress) progress(step, loss.item());
    }
    opt.zero_grad();
    model.set_trainable(false);
    return losses;
}

double sequence_loss(const LanguageModel& model, const std::vector<std::vector<TokenId>>& sequences) {
    NoGradGuard guard;
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& ids : sequences) {
        auto ce = masked_cross_entropy(model.forward(ids), next_token_labels(ids));
        total += ce.loss.item() * static_cast<double>(ce.token_count);
        count += ce.token_count;
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace flas::lm
