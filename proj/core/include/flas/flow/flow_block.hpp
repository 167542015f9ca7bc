#pragma once

#include "flas/base_lm/model.hpp"
#include "flas/flow/config.hpp"
#include "flas/io/container.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace flas::flow {

struct FlowBlockParams {
    // e(t) = W2 SiLU(W1 tau(t) + b1) + b2
    Tensor time_w1;  // [2 * pairs, d]
    Tensor time_b1;  // [d]
    Tensor time_w2;  // [d, d]
    Tensor time_b2;  // [d]

    lm::AttentionParams cross;
    Tensor cross_pre_norm;
    Tensor cross_post_norm;
    Tensor cross_gate;

    lm::AttentionParams self;
    Tensor self_pre_norm;
    Tensor self_post_norm;
    Tensor self_gate;

    Tensor mlp_w_gate;
    Tensor mlp_w_up;
    Tensor mlp_w_down;
    Tensor mlp_pre_norm;
    Tensor mlp_post_norm;
    Tensor mlp_gate;
};

// Cross-attention keys/values of one encoded concept, one store per block.
// Built once and reused for every Euler step, position and decoded token.
struct ConceptCache {
    std::vector<lm::KVStore> blocks;
};

// One self-attention store per (Euler step, block); store k only ever holds
// states produced at step k.
class FlowSelfAttnCache {
public:
    FlowSelfAttnCache(std::size_t n_steps, std::size_t n_blocks);
    std::size_t n_steps() const { return stores_.size(); }
    lm::KVStore& store(std::size_t step, std::size_t block) { return stores_.at(step).at(block); }
    std::size_t length(std::size_t step) const;
    void reset();

private:
    std::vector<std::vector<lm::KVStore>> stores_;
};

// tau(t)_k = sin(t w_k), tau(t)_{P+k} = cos(t w_k), w_k = 10000^(-k/P).
Tensor sinusoidal_embedding(double t, std::size_t pairs);

class FlowModel {
public:
    FlowModel(FlowConfig config, const lm::LanguageModel& base, std::uint64_t seed);
    // Copies own their parameters; moves keep them.
    FlowModel(const FlowModel& other);
    FlowModel& operator=(const FlowModel& other);
    FlowModel(FlowModel&&) noexcept = default;
    FlowModel& operator=(FlowModel&&) noexcept = default;

    const FlowConfig& config() const { return config_; }
    const lm::LMConfig& base_config() const { return base_config_; }
    const std::vector<FlowBlockParams>& blocks() const { return blocks_; }

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> parameters() const;
    std::size_t parameter_count() const;
    void set_trainable(bool on);
    void set_gates(double value);
    // Toggles are structural but cheap to flip for ablations on a trained model.
    void set_phase_toggles(bool cross_attn, bool self_attn, bool mlp);

    lm::AttentionSpec cross_spec() const;
    lm::AttentionSpec self_spec() const;

    // e(t) for one block, shape [d].
    Tensor time_embed(double t, std::size_t block = 0) const;

    // Keys/values from an encoded concept phi(c) [len, d].
    ConceptCache build_concept_cache(const Tensor& concept_encoding) const;

    // v(h_in, t, c) = h_out - h_in for rows starting at absolute position
    // pos_offset. With self_cache, self-attention reads and extends the store
    // of `step`; without it, attention is full-sequence causal.
    Tensor velocity(const Tensor& h_in, double t, const ConceptCache& concept_cache, FlowSelfAttnCache* self_cache,
                    std::size_t step, std::size_t pos_offset) const;

    void write(io::ArrayFile& file) const;
    // Rebuilds from a file; refuses headers that disagree with `base`.
    static FlowModel read(const io::ArrayFile& file, const lm::LanguageModel& base);
    void save(const std::filesystem::path& path) const;
    static FlowModel load(const std::filesystem::path& path, const lm::LanguageModel& base);

private:
    FlowConfig config_;
    lm::LMConfig base_config_;
    std::vector<FlowBlockParams> blocks_;
};

// Compares base-model dimensions recorded in a header with `expected`.
void check_base_compatible(const std::map<std::string, std::string>& header, const lm::LMConfig& expected);

}  // namespace flas::flow
