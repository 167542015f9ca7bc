#pragma once

#include "flas/base_lm/blocks.hpp"
#include "flas/base_lm/config.hpp"
#include "flas/base_lm/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace flas::lm {

// Gemma-2 style decoder layer: pre- and post-norms around both sublayers.
struct DecoderLayerParams {
    Tensor input_norm;
    Tensor post_attn_norm;
    Tensor pre_ffn_norm;
    Tensor post_ffn_norm;
    AttentionParams attn;
    Tensor w_gate;
    Tensor w_up;
    Tensor w_down;
};

struct KVCache {
    std::vector<KVStore> layers;
    std::size_t length() const { return layers.empty() ? 0 : layers.front().length(); }
};

// Transform applied to the layer-ℓ hidden state of rows starting at
// `pos_offset`. An empty Hook is the identity.
using Hook = std::function<Tensor(const Tensor& h, std::size_t pos_offset)>;

struct HookedOutput {
    Tensor logits;        // [seq, vocab]
    Tensor hidden;        // layer-ℓ state before the hook, [seq, d]
    Tensor steered;       // state passed to layer ℓ+1
};

class LanguageModel {
public:
    LanguageModel(LMConfig config, std::uint64_t seed);

    const LMConfig& config() const { return config_; }
    const Tensor& embedding_table() const { return embed_; }
    const Tensor& final_norm() const { return final_norm_; }
    const std::vector<DecoderLayerParams>& layers() const { return layers_; }
    AttentionSpec attention_spec() const;

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> parameters() const;
    void set_trainable(bool on);
    // FNV-1a over every parameter's bytes; used to assert freezing.
    std::uint64_t weights_hash() const;

    // Token embedding scaled by sqrt(d_model).
    Tensor embed(std::span<const TokenId> ids) const;
    // Layers [begin, end) (0-based) over h whose first row is at pos_offset.
    Tensor run_layers(const Tensor& h, std::size_t begin, std::size_t end, std::size_t pos_offset,
                      KVCache* cache) const;
    // Final norm, tied unembedding and optional soft-cap.
    Tensor head(const Tensor& h) const;

    HookedOutput forward_hooked(std::span<const TokenId> ids, const Hook& hook = {}) const;
    Tensor forward(std::span<const TokenId> ids) const;
    // Processes `ids` after the positions already in `cache`, extending it.
    HookedOutput forward_incremental(std::span<const TokenId> ids, KVCache& cache, const Hook& hook = {}) const;

    // Embedding -> first encoder_depth layers -> final norm, computed without
    // gradient. Shape [min(len, max_concept_len), d_model].
    Tensor encode_concept(const ConceptText& concept_text) const;

    void save(const std::filesystem::path& path) const;
    static LanguageModel load(const std::filesystem::path& path);

private:
    LMConfig config_;
    Tensor embed_;
    Tensor final_norm_;
    std::vector<DecoderLayerParams> layers_;
};

Tensor decoder_layer_forward(const Tensor& h, const DecoderLayerParams& p, const AttentionSpec& spec,
                             std::size_t pos_offset, KVStore* store);

}  // namespace flas::lm
