#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>

namespace flas::lm {

struct LMConfig {
    std::size_t n_layers = 6;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_kv_heads = 2;
    std::size_t head_dim = 16;
    std::size_t ffn_hidden = 128;
    std::size_t vocab_size = 256;
    std::size_t max_seq = 256;
    double rope_base = 10000.0;
    std::optional<double> attn_softcap = 50.0;
    std::optional<double> final_softcap = 30.0;
    // Hidden state after layer `steer_layer` (1-based) is the hook point.
    std::size_t steer_layer = 4;
    std::size_t encoder_depth = 2;
    std::size_t max_concept_len = 64;

    void validate() const;

    // Round-trips through container headers under the given key prefix.
    void write_header(std::map<std::string, std::string>& header, const std::string& prefix = "lm.") const;
    static LMConfig read_header(const std::map<std::string, std::string>& header, const std::string& prefix = "lm.");

    bool operator==(const LMConfig&) const = default;
};

}  // namespace flas::lm
