#include "flas/base_lm/config.hpp"

#include "flas/errors.hpp"
#include "flas/io/container.hpp"

namespace flas::lm {

void LMConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("LMConfig: " + m); };
    if (n_layers == 0 || d_model == 0 || n_heads == 0 || n_kv_heads == 0 || head_dim == 0 || vocab_size == 0) {
        fail("extents must be positive");
    }
    if (n_heads % n_kv_heads != 0) fail("n_heads must be divisible by n_kv_heads");
    if (head_dim % 2 != 0) fail("head_dim must be even for rotary embeddings");
    if (steer_layer < 1 || steer_layer >= n_layers) fail("steer_layer must lie in [1, n_layers-1]");
    if (encoder_depth > n_layers) fail("encoder_depth exceeds n_layers");
    if (max_concept_len == 0) fail("max_concept_len must be positive");
    if (attn_softcap && *attn_softcap <= 0) fail("attn_softcap must be positive");
    if (final_softcap && *final_softcap <= 0) fail("final_softcap must be positive");
}

void LMConfig::write_header(std::map<std::string, std::string>& h, const std::string& p) const {
    h[p + "n_layers"] = std::to_string(n_layers);
    h[p + "d_model"] = std::to_string(d_model);
    h[p + "n_heads"] = std::to_string(n_heads);
    h[p + "n_kv_heads"] = std::to_string(n_kv_heads);
    h[p + "head_dim"] = std::to_string(head_dim);
    h[p + "ffn_hidden"] = std::to_string(ffn_hidden);
    h[p + "vocab_size"] = std::to_string(vocab_size);
    h[p + "max_seq"] = std::to_string(max_seq);
    h[p + "rope_base"] = io::format_double(rope_base);
    h[p + "attn_softcap"] = attn_softcap ? io::format_double(*attn_softcap) : "none";
    h[p + "final_softcap"] = final_softcap ? io::format_double(*final_softcap) : "none";
    h[p + "steer_layer"] = std::to_string(steer_layer);
    h[p + "encoder_depth"] = std::to_string(encoder_depth);
    h[p + "max_concept_len"] = std::to_string(max_concept_len);
}

LMConfig LMConfig::read_header(const std::map<std::string, std::string>& h, const std::string& p) {
    auto get = [&](const std::string& k) -> const std::string& {
        auto it = h.find(p + k);
        if (it == h.end()) throw ConfigError("missing header field '" + p + k + "'");
        return it->second;
    };
    auto count = [&](const std::string& k) { return static_cast<std::size_t>(io::parse_int(get(k), p + k)); };
    auto opt = [&](const std::string& k) -> std::optional<double> {
        const auto& v = get(k);
        if (v == "none") return std::nullopt;
        return io::parse_double(v, p + k);
    };
    LMConfig c;
    c.n_layers = count("n_layers");
    c.d_model = count("d_model");
    c.n_heads = count("n_heads");
    c.n_kv_heads = count("n_kv_heads");
    c.head_dim = count("head_dim");
    c.ffn_hidden = count("ffn_hidden");
    c.vocab_size = count("vocab_size");
    c.max_seq = count("max_seq");
    c.rope_base = io::parse_double(get("rope_base"), p + "rope_base");
    c.attn_softcap = opt("attn_softcap");
    c.final_softcap = opt("final_softcap");
    c.steer_layer = count("steer_layer");
    c.encoder_depth = count("encoder_depth");
    c.max_concept_len = count("max_concept_len");
    c.validate();
    return c;
}

}  // namespace flas::lm
