#include "flas/base_lm/model.hpp"

#include "flas/errors.hpp"
#include "flas/io/container.hpp"
#include "flas/numcore/tape.hpp"

#include <cmath>
#include <cstring>
#include <random>

namespace flas::lm {

namespace {

Tensor normal(Shape shape, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> d(shape_numel(shape));
    for (auto& v : d) v = dist(rng);
    return Tensor(std::move(shape), std::move(d));
}

}  // namespace

LanguageModel::LanguageModel(LMConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const std::size_t d = config_.d_model;
    const std::size_t qd = config_.n_heads * config_.head_dim;
    const std::size_t kvd = config_.n_kv_heads * config_.head_dim;
    const double in_std = 1.0 / std::sqrt(static_cast<double>(d));
    const double out_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(config_.n_layers));

    embed_ = normal({config_.vocab_size, d}, in_std, rng);
    final_norm_ = Tensor::zeros({d});
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
        DecoderLayerParams p;
        p.input_norm = Tensor::zeros({d});
        p.post_attn_norm = Tensor::zeros({d});
        p.pre_ffn_norm = Tensor::zeros({d});
        p.post_ffn_norm = Tensor::zeros({d});
        p.attn.wq = normal({d, qd}, in_std, rng);
        p.attn.wk = normal({d, kvd}, in_std, rng);
        p.attn.wv = normal({d, kvd}, in_std, rng);
        p.attn.wo = normal({qd, d}, out_scale / std::sqrt(static_cast<double>(qd)), rng);
        p.w_gate = normal({d, config_.ffn_hidden}, in_std, rng);
        p.w_up = normal({d, config_.ffn_hidden}, in_std, rng);
        p.w_down = normal({config_.ffn_hidden, d}, out_scale / std::sqrt(static_cast<double>(config_.ffn_hidden)), rng);
        layers_.push_back(std::move(p));
    }
}

AttentionSpec LanguageModel::attention_spec() const {
    AttentionSpec s;
    s.n_heads = config_.n_heads;
    s.n_kv_heads = config_.n_kv_heads;
    s.head_dim = config_.head_dim;
    s.rope_base = config_.rope_base;
    s.softcap = config_.attn_softcap;
    s.qk_norm = false;
    return s;
}

std::vector<std::pair<std::string, Tensor>> LanguageModel::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embed", embed_);
    out.emplace_back("final_norm", final_norm_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& p = layers_[l];
        const std::string pre = "layers." + std::to_string(l) + ".";
        out.emplace_back(pre + "input_norm", p.input_norm);
        out.emplace_back(pre + "post_attn_norm", p.post_attn_norm);
        out.emplace_back(pre + "pre_ffn_norm", p.pre_ffn_norm);
        out.emplace_back(pre + "post_ffn_norm", p.post_ffn_norm);
        out.emplace_back(pre + "attn.wq", p.attn.wq);
        out.emplace_back(pre + "attn.wk", p.attn.wk);
        out.emplace_back(pre + "attn.wv", p.attn.wv);
        out.emplace_back(pre + "attn.wo", p.attn.wo);
        out.emplace_back(pre + "mlp.w_gate", p.w_gate);
        out.emplace_back(pre + "mlp.w_up", p.w_up);
        out.emplace_back(pre + "mlp.w_down", p.w_down);
    }
    return out;
}

std::vector<Tensor> LanguageModel::parameters() const {
    std::vector<Tensor> out;
    for (auto& [n, t] : named_parameters()) out.push_back(t);
    return out;
}

void LanguageModel::set_trainable(bool on) {
    for (auto& [n, t] : named_parameters()) {
        Tensor handle = t;
        handle.set_requires_grad(on);
    }
}

std::uint64_t LanguageModel::weights_hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [name, t] : named_parameters()) {
        for (double v : t.data()) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof(double));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 1099511628211ull;
            }
        }
    }
    return h;
}

Tensor LanguageModel::embed(std::span<const TokenId> ids) const {
    return scale(embedding(embed_, ids), std::sqrt(static_cast<double>(config_.d_model)));
}

Tensor decoder_layer_forward(const Tensor& h, const DecoderLayerParams& p, const AttentionSpec& spec,
                             std::size_t pos_offset, KVStore* store) {
    Tensor a = self_attention(rms_norm(h, p.input_norm), p.attn, spec, pos_offset, store);
    Tensor x = add(h, rms_norm(a, p.post_attn_norm));
    Tensor m = gated_mlp(rms_norm(x, p.pre_ffn_norm), p.w_gate, p.w_up, p.w_down, {ActivationKind::gelu_tanh});
    return add(x, rms_norm(m, p.post_ffn_norm));
}

Tensor LanguageModel::run_layers(const Tensor& h, std::size_t begin, std::size_t end, std::size_t pos_offset,
                                 KVCache* cache) const {
    const auto spec = attention_spec();
    Tensor x = h;
    for (std::size_t l = begin; l < end; ++l) {
        KVStore* store = cache ? &cache->layers[l] : nullptr;
        x = decoder_layer_forward(x, layers_[l], spec, pos_offset, store);
    }
    return x;
}

Tensor LanguageModel::head(const Tensor& h) const {
    Tensor logits = matmul(rms_norm(h, final_norm_), transpose(embed_));
    if (config_.final_softcap) logits = tanh_softcap(logits, *config_.final_softcap);
    return logits;
}

HookedOutput LanguageModel::forward_hooked(std::span<const TokenId> ids, const Hook& hook) const {
    if (ids.empty()) throw DataError("forward: empty token sequence");
    if (ids.size() > config_.max_seq) {
        throw LengthError("sequence of " + std::to_string(ids.size()) + " tokens exceeds max_seq " +
                          std::to_string(config_.max_seq));
    }
    const std::size_t l = config_.steer_layer;
    HookedOutput out;
    out.hidden = run_layers(embed(ids), 0, l, 0, nullptr);
    out.steered = hook ? hook(out.hidden, 0) : out.hidden;
    out.logits = head(run_layers(out.steered, l, config_.n_layers, 0, nullptr));
    return out;
}

Tensor LanguageModel::forward(std::span<const TokenId> ids) const { return forward_hooked(ids).logits; }

HookedOutput LanguageModel::forward_incremental(std::span<const TokenId> ids, KVCache& cache,
                                                const Hook& hook) const {
    if (ids.empty()) throw DataError("forward: empty token sequence");
    if (cache.layers.empty()) cache.layers.resize(config_.n_layers);
    const std::size_t offset = cache.length();
    if (offset + ids.size() > config_.max_seq) {
        throw LengthError("sequence of " + std::to_string(offset + ids.size()) + " tokens exceeds max_seq " +
                          std::to_string(config_.max_seq));
    }
    const std::size_t l = config_.steer_layer;
    HookedOutput out;
    out.hidden = run_layers(embed(ids), 0, l, offset, &cache);
    out.steered = hook ? hook(out.hidden, offset) : out.hidden;
    out.logits = head(run_layers(out.steered, l, config_.n_layers, offset, &cache));
    return out;
}

Tensor LanguageModel::encode_concept(const ConceptText& concept_text) const {
    if (concept_text.ids.empty()) throw DataError("encode_concept: empty concept");
    NoGradGuard guard;
    std::span<const TokenId> ids(concept_text.ids);
    if (ids.size() > config_.max_concept_len) ids = ids.first(config_.max_concept_len);
    Tensor h = run_layers(embed(ids), 0, config_.encoder_depth, 0, nullptr);
    return rms_norm(h, final_norm_).detach();
}

void LanguageModel::save(const std::filesystem::path& path) const {
    io::ArrayFile file;
    file.header["kind"] = "base_lm";
    config_.write_header(file.header);
    for (const auto& [name, t] : named_parameters()) file.put(name, t);
    io::write_array_file(path, file);
}

LanguageModel LanguageModel::load(const std::filesystem::path& path) {
    auto file = io::read_array_file(path);
    if (file.header.count("kind") == 0 || file.header.at("kind") != "base_lm") {
        throw ConfigError(path.string() + " does not hold base LM weights");
    }
    LanguageModel model(LMConfig::read_header(file.header), 0);
    for (auto& [name, t] : model.named_parameters()) {
        const Tensor& src = file.get(name);
        if (src.shape() != t.shape()) {
            throw ConfigError("weight '" + name + "' has shape " + shape_str(src.shape()) + ", expected " +
                              shape_str(t.shape()));
        }
        Tensor dst = t;
        auto out = dst.mutable_data();
        std::copy(src.data().begin(), src.data().end(), out.begin());
    }
    return model;
}

}  // namespace flas::lm
