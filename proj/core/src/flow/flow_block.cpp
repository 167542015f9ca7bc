#include "flas/flow/flow_block.hpp"

#include "flas/errors.hpp"

#include <cmath>
#include <random>

namespace flas::flow {

namespace {

Tensor xavier(Shape shape, std::mt19937_64& rng) {
    const double fan_in = static_cast<double>(shape[0]);
    const double fan_out = static_cast<double>(shape[1]);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> d(shape_numel(shape));
    for (auto& v : d) v = dist(rng);
    return Tensor(std::move(shape), std::move(d));
}

lm::AttentionParams xavier_attention(std::size_t d, std::size_t qd, std::size_t kvd, std::mt19937_64& rng) {
    lm::AttentionParams p;
    p.wq = xavier({d, qd}, rng);
    p.wk = xavier({d, kvd}, rng);
    p.wv = xavier({d, kvd}, rng);
    p.wo = xavier({qd, d}, rng);
    return p;
}

lm::AttentionParams clone_attention(const lm::AttentionParams& a) {
    return {a.wq.clone(), a.wk.clone(), a.wv.clone(), a.wo.clone()};
}

Tensor gated_residual(const Tensor& h, const Tensor& phase_out, const Tensor& post_norm, const Tensor& gate) {
    return add(h, mul(gate, rms_norm(phase_out, post_norm)));
}

}  // namespace

FlowSelfAttnCache::FlowSelfAttnCache(std::size_t n_steps, std::size_t n_blocks)
    : stores_(n_steps, std::vector<lm::KVStore>(n_blocks)) {}

std::size_t FlowSelfAttnCache::length(std::size_t step) const { return stores_.at(step).front().length(); }

void FlowSelfAttnCache::reset() {
    for (auto& step : stores_) {
        for (auto& s : step) s = lm::KVStore{};
    }
}

Tensor sinusoidal_embedding(double t, std::size_t pairs) {
    std::vector<double> tau(2 * pairs);
    for (std::size_t k = 0; k < pairs; ++k) {
        const double w = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(pairs));
        tau[k] = std::sin(t * w);
        tau[pairs + k] = std::cos(t * w);
    }
    return Tensor({2 * pairs}, std::move(tau));
}

FlowModel::FlowModel(FlowConfig config, const lm::LanguageModel& base, std::uint64_t seed)
    : config_(std::move(config)), base_config_(base.config()) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const std::size_t d = base_config_.d_model;
    const std::size_t qd = base_config_.n_heads * base_config_.head_dim;
    const std::size_t kvd = base_config_.n_kv_heads * base_config_.head_dim;
    const std::size_t ff = base_config_.ffn_hidden;
    // Warm start copies the first layer after the hook, whose input is h_l.
    const auto& src = base.layers().at(base_config_.steer_layer);

    for (std::size_t b = 0; b < config_.n_blocks; ++b) {
        FlowBlockParams p;
        p.time_w1 = xavier({2 * config_.time_freq_pairs, d}, rng);
        p.time_b1 = Tensor::zeros({d});
        p.time_w2 = Tensor::zeros({d, d});
        p.time_b2 = Tensor::zeros({d});
        if (config_.init_mode == InitMode::warm_start) {
            p.self = clone_attention(src.attn);
            p.cross = clone_attention(src.attn);
            p.self_pre_norm = src.input_norm.clone();
            p.self_post_norm = src.post_attn_norm.clone();
            p.cross_pre_norm = src.input_norm.clone();
            p.cross_post_norm = src.post_attn_norm.clone();
            p.mlp_w_gate = src.w_gate.clone();
            p.mlp_w_up = src.w_up.clone();
            p.mlp_w_down = src.w_down.clone();
            p.mlp_pre_norm = src.pre_ffn_norm.clone();
            p.mlp_post_norm = src.post_ffn_norm.clone();
        } else {
            p.self = xavier_attention(d, qd, kvd, rng);
            p.cross = xavier_attention(d, qd, kvd, rng);
            p.self_pre_norm = Tensor::zeros({d});
            p.self_post_norm = Tensor::zeros({d});
            p.cross_pre_norm = Tensor::zeros({d});
            p.cross_post_norm = Tensor::zeros({d});
            p.mlp_w_gate = xavier({d, ff}, rng);
            p.mlp_w_up = xavier({d, ff}, rng);
            p.mlp_w_down = xavier({ff, d}, rng);
            p.mlp_pre_norm = Tensor::zeros({d});
            p.mlp_post_norm = Tensor::zeros({d});
        }
        p.cross_gate = Tensor::full({d}, config_.gate_init);
        p.self_gate = Tensor::full({d}, config_.gate_init);
        p.mlp_gate = Tensor::full({d}, config_.gate_init);
        blocks_.push_back(std::move(p));
    }
}

namespace {

std::vector<Tensor*> block_tensors(FlowBlockParams& p) {
    return {&p.time_w1, &p.time_b1, &p.time_w2, &p.time_b2, &p.cross.wq, &p.cross.wk, &p.cross.wv,
            &p.cross.wo, &p.cross_pre_norm, &p.cross_post_norm, &p.cross_gate, &p.self.wq, &p.self.wk,
            &p.self.wv, &p.self.wo, &p.self_pre_norm, &p.self_post_norm, &p.self_gate, &p.mlp_w_gate,
            &p.mlp_w_up, &p.mlp_w_down, &p.mlp_pre_norm, &p.mlp_post_norm, &p.mlp_gate};
}

}  // namespace

FlowModel::FlowModel(const FlowModel& other)
    : config_(other.config_), base_config_(other.base_config_), blocks_(other.blocks_) {
    for (auto& p : blocks_) {
        for (Tensor* t : block_tensors(p)) {
            const bool trainable = t->requires_grad();
            *t = t->clone();
            t->set_requires_grad(trainable);
        }
    }
}

FlowModel& FlowModel::operator=(const FlowModel& other) {
    if (this != &other) *this = FlowModel(other);
    return *this;
}

std::vector<std::pair<std::string, Tensor>> FlowModel::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const auto& p = blocks_[b];
        const std::string pre = "flow." + std::to_string(b) + ".";
        out.emplace_back(pre + "time.w1", p.time_w1);
        out.emplace_back(pre + "time.b1", p.time_b1);
        out.emplace_back(pre + "time.w2", p.time_w2);
        out.emplace_back(pre + "time.b2", p.time_b2);
        out.emplace_back(pre + "cross.wq", p.cross.wq);
        out.emplace_back(pre + "cross.wk", p.cross.wk);
        out.emplace_back(pre + "cross.wv", p.cross.wv);
        out.emplace_back(pre + "cross.wo", p.cross.wo);
        out.emplace_back(pre + "cross.pre_norm", p.cross_pre_norm);
        out.emplace_back(pre + "cross.post_norm", p.cross_post_norm);
        out.emplace_back(pre + "cross.gate", p.cross_gate);
        out.emplace_back(pre + "self.wq", p.self.wq);
        out.emplace_back(pre + "self.wk", p.self.wk);
        out.emplace_back(pre + "self.wv", p.self.wv);
        out.emplace_back(pre + "self.wo", p.self.wo);
        out.emplace_back(pre + "self.pre_norm", p.self_pre_norm);
        out.emplace_back(pre + "self.post_norm", p.self_post_norm);
        out.emplace_back(pre + "self.gate", p.self_gate);
        out.emplace_back(pre + "mlp.w_gate", p.mlp_w_gate);
        out.emplace_back(pre + "mlp.w_up", p.mlp_w_up);
        out.emplace_back(pre + "mlp.w_down", p.mlp_w_down);
        out.emplace_back(pre + "mlp.pre_norm", p.mlp_pre_norm);
        out.emplace_back(pre + "mlp.post_norm", p.mlp_post_norm);
        out.emplace_back(pre + "mlp.gate", p.mlp_gate);
    }
    return out;
}

std::vector<Tensor> FlowModel::parameters() const {
    std::vector<Tensor> out;
    for (auto& [n, t] : named_parameters()) out.push_back(t);
    return out;
}

std::size_t FlowModel::parameter_count() const {
    std::size_t n = 0;
    for (auto& [name, t] : named_parameters()) n += t.numel();
    return n;
}

void FlowModel::set_trainable(bool on) {
    for (auto& [n, t] : named_parameters()) {
        Tensor handle = t;
        handle.set_requires_grad(on);
    }
}

void FlowModel::set_gates(double value) {
    for (auto& p : blocks_) {
        for (Tensor* g : {&p.cross_gate, &p.self_gate, &p.mlp_gate}) {
            for (double& v : g->mutable_data()) v = value;
        }
    }
}

void FlowModel::set_phase_toggles(bool cross_attn, bool self_attn, bool mlp) {
    config_.cross_attn = cross_attn;
    config_.self_attn = self_attn;
    config_.mlp = mlp;
}

lm::AttentionSpec FlowModel::cross_spec() const {
    lm::AttentionSpec s;
    s.n_heads = base_config_.n_heads;
    s.n_kv_heads = base_config_.n_kv_heads;
    s.head_dim = base_config_.head_dim;
    s.rope_base = base_config_.rope_base;
    s.softcap = base_config_.attn_softcap;
    s.qk_norm = true;
    return s;
}

lm::AttentionSpec FlowModel::self_spec() const {
    lm::AttentionSpec s = cross_spec();
    s.qk_norm = false;
    return s;
}

Tensor FlowModel::time_embed(double t, std::size_t block) const {
    if (t < 0.0) throw UsageError("time_embed: t must be >= 0");
    const auto& p = blocks_.at(block);
    Tensor tau = reshape(sinusoidal_embedding(t, config_.time_freq_pairs), {1, 2 * config_.time_freq_pairs});
    Tensor hidden = silu(add(matmul(tau, p.time_w1), p.time_b1));
    return reshape(add(matmul(hidden, p.time_w2), p.time_b2), {base_config_.d_model});
}

ConceptCache FlowModel::build_concept_cache(const Tensor& concept_encoding) const {
    if (concept_encoding.ndim() != 2 || concept_encoding.dim(1) != base_config_.d_model) {
        throw DimensionError("concept encoding must be [len, d_model], got " + shape_str(concept_encoding.shape()));
    }
    ConceptCache cache;
    const auto spec = cross_spec();
    for (const auto& p : blocks_) {
        // The encoder output is the source for both keys and values; the
        // block's pre-norm is applied to it like to the query stream.
        cache.blocks.push_back(lm::project_kv(rms_norm(concept_encoding, p.cross_pre_norm), p.cross, spec));
    }
    return cache;
}

Tensor FlowModel::velocity(const Tensor& h_in, double t, const ConceptCache& concept_cache,
                           FlowSelfAttnCache* self_cache, std::size_t step, std::size_t pos_offset) const {
    if (self_cache && step >= self_cache->n_steps()) {
        throw UsageError("velocity: step index " + std::to_string(step) + " >= N=" +
                         std::to_string(self_cache->n_steps()));
    }
    if (concept_cache.blocks.size() != blocks_.size()) {
        throw UsageError("velocity: concept cache built for a different block count");
    }
    const auto cspec = cross_spec();
    const auto sspec = self_spec();
    Tensor h = h_in;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const auto& p = blocks_[b];
        h = add(h, time_embed(t, b));
        if (config_.cross_attn) {
            Tensor u = lm::cross_attention(rms_norm(h, p.cross_pre_norm), p.cross, cspec, concept_cache.blocks[b],
                                           pos_offset);
            h = gated_residual(h, u, p.cross_post_norm, p.cross_gate);
        }
        if (config_.self_attn) {
            lm::KVStore* store = self_cache ? &self_cache->store(step, b) : nullptr;
            Tensor s = lm::self_attention(rms_norm(h, p.self_pre_norm), p.self, sspec, pos_offset, store);
            h = gated_residual(h, s, p.self_post_norm, p.self_gate);
        }
        if (config_.mlp) {
            Tensor m = lm::gated_mlp(rms_norm(h, p.mlp_pre_norm), p.mlp_w_gate, p.mlp_w_up, p.mlp_w_down,
                                     {ActivationKind::gelu_tanh});
            h = gated_residual(h, m, p.mlp_post_norm, p.mlp_gate);
        }
    }
    return sub(h, h_in);
}

void check_base_compatible(const std::map<std::string, std::string>& header, const lm::LMConfig& expected) {
    const auto recorded = lm::LMConfig::read_header(header);
    auto mismatch = [](const std::string& field, std::size_t got, std::size_t want) {
        throw ConfigError("checkpoint " + field + "=" + std::to_string(got) + " does not match base model " + field +
                          "=" + std::to_string(want));
    };
    if (recorded.d_model != expected.d_model) mismatch("d_model", recorded.d_model, expected.d_model);
    if (recorded.n_heads != expected.n_heads) mismatch("n_heads", recorded.n_heads, expected.n_heads);
    if (recorded.n_kv_heads != expected.n_kv_heads) mismatch("n_kv_heads", recorded.n_kv_heads, expected.n_kv_heads);
    if (recorded.head_dim != expected.head_dim) mismatch("head_dim", recorded.head_dim, expected.head_dim);
    if (recorded.ffn_hidden != expected.ffn_hidden) mismatch("ffn_hidden", recorded.ffn_hidden, expected.ffn_hidden);
    if (recorded.steer_layer != expected.steer_layer) {
        mismatch("steer_layer", recorded.steer_layer, expected.steer_layer);
    }
}

void FlowModel::write(io::ArrayFile& file) const {
    config_.write_header(file.header);
    base_config_.write_header(file.header);
    for (const auto& [name, t] : named_parameters()) file.put(name, t);
}

FlowModel FlowModel::read(const io::ArrayFile& file, const lm::LanguageModel& base) {
    check_base_compatible(file.header, base.config());
    FlowModel model(FlowConfig::read_header(file.header), base, 0);
    for (auto& [name, t] : model.named_parameters()) {
        const Tensor& src = file.get(name);
        if (src.shape() != t.shape()) {
            throw ConfigError("flow parameter '" + name + "' has shape " + shape_str(src.shape()) + ", expected " +
                              shape_str(t.shape()));
        }
        Tensor dst = t;
        std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
    }
    return model;
}

void FlowModel::save(const std::filesystem::path& path) const {
    io::ArrayFile file;
    file.header["kind"] = "flow";
    write(file);
    io::write_array_file(path, file);
}

FlowModel FlowModel::load(const std::filesystem::path& path, const lm::LanguageModel& base) {
    return read(io::read_array_file(path), base);
}

}  // namespace flas::flow
