#include "flas/base_lm/blocks.hpp"

#include <numeric>

namespace flas::lm {

namespace {
std::vector<std::size_t> positions_from(std::size_t offset, std::size_t n) {
    std::vector<std::size_t> pos(n);
    std::iota(pos.begin(), pos.end(), offset);
    return pos;
}
}  // namespace

void KVStore::append(const Tensor& k_new, const Tensor& v_new) {
    if (!k.defined()) {
        k = k_new;
        v = v_new;
        return;
    }
    k = concat({k, k_new}, 1);
    v = concat({v, v_new}, 1);
}

Tensor self_attention(const Tensor& x, const AttentionParams& p, const AttentionSpec& spec, std::size_t pos_offset,
                      KVStore* store) {
    const std::size_t seq = x.dim(0);
    const auto pos = positions_from(pos_offset, seq);
    Tensor q = rotary_apply(split_heads(matmul(x, p.wq), spec.n_heads), pos, spec.rope_base);
    Tensor k = rotary_apply(split_heads(matmul(x, p.wk), spec.n_kv_heads), pos, spec.rope_base);
    Tensor v = split_heads(matmul(x, p.wv), spec.n_kv_heads);
    std::size_t q_offset = 0;
    if (store) {
        q_offset = store->length();
        store->append(k, v);
        k = store->k;
        v = store->v;
    }
    AttentionOptions opts;
    opts.mask = MaskKind::causal;
    opts.q_offset = q_offset;
    opts.softcap = spec.softcap;
    opts.qk_norm = spec.qk_norm;
    Tensor attn = scaled_dot_attention(q, k, v, spec.n_kv_heads, opts);
    return matmul(merge_heads(attn), p.wo);
}

KVStore project_kv(const Tensor& source, const AttentionParams& p, const AttentionSpec& spec) {
    const auto pos = positions_from(0, source.dim(0));
    KVStore kv;
    kv.k = rotary_apply(split_heads(matmul(source, p.wk), spec.n_kv_heads), pos, spec.rope_base);
    kv.v = split_heads(matmul(source, p.wv), spec.n_kv_heads);
    return kv;
}

Tensor cross_attention(const Tensor& x, const AttentionParams& p, const AttentionSpec& spec, const KVStore& kv,
                       std::size_t pos_offset) {
    const auto pos = positions_from(pos_offset, x.dim(0));
    Tensor q = rotary_apply(split_heads(matmul(x, p.wq), spec.n_heads), pos, spec.rope_base);
    AttentionOptions opts;
    opts.mask = MaskKind::none;
    opts.softcap = spec.softcap;
    opts.qk_norm = spec.qk_norm;
    Tensor attn = scaled_dot_attention(q, kv.k, kv.v, spec.n_kv_heads, opts);
    return matmul(merge_heads(attn), p.wo);
}

Tensor gated_mlp(const Tensor& x, const Tensor& w_gate, const Tensor& w_up, const Tensor& w_down, Activation act) {
    return matmul(mul(activation(matmul(x, w_gate), act), matmul(x, w_up)), w_down);
}

}  // namespace flas::lm
