#pragma once

#include "flas/numcore/ops.hpp"

#include <optional>

namespace flas::lm {

struct AttentionParams {
    Tensor wq;  // [d, n_heads * head_dim]
    Tensor wk;  // [d, n_kv_heads * head_dim]
    Tensor wv;  // [d, n_kv_heads * head_dim]
    Tensor wo;  // [n_heads * head_dim, d]
};

struct AttentionSpec {
    std::size_t n_heads = 4;
    std::size_t n_kv_heads = 2;
    std::size_t head_dim = 16;
    double rope_base = 10000.0;
    std::optional<double> softcap;
    bool qk_norm = false;
};

// Rotated keys and values of already-processed positions, [n_kv, len, hd].
struct KVStore {
    Tensor k;
    Tensor v;
    std::size_t length() const { return k.defined() ? k.dim(1) : 0; }
    void append(const Tensor& k_new, const Tensor& v_new);
};

// Causal multi-head self-attention over x [seq, d] whose first row sits at
// absolute position pos_offset. With a store, new keys/values are appended
// and attention spans the stored prefix.
Tensor self_attention(const Tensor& x, const AttentionParams& p, const AttentionSpec& spec, std::size_t pos_offset,
                      KVStore* store);

// Projects a key/value source [len, d] into rotated keys and values.
KVStore project_kv(const Tensor& source, const AttentionParams& p, const AttentionSpec& spec);

// Unmasked attention from x [seq, d] onto precomputed keys/values.
Tensor cross_attention(const Tensor& x, const AttentionParams& p, const AttentionSpec& spec, const KVStore& kv,
                       std::size_t pos_offset);

Tensor gated_mlp(const Tensor& x, const Tensor& w_gate, const Tensor& w_up, const Tensor& w_down, Activation act);

}  // namespace flas::lm
