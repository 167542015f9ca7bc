#pragma once

#include "flas/numcore/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace flas {

// ---- elementwise with numpy-style broadcasting -----------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
Tensor neg(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- reductions -------------------------------------------------------------
// Full reductions return shape [1].
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, int axis);
Tensor mean_axis(const Tensor& x, int axis);

// ---- shape ------------------------------------------------------------------
Tensor reshape(const Tensor& x, Shape shape);
// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);
// [seq, heads*head_dim] -> [heads, seq, head_dim]
Tensor split_heads(const Tensor& x, std::size_t n_heads);
// [heads, seq, head_dim] -> [seq, heads*head_dim]
Tensor merge_heads(const Tensor& x);
// [kv_heads, seq, hd] -> [kv_heads*groups, seq, hd]; query head h reads kv head h / groups.
Tensor repeat_kv(const Tensor& x, std::size_t groups);

// ---- linear algebra ---------------------------------------------------------
// a [.., m, k] x b [.., k, n] -> [.., m, n]; batch axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

// ---- transformer primitives -------------------------------------------------
using TokenId = std::int32_t;

Tensor embedding(const Tensor& table, std::span<const TokenId> ids);
Tensor softmax_lastdim(const Tensor& x);

inline constexpr double kRmsNormEps = 1e-6;
// y = x / sqrt(mean(x^2) + eps) * (1 + weight) over the last axis. An undefined
// weight means plain normalization.
Tensor rms_norm(const Tensor& x, const Tensor& weight, double eps = kRmsNormEps);

enum class ActivationKind { silu, gelu_tanh, tanh_softcap };
struct Activation {
    ActivationKind kind = ActivationKind::silu;
    double cap = 0.0;  // tanh_softcap only
};
Tensor activation(const Tensor& x, Activation act);
inline Tensor silu(const Tensor& x) { return activation(x, {ActivationKind::silu}); }
inline Tensor gelu_tanh(const Tensor& x) { return activation(x, {ActivationKind::gelu_tanh}); }
inline Tensor tanh_softcap(const Tensor& x, double cap) { return activation(x, {ActivationKind::tanh_softcap, cap}); }

// Rotates channel pairs (i, i + head_dim/2) by pos * base^(-2i/head_dim).
// x is [.., seq, head_dim]; positions has one entry per seq row.
Tensor rotary_apply(const Tensor& x, std::span<const std::size_t> positions, double base);

inline constexpr double kMaskedLogit = -1e30;
// Entries (i, j) with j > q_offset + i are replaced by kMaskedLogit.
Tensor causal_mask(const Tensor& logits, std::size_t q_offset);

enum class MaskKind { none, causal };
struct AttentionOptions {
    MaskKind mask = MaskKind::causal;
    // Absolute position of query row 0 relative to key row 0 (incremental decoding).
    std::size_t q_offset = 0;
    std::optional<double> softcap;
    bool qk_norm = false;
};
// q [n_heads, sq, hd], k/v [n_kv_heads, sk, hd] -> [n_heads, sq, hd].
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_kv_heads,
                            const AttentionOptions& opts);

inline constexpr std::int64_t kIgnoreLabel = -100;
struct CrossEntropy {
    Tensor loss;  // mean NLL over supervised rows, shape [1]
    std::size_t token_count = 0;
};
CrossEntropy masked_cross_entropy(const Tensor& logits, std::span<const std::int64_t> labels);

}  // namespace flas
