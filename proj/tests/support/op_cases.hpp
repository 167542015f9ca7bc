#pragma once

#include "flas/numcore/ops.hpp"

#include "test_util.hpp"

#include <functional>
#include <vector>

namespace flas::test_support {

// One differentiable scalar function per numcore op, probed by grad_check.
struct OpCase {
    const char* name;
    std::function<Tensor(const Tensor&)> f;
    Shape shape;
};

inline std::vector<OpCase> op_cases() {
    Tensor w = random_tensor({6}, 31);
    Tensor m = random_tensor({6, 5}, 32);
    Tensor other = random_tensor({4, 6}, 33);
    std::vector<std::size_t> pos{0, 3, 9, 11};
    std::vector<std::int64_t> labels{1, -100, 4, 2};
    std::vector<TokenId> ids{0, 2, 2, 5};
    return {
        {"sum", [](const Tensor& x) { return sum(x); }, {4, 6}},
        {"mean_axis", [](const Tensor& x) { return sum(square(mean_axis(x, 0))); }, {4, 6}},
        {"add_bcast", [w](const Tensor& x) { return sum(square(add(x, w))); }, {4, 6}},
        {"sub", [other](const Tensor& x) { return sum(square(sub(other, x))); }, {4, 6}},
        {"mul", [other](const Tensor& x) { return sum(mul(mul(x, other), x)); }, {4, 6}},
        {"div", [other](const Tensor& x) { return sum(div(other, add_scalar(square(x), 1.0))); }, {4, 6}},
        {"sqrt", [](const Tensor& x) { return sum(sqrt(add_scalar(square(x), 0.5))); }, {4, 6}},
        {"matmul", [m](const Tensor& x) { return sum(square(matmul(x, m))); }, {4, 6}},
        {"transpose", [other](const Tensor& x) { return sum(matmul(other, transpose(x))); }, {4, 6}},
        {"concat_slice",
         [other](const Tensor& x) { return sum(square(slice(concat({x, other}, 0), 0, 2, 7))); }, {4, 6}},
        {"heads",
         [](const Tensor& x) { return sum(square(merge_heads(repeat_kv(split_heads(x, 2), 2)))); }, {4, 6}},
        {"softmax", [other](const Tensor& x) { return sum(mul(softmax_lastdim(x), other)); }, {4, 6}},
        {"rms_norm", [other, w](const Tensor& x) { return sum(mul(rms_norm(x, w), other)); }, {4, 6}},
        {"rms_norm_weight", [other](const Tensor& x) { return sum(mul(rms_norm(other, x), other)); }, {6}},
        {"silu", [other](const Tensor& x) { return sum(mul(silu(x), other)); }, {4, 6}},
        {"gelu", [other](const Tensor& x) { return sum(mul(gelu_tanh(x), other)); }, {4, 6}},
        {"softcap", [other](const Tensor& x) { return sum(mul(tanh_softcap(scale(x, 3.0), 2.0), other)); }, {4, 6}},
        {"rotary", [pos](const Tensor& x) { return sum(square(rotary_apply(x, pos, 1e4))); }, {4, 6}},
        {"attention",
         [](const Tensor& x) {
             Tensor h = split_heads(x, 2);
             AttentionOptions o;
             o.softcap = 5.0;
             o.qk_norm = true;
             return sum(square(scaled_dot_attention(h, slice(h, 0, 0, 1), slice(h, 0, 1, 2), 1, o)));
         },
         {4, 6}},
        {"cross_entropy", [labels](const Tensor& x) { return masked_cross_entropy(x, labels).loss; }, {4, 6}},
        {"embedding", [ids, other](const Tensor& x) { return sum(mul(embedding(x, ids), other)); }, {6, 6}},
    };
}

}  // namespace flas::test_support
