#include "flas/numcore/ops.hpp"

#include "flas/errors.hpp"
#include "flas/numcore/tape.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace flas {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// Strides (in elements) of `shape` aligned to the trailing axes of `out`,
// zero along broadcast axes.
std::vector<std::size_t> broadcast_strides(const Shape& shape, const Shape& out) {
    std::vector<std::size_t> strides(out.size(), 0);
    std::size_t stride = 1;
    const std::size_t off = out.size() - shape.size();
    for (std::size_t i = shape.size(); i-- > 0;) {
        strides[off + i] = shape[i] == 1 ? 0 : stride;
        stride *= shape[i];
    }
    return strides;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* what) {
    const std::size_t n = std::max(a.size(), b.size());
    Shape out(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
        const std::size_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw DimensionError(std::string(what) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                                 " are not broadcast-compatible");
        }
        out[i] = std::max(da, db);
    }
    return out;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
                        F&& f) {
    const std::size_t n = shape_numel(out);
    const std::size_t nd = out.size();
    std::vector<std::size_t> idx(nd, 0);
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (std::size_t d = nd; d-- > 0;) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < out[d]) break;
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

enum class Layout { same, b_suffix, a_suffix, general };

Layout classify(const Shape& a, const Shape& b) {
    if (a == b) return Layout::same;
    auto is_suffix = [](const Shape& small, const Shape& big) {
        if (small.size() > big.size()) return false;
        return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
    };
    if (is_suffix(b, a)) return Layout::b_suffix;
    if (is_suffix(a, b)) return Layout::a_suffix;
    return Layout::general;
}

template <class Fwd, class GA, class GB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, GA grad_a, GB grad_b) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
    const Layout layout = classify(a.shape(), b.shape());
    const auto& ad = a.impl()->data;
    const auto& bd = b.impl()->data;
    const std::size_t n = shape_numel(out_shape);
    std::vector<double> od(n);

    auto visit = [&](auto&& f) {
        switch (layout) {
            case Layout::same:
                for (std::size_t i = 0; i < n; ++i) f(i, i, i);
                break;
            case Layout::b_suffix: {
                const std::size_t nb = bd.size();
                for (std::size_t i = 0; i < n; ++i) f(i, i, i % nb);
                break;
            }
            case Layout::a_suffix: {
                const std::size_t na = ad.size();
                for (std::size_t i = 0; i < n; ++i) f(i, i % na, i);
                break;
            }
            case Layout::general:
                for_each_broadcast(out_shape, broadcast_strides(a.shape(), out_shape),
                                   broadcast_strides(b.shape(), out_shape), f);
                break;
        }
    };
    visit([&](std::size_t i, std::size_t ia, std::size_t ib) { od[i] = fwd(ad[ia], bd[ib]); });

    Tensor out(out_shape, std::move(od));
    if (auto tape = detail::recording_tape({&a, &b})) {
        auto ai = a.impl();
        auto bi = b.impl();
        auto oi = out.impl();
        detail::record(tape, {a, b}, out, [ai, bi, oi, out_shape, layout, grad_a, grad_b] {
            const auto& g = oi->grad;
            const auto& av = ai->data;
            const auto& bv = bi->data;
            const auto& ov = oi->data;
            double* ga = ai->requires_grad ? ai->grad_buffer().data() : nullptr;
            double* gb = bi->requires_grad ? bi->grad_buffer().data() : nullptr;
            auto step = [&](std::size_t i, std::size_t ia, std::size_t ib) {
                if (ga) ga[ia] += grad_a(g[i], av[ia], bv[ib], ov[i]);
                if (gb) gb[ib] += grad_b(g[i], av[ia], bv[ib], ov[i]);
            };
            const std::size_t n = g.size();
            switch (layout) {
                case Layout::same:
                    for (std::size_t i = 0; i < n; ++i) step(i, i, i);
                    break;
                case Layout::b_suffix:
                    for (std::size_t i = 0; i < n; ++i) step(i, i, i % bv.size());
                    break;
                case Layout::a_suffix:
                    for (std::size_t i = 0; i < n; ++i) step(i, i % av.size(), i);
                    break;
                case Layout::general:
                    for_each_broadcast(out_shape, broadcast_strides(ai->shape, out_shape),
                                       broadcast_strides(bi->shape, out_shape), step);
                    break;
            }
        });
    }
    return out;
}

template <class Fwd, class Deriv>
Tensor unary_op(const Tensor& x, Fwd fwd, Deriv deriv) {
    const auto& xd = x.impl()->data;
    std::vector<double> od(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) od[i] = fwd(xd[i]);
    Tensor out(x.shape(), std::move(od));
    if (auto tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(tape, {x}, out, [xi, oi, deriv] {
            auto& gx = xi->grad_buffer();
            const auto& g = oi->grad;
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xi->data[i], oi->data[i]);
        });
    }
    return out;
}

// Output shares the layout of x up to a permutation; `map(i)` gives the source
// index of output element i. Backward scatters through the same map.
template <class Map>
Tensor gather_op(const Tensor& x, Shape out_shape, Map map) {
    const std::size_t n = shape_numel(out_shape);
    const auto& xd = x.impl()->data;
    std::vector<double> od(n);
    for (std::size_t i = 0; i < n; ++i) od[i] = xd[map(i)];
    Tensor out(std::move(out_shape), std::move(od));
    if (auto tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(tape, {x}, out, [xi, oi, map] {
            auto& gx = xi->grad_buffer();
            const auto& g = oi->grad;
            for (std::size_t i = 0; i < g.size(); ++i) gx[map(i)] += g[i];
        });
    }
    return out;
}

std::size_t normalize_axis(int axis, std::size_t ndim) {
    const int n = static_cast<int>(ndim);
    const int a = axis < 0 ? axis + n : axis;
    if (a < 0 || a >= n) throw DimensionError("axis " + std::to_string(axis) + " out of range");
    return static_cast<std::size_t>(a);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double g, double, double, double) { return g; }, [](double g, double, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double g, double, double, double) { return g; }, [](double g, double, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double g, double, double y, double) { return g * y; },
        [](double g, double x, double, double) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, "div", [](double x, double y) { return x / y; },
        [](double g, double, double y, double) { return g / y; },
        [](double g, double, double y, double o) { return -g * o / y; });
}

Tensor scale(const Tensor& x, double s) {
    return unary_op(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& x, double s) {
    return unary_op(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor sqrt(const Tensor& x) {
    return unary_op(x, [](double v) { return std::sqrt(v); }, [](double, double o) { return 0.5 / o; });
}

Tensor square(const Tensor& x) {
    return unary_op(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor out = Tensor::scalar(s);
    if (auto tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(tape, {x}, out, [xi, oi] {
            auto& gx = xi->grad_buffer();
            const double g = oi->grad[0];
            for (auto& v : gx) v += g;
        });
    }
    return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_axis(const Tensor& x, int axis) {
    const auto& s = x.shape();
    const std::size_t ax = normalize_axis(axis, s.size());
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
    for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t n = s[ax];
    Shape out_shape;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i != ax) out_shape.push_back(s[i]);
    }
    if (out_shape.empty()) out_shape = {1};
    std::vector<double> od(outer * inner, 0.0);
    const auto& xd = x.impl()->data;
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < n; ++j) {
            const double* src = &xd[(o * n + j) * inner];
            double* dst = &od[o * inner];
            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    }
    Tensor out(out_shape, std::move(od));
    if (auto tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(tape, {x}, out, [xi, oi, outer, inner, n] {
            auto& gx = xi->grad_buffer();
            const auto& g = oi->grad;
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t j = 0; j < n; ++j) {
                    double* dst = &gx[(o * n + j) * inner];
                    const double* src = &g[o * inner];
                    for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                }
            }
        });
    }
    return out;
}

Tensor mean_axis(const Tensor& x, int axis) {
    const std::size_t n = x.shape()[normalize_axis(axis, x.ndim())];
    return scale(sum_axis(x, axis), 1.0 / static_cast<double>(n));
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes element count");
    }
    return gather_op(x, std::move(shape), [](std::size_t i) { return i; });
}

Tensor transpose(const Tensor& x) {
    const auto& s = x.shape();
    if (s.size() < 2) throw DimensionError("transpose needs rank >= 2, got " + shape_str(s));
    const std::size_t m = s[s.size() - 2];
    const std::size_t n = s[s.size() - 1];
    Shape out_shape = s;
    std::swap(out_shape[s.size() - 2], out_shape[s.size() - 1]);
    const std::size_t mn = m * n;
    return gather_op(x, out_shape, [m, n, mn](std::size_t i) {
        const std::size_t b = i / mn;
        const std::size_t r = i % mn;
        const std::size_t col = r / m;  // output row index == input column
        const std::size_t row = r % m;
        return b * mn + row * n + col;
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw DimensionError("concat of zero tensors");
    const Shape& s0 = parts[0].shape();
    const std::size_t ax = normalize_axis(axis, s0.size());
    std::size_t total = 0;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        if (s.size() != s0.size()) throw DimensionError("concat rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i != ax && s[i] != s0[i]) {
                throw DimensionError("concat shapes " + shape_str(s0) + " and " + shape_str(s) + " disagree");
            }
        }
        total += s[ax];
    }
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t i = 0; i < ax; ++i) outer *= s0[i];
    for (std::size_t i = ax + 1; i < s0.size(); ++i) inner *= s0[i];
    Shape out_shape = s0;
    out_shape[ax] = total;
    std::vector<double> od(shape_numel(out_shape));
    std::size_t offset = 0;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        const std::size_t len = p.shape()[ax];
        const auto& pd = p.impl()->data;
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(&pd[o * len * inner], len * inner, &od[(o * total + offset) * inner]);
        }
        offsets.push_back(offset);
        offset += len;
    }
    Tensor out(out_shape, std::move(od));
    std::shared_ptr<detail::TapeState> tape;
    for (const auto& p : parts) {
        if ((tape = detail::recording_tape({&p}))) break;
    }
    if (tape) {
        std::vector<std::shared_ptr<detail::TensorImpl>> impls;
        for (const auto& p : parts) impls.push_back(p.impl());
        auto oi = out.impl();
        detail::record(tape, parts, out, [impls, oi, offsets, outer, inner, total, ax] {
            const auto& g = oi->grad;
            for (std::size_t k = 0; k < impls.size(); ++k) {
                auto& pi = impls[k];
                if (!pi->requires_grad) continue;
                const std::size_t len = pi->shape[ax];
                auto& gp = pi->grad_buffer();
                for (std::size_t o = 0; o < outer; ++o) {
                    const double* src = &g[(o * total + offsets[k]) * inner];
                    double* dst = &gp[o * len * inner];
                    for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                }
            }
        });
    }
    return out;
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
    const auto& s = x.shape();
    const std::size_t ax = normalize_axis(axis, s.size());
    if (begin >= end || end > s[ax]) {
        throw DimensionError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                             shape_str(s));
    }
    std::size_t inner = 1;
    for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = end - begin;
    const std::size_t full = s[ax];
    Shape out_shape = s;
    out_shape[ax] = len;
    return gather_op(x, out_shape, [inner, len, full, begin](std::size_t i) {
        const std::size_t o = i / (len * inner);
        const std::size_t r = i % (len * inner);
        return (o * full + begin) * inner + r;
    });
}

Tensor split_heads(const Tensor& x, std::size_t n_heads) {
    const auto& s = x.shape();
    if (s.size() != 2 || n_heads == 0 || s[1] % n_heads != 0) {
        throw DimensionError("split_heads: cannot split " + shape_str(s) + " into " + std::to_string(n_heads) +
                             " heads");
    }
    const std::size_t seq = s[0];
    const std::size_t hd = s[1] / n_heads;
    return gather_op(x, {n_heads, seq, hd}, [seq, hd, n_heads](std::size_t i) {
        const std::size_t h = i / (seq * hd);
        const std::size_t r = i % (seq * hd);
        const std::size_t p = r / hd;
        const std::size_t c = r % hd;
        return p * n_heads * hd + h * hd + c;
    });
}

Tensor merge_heads(const Tensor& x) {
    const auto& s = x.shape();
    if (s.size() != 3) throw DimensionError("merge_heads expects [heads, seq, hd], got " + shape_str(s));
    const std::size_t nh = s[0];
    const std::size_t seq = s[1];
    const std::size_t hd = s[2];
    return gather_op(x, {seq, nh * hd}, [seq, hd, nh](std::size_t i) {
        const std::size_t p = i / (nh * hd);
        const std::size_t r = i % (nh * hd);
        const std::size_t h = r / hd;
        const std::size_t c = r % hd;
        return (h * seq + p) * hd + c;
    });
}

Tensor repeat_kv(const Tensor& x, std::size_t groups) {
    if (groups == 1) return x;
    const auto& s = x.shape();
    if (s.size() != 3) throw DimensionError("repeat_kv expects [kv_heads, seq, hd], got " + shape_str(s));
    const std::size_t block = s[1] * s[2];
    return gather_op(x, {s[0] * groups, s[1], s[2]}, [block, groups](std::size_t i) {
        const std::size_t h = i / block;
        return (h / groups) * block + i % block;
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sb.size() < 2 || sa[sa.size() - 1] != sb[sb.size() - 2]) {
        throw DimensionError("matmul: shapes " + shape_str(sa) + " and " + shape_str(sb) + " are incompatible");
    }
    const std::size_t m = sa[sa.size() - 2];
    const std::size_t k = sa[sa.size() - 1];
    const std::size_t n = sb[sb.size() - 1];
    Shape ba(sa.begin(), sa.end() - 2);
    Shape bb(sb.begin(), sb.end() - 2);
    Shape batch;
    try {
        batch = broadcast_shape(ba, bb, "matmul");
    } catch (const DimensionError&) {
        throw DimensionError("matmul: batch axes of " + shape_str(sa) + " and " + shape_str(sb) +
                             " are not broadcast-compatible");
    }
    // Enumerate (a_batch, b_batch) pairs.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (batch.empty()) {
        pairs.emplace_back(0, 0);
    } else {
        for_each_broadcast(batch, broadcast_strides(ba, batch), broadcast_strides(bb, batch),
                           [&](std::size_t, std::size_t ia, std::size_t ib) { pairs.emplace_back(ia, ib); });
    }
    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> od(shape_numel(out_shape), 0.0);
    const double* ad = a.impl()->data.data();
    const double* bd = b.impl()->data.data();
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        ConstMap am(ad + pairs[p].first * m * k, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
        ConstMap bm(bd + pairs[p].second * k * n, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
        MutMap om(od.data() + p * m * n, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        om.noalias() = am * bm;
    }
    Tensor out(out_shape, std::move(od));
    if (auto tape = detail::recording_tape({&a, &b})) {
        auto ai = a.impl();
        auto bi = b.impl();
        auto oi = out.impl();
        detail::record(tape, {a, b}, out, [ai, bi, oi, pairs, m, k, n] {
            const double* g = oi->grad.data();
            double* ga = ai->requires_grad ? ai->grad_buffer().data() : nullptr;
            double* gb = bi->requires_grad ? bi->grad_buffer().data() : nullptr;
            for (std::size_t p = 0; p < pairs.size(); ++p) {
                const auto [ia, ib] = pairs[p];
                ConstMap gm(g + p * m * n, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
                if (ga) {
                    ConstMap bm(bi->data.data() + ib * k * n, static_cast<Eigen::Index>(k),
                                static_cast<Eigen::Index>(n));
                    MutMap gam(ga + ia * m * k, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
                    gam.noalias() += gm * bm.transpose();
                }
                if (gb) {
                    ConstMap am(ai->data.data() + ia * m * k, static_cast<Eigen::Index>(m),
                                static_cast<Eigen::Index>(k));
                    MutMap gbm(gb + ib * k * n, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
                    gbm.noalias() += am.transpose() * gm;
                }
            }
        });
    }
    return out;
}

}  // namespace flas
