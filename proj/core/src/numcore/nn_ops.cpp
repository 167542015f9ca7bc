#include "flas/numcore/ops.hpp"

#include "flas/errors.hpp"
#include "flas/numcore/tape.hpp"

#include <algorithm>
#include <cmath>

namespace flas {

namespace {

std::size_t last_extent(const Tensor& x, const char* what) {
    if (x.ndim() == 0) throw DimensionError(std::string(what) + ": scalar input");
    return x.shape().back();
}

}  // namespace

Tensor embedding(const Tensor& table, std::span<const TokenId> ids) {
    if (table.ndim() != 2) throw DimensionError("embedding table must be [vocab, d], got " + shape_str(table.shape()));
    if (ids.empty()) throw DimensionError("embedding of an empty id list");
    const std::size_t vocab = table.dim(0);
    const std::size_t d = table.dim(1);
    std::vector<std::size_t> rows(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
            throw DataError("token id " + std::to_string(ids[i]) + " outside vocabulary of " + std::to_string(vocab));
        }
        rows[i] = static_cast<std::size_t>(ids[i]);
    }
    std::vector<double> od(ids.size() * d);
    const auto& td = table.impl()->data;
    for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(&td[rows[i] * d], d, &od[i * d]);
    Tensor out({ids.size(), d}, std::move(od));
    if (auto tape = detail::recording_tape({&table})) {
        auto ti = table.impl();
        auto oi = out.impl();
        detail::record(tape, {table}, out, [ti, oi, rows, d] {
            auto& gt = ti->grad_buffer();
            const auto& g = oi->grad;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                for (std::size_t c = 0; c < d; ++c) gt[rows[i] * d + c] += g[i * d + c];
            }
        });
    }
    return out;
}

Tensor softmax_lastdim(const Tensor& x) {
    const std::size_t n = last_extent(x, "softmax_lastdim");
    const auto& xd = x.impl()->data;
    for (double v : xd) {
        if (!std::isfinite(v)) throw NumericError("softmax_lastdim: non-finite input");
    }
    const std::size_t rows = xd.size() / n;
    std::vector<double> od(xd.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = &xd[r * n];
        double* dst = &od[r * n];
        const double mx = *std::max_element(src, src + n);
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dst[i] = std::exp(src[i] - mx);
            z += dst[i];
        }
        const double inv = 1.0 / z;
        for (std::size_t i = 0; i < n; ++i) dst[i] *= inv;
    }
    Tensor out(x.shape(), std::move(od));
    if (auto tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(tape, {x}, out, [xi, oi, n, rows] {
            auto& gx = xi->grad_buffer();
            const auto& g = oi->grad;
            const auto& y = oi->data;
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i) dot += g[r * n + i] * y[r * n + i];
                for (std::size_t i = 0; i < n; ++i) gx[r * n + i] += y[r * n + i] * (g[r * n + i] - dot);
            }
        });
    }
    return out;
}

Tensor rms_norm(const Tensor& x, const Tensor& weight, double eps) {
    const std::size_t d = last_extent(x, "rms_norm");
    if (weight.defined() && (weight.ndim() != 1 || weight.dim(0) != d)) {
        throw DimensionError("rms_norm: weight " + shape_str(weight.shape()) + " does not match input " +
                             shape_str(x.shape()));
    }
    const auto& xd = x.impl()->data;
    const std::size_t rows = xd.size() / d;
    std::vector<double> gain(d, 1.0);
    if (weight.defined()) {
        const auto& wd = weight.impl()->data;
        for (std::size_t i = 0; i < d; ++i) gain[i] = 1.0 + wd[i];
    }
    std::vector<double> inv_rms(rows);
    std::vector<double> od(xd.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = &xd[r * d];
        double ss = 0.0;
        for (std::size_t i = 0; i < d; ++i) ss += src[i] * src[i];
        const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
        inv_rms[r] = inv;
        for (std::size_t i = 0; i < d; ++i) od[r * d + i] = src[i] * inv * gain[i];
    }
    Tensor out(x.shape(), std::move(od));
    const Tensor* wptr = weight.defined() ? &weight : nullptr;
    if (auto tape = detail::recording_tape({&x, wptr})) {
        auto xi = x.impl();
        auto wi = weight.defined() ? weight.impl() : nullptr;
        auto oi = out.impl();
        std::vector<Tensor> inputs{x};
        if (weight.defined()) inputs.push_back(weight);
        detail::record(tape, inputs, out, [xi, wi, oi, gain, inv_rms, d, rows] {
            const auto& g = oi->grad;
            const auto& xv = xi->data;
            double* gx = xi->requires_grad ? xi->grad_buffer().data() : nullptr;
            double* gw = (wi && wi->requires_grad) ? wi->grad_buffer().data() : nullptr;
            const double inv_d = 1.0 / static_cast<double>(d);
            for (std::size_t r = 0; r < rows; ++r) {
                const double inv = inv_rms[r];
                const double* xr = &xv[r * d];
                const double* gr = &g[r * d];
                if (gx) {
                    double dot = 0.0;
                    for (std::size_t i = 0; i < d; ++i) dot += gr[i] * gain[i] * xr[i];
                    const double coef = dot * inv * inv * inv * inv_d;
                    for (std::size_t i = 0; i < d; ++i) gx[r * d + i] += gr[i] * gain[i] * inv - xr[i] * coef;
                }
                if (gw) {
                    for (std::size_t i = 0; i < d; ++i) gw[i] += gr[i] * xr[i] * inv;
                }
            }
        });
    }
    return out;
}

Tensor activation(const Tensor& x, Activation act) {
    const auto& xd = x.impl()->data;
    std::vector<double> od(xd.size());
    constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double kGeluA = 0.044715;
    switch (act.kind) {
        case ActivationKind::silu:
            for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] / (1.0 + std::exp(-xd[i]));
            break;
        case ActivationKind::gelu_tanh:
            for (std::size_t i = 0; i < xd.size(); ++i) {
                const double v = xd[i];
                od[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
            }
            break;
        case ActivationKind::tanh_softcap:
            if (!(act.cap > 0.0)) throw ConfigError("tanh_softcap requires a positive cap");
            for (std::size_t i = 0; i < xd.size(); ++i) od[i] = act.cap * std::tanh(xd[i] / act.cap);
            break;
    }
    Tensor out(x.shape(), std::move(od));
    if (auto tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(tape, {x}, out, [xi, oi, act] {
            auto& gx = xi->grad_buffer();
            const auto& g = oi->grad;
            const auto& xv = xi->data;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double v = xv[i];
                double dydx = 0.0;
                switch (act.kind) {
                    case ActivationKind::silu: {
                        const double s = 1.0 / (1.0 + std::exp(-v));
                        dydx = s * (1.0 + v * (1.0 - s));
                        break;
                    }
                    case ActivationKind::gelu_tanh: {
                        const double u = kGeluC * (v + kGeluA * v * v * v);
                        const double t = std::tanh(u);
                        dydx = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
                        break;
                    }
                    case ActivationKind::tanh_softcap: {
                        const double t = std::tanh(v / act.cap);
                        dydx = 1.0 - t * t;
                        break;
                    }
                }
                gx[i] += g[i] * dydx;
            }
        });
    }
    return out;
}

Tensor rotary_apply(const Tensor& x, std::span<const std::size_t> positions, double base) {
    const auto& s = x.shape();
    if (s.size() < 2) throw DimensionError("rotary_apply expects [.., seq, head_dim], got " + shape_str(s));
    const std::size_t hd = s.back();
    const std::size_t seq = s[s.size() - 2];
    if (hd % 2 != 0) throw ConfigError("rotary_apply: head_dim must be even, got " + std::to_string(hd));
    if (positions.size() != seq) {
        throw DimensionError("rotary_apply: " + std::to_string(positions.size()) + " positions for sequence of " +
                             std::to_string(seq));
    }
    const std::size_t half = hd / 2;
    // cos/sin table [seq, half]
    std::vector<double> cs(seq * half);
    std::vector<double> sn(seq * half);
    for (std::size_t p = 0; p < seq; ++p) {
        for (std::size_t i = 0; i < half; ++i) {
            const double inv_freq = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(hd));
            const double angle = static_cast<double>(positions[p]) * inv_freq;
            cs[p * half + i] = std::cos(angle);
            sn[p * half + i] = std::sin(angle);
        }
    }
    const auto& xd = x.impl()->data;
    std::vector<double> od(xd.size());
    const std::size_t rows = xd.size() / hd;
    auto rotate = [cs = std::move(cs), sn = std::move(sn), seq, half](const double* src, double* dst, std::size_t row,
                                                                      double sign) {
        const std::size_t p = row % seq;
        for (std::size_t i = 0; i < half; ++i) {
            const double c = cs[p * half + i];
            const double sv = sign * sn[p * half + i];
            const double a = src[i];
            const double b = src[i + half];
            dst[i] += a * c - b * sv;
            dst[i + half] += a * sv + b * c;
        }
    };
    for (std::size_t r = 0; r < rows; ++r) rotate(&xd[r * hd], &od[r * hd], r, 1.0);
    Tensor out(s, std::move(od));
    if (auto tape = detail::recording_tape({&x})) {
        auto xi = x.impl();
        auto oi = out.impl();
        detail::record(tape, {x}, out, [xi, oi, rows, hd, rotate] {
            auto& gx = xi->grad_buffer();
            const auto& g = oi->grad;
            // Transpose of a rotation is the rotation by the negated angle.
            for (std::size_t r = 0; r < rows; ++r) rotate(&g[r * hd], &gx[r * hd], r, -1.0);
        });
    }
    return out;
}

Tensor causal_mask(const Tensor& logits, std::size_t q_offset) {
    const auto& s = logits.shape();
    if (s.size() < 2) throw DimensionError("causal_mask expects [.., sq, sk], got " + shape_str(s));
    const std::size_t sq = s[s.size() - 2];
    const std::size_t sk = s[s.size() - 1];
    auto masked = [sq, sk, q_offset](std::size_t i) {
        const std::size_t r = (i / sk) % sq;
        const std::size_t c = i % sk;
        return c > q_offset + r;
    };
    const auto& xd = logits.impl()->data;
    std::vector<double> od(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) od[i] = masked(i) ? kMaskedLogit : xd[i];
    Tensor out(s, std::move(od));
    if (auto tape = detail::recording_tape({&logits})) {
        auto xi = logits.impl();
        auto oi = out.impl();
        detail::record(tape, {logits}, out, [xi, oi, masked] {
            auto& gx = xi->grad_buffer();
            const auto& g = oi->grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (!masked(i)) gx[i] += g[i];
            }
        });
    }
    return out;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_kv_heads,
                            const AttentionOptions& opts) {
    if (q.ndim() != 3 || k.ndim() != 3 || v.ndim() != 3) {
        throw DimensionError("attention expects [heads, seq, hd] inputs, got q " + shape_str(q.shape()) + ", k " +
                             shape_str(k.shape()) + ", v " + shape_str(v.shape()));
    }
    const std::size_t n_heads = q.dim(0);
    if (n_kv_heads == 0 || n_heads % n_kv_heads != 0) {
        throw ConfigError("attention: " + std::to_string(n_heads) + " query heads not divisible by " +
                          std::to_string(n_kv_heads) + " kv heads");
    }
    if (k.dim(0) != n_kv_heads || v.dim(0) != n_kv_heads) {
        throw DimensionError("attention: k/v head count does not match n_kv_heads=" + std::to_string(n_kv_heads));
    }
    if (k.dim(1) != v.dim(1)) {
        throw DimensionError("attention: k and v sequence extents differ: " + shape_str(k.shape()) + " vs " +
                             shape_str(v.shape()));
    }
    if (q.dim(2) != k.dim(2)) throw DimensionError("attention: q/k head_dim mismatch");

    Tensor qn = opts.qk_norm ? rms_norm(q, Tensor()) : q;
    Tensor kn = opts.qk_norm ? rms_norm(k, Tensor()) : k;
    const std::size_t groups = n_heads / n_kv_heads;
    Tensor kr = repeat_kv(kn, groups);
    Tensor vr = repeat_kv(v, groups);
    Tensor logits = scale(matmul(qn, transpose(kr)), 1.0 / std::sqrt(static_cast<double>(q.dim(2))));
    if (opts.softcap) logits = tanh_softcap(logits, *opts.softcap);
    if (opts.mask == MaskKind::causal) logits = causal_mask(logits, opts.q_offset);
    return matmul(softmax_lastdim(logits), vr);
}

CrossEntropy masked_cross_entropy(const Tensor& logits, std::span<const std::int64_t> labels) {
    if (logits.ndim() != 2) throw DimensionError("masked_cross_entropy expects [seq, vocab], got " +
                                                 shape_str(logits.shape()));
    const std::size_t seq = logits.dim(0);
    const std::size_t vocab = logits.dim(1);
    if (labels.size() != seq) {
        throw DimensionError("masked_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(seq) + " positions");
    }
    std::size_t count = 0;
    for (auto l : labels) {
        if (l == kIgnoreLabel) continue;
        if (l < 0 || static_cast<std::size_t>(l) >= vocab) {
            throw DataError("label " + std::to_string(l) + " outside vocabulary of " + std::to_string(vocab));
        }
        ++count;
    }
    if (count == 0) return {Tensor::scalar(0.0), 0};

    const auto& xd = logits.impl()->data;
    std::vector<double> probs(xd.size(), 0.0);
    double total = 0.0;
    for (std::size_t r = 0; r < seq; ++r) {
        if (labels[r] == kIgnoreLabel) continue;
        const double* row = &xd[r * vocab];
        const double mx = *std::max_element(row, row + vocab);
        double z = 0.0;
        for (std::size_t i = 0; i < vocab; ++i) {
            probs[r * vocab + i] = std::exp(row[i] - mx);
            z += probs[r * vocab + i];
        }
        for (std::size_t i = 0; i < vocab; ++i) probs[r * vocab + i] /= z;
        total -= row[labels[r]] - mx - std::log(z);
    }
    const double inv_count = 1.0 / static_cast<double>(count);
    if (!std::isfinite(total)) throw NumericError("masked_cross_entropy: non-finite loss");
    Tensor out = Tensor::scalar(total * inv_count);
    if (auto tape = detail::recording_tape({&logits})) {
        auto xi = logits.impl();
        auto oi = out.impl();
        std::vector<std::int64_t> lab(labels.begin(), labels.end());
        detail::record(tape, {logits}, out, [xi, oi, probs = std::move(probs), lab, vocab, inv_count] {
            auto& gx = xi->grad_buffer();
            const double g = oi->grad[0] * inv_count;
            for (std::size_t r = 0; r < lab.size(); ++r) {
                if (lab[r] == kIgnoreLabel) continue;
                for (std::size_t i = 0; i < vocab; ++i) gx[r * vocab + i] += g * probs[r * vocab + i];
                gx[r * vocab + static_cast<std::size_t>(lab[r])] -= g;
            }
        });
    }
    return {out, count};
}

}  // namespace flas
