#include "flas/analysis/geometry.hpp"

#include "flas/errors.hpp"

#include <cmath>

namespace flas::analysis {

double cosine(std::span<const double> a, std::span<const double> b, bool* zero_norm) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const bool zero = na == 0.0 || nb == 0.0;
    if (zero_norm) *zero_norm = zero;
    return zero ? 0.0 : dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

std::vector<double> pooled_rows(const Tensor& x, std::size_t first) {
    const std::size_t n = x.dim(0), d = x.dim(1);
    std::vector<double> out(d, 0.0);
    for (std::size_t r = first; r < n; ++r) {
        for (std::size_t j = 0; j < d; ++j) out[j] += x.data()[r * d + j];
    }
    for (double& v : out) v /= static_cast<double>(n - first);
    return out;
}

std::span<const double> row(const Tensor& x, std::size_t r) {
    const std::size_t d = x.dim(1);
    return x.data().subspan(r * d, d);
}

}  // namespace

Matrix pooled_displacement_path(const TrajectoryRecord& rec) {
    if (rec.states.empty()) throw DataError("pooled_displacement_path: empty record");
    const std::size_t first = rec.first_analysed_row();
    const auto base = pooled_rows(rec.states.front(), first);
    Matrix out(rec.states.size(), base.size());
    for (std::size_t k = 1; k < rec.states.size(); ++k) {
        const auto p = pooled_rows(rec.states[k], first);
        for (std::size_t j = 0; j < p.size(); ++j) out(k, j) = p[j] - base[j];
    }
    return out;
}

StepCosines step_cosine_matrix(const std::vector<TrajectoryRecord>& records) {
    if (records.empty()) throw DataError("step_cosine_matrix: no records");
    const std::size_t n = records.front().n_steps();
    const double T = records.front().T;
    for (const auto& r : records) {
        if (r.n_steps() != n) throw DataError("step_cosine_matrix: records mix N values");
        if (r.T != T) throw DataError("step_cosine_matrix: records mix T values");
    }
    StepCosines out;
    out.cosine = Matrix(n, n);
    out.mean_norm.assign(n, 0.0);
    Matrix counts(n, n);
    for (const auto& r : records) {
        for (std::size_t p = r.first_analysed_row(); p < r.seq_len(); ++p) {
            ++out.samples;
            for (std::size_t i = 0; i < n; ++i) {
                const auto vi = row(r.velocities[i], p);
                double nn = 0.0;
                for (double x : vi) nn += x * x;
                out.mean_norm[i] += std::sqrt(nn);
                for (std::size_t j = 0; j < n; ++j) {
                    bool zero = false;
                    const double c = cosine(vi, row(r.velocities[j], p), &zero);
                    if (zero) {
                        ++out.skipped_pairs;
                        continue;
                    }
                    out.cosine(i, j) += c;
                    counts(i, j) += 1.0;
                }
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        out.mean_norm[i] /= static_cast<double>(std::max<std::size_t>(1, out.samples));
        for (std::size_t j = 0; j < n; ++j) {
            if (counts(i, j) > 0) out.cosine(i, j) /= counts(i, j);
        }
    }
    return out;
}

PerTokenCosines per_token_displacement_cosines(const TrajectoryRecord& rec) {
    if (rec.states.size() < 2) throw DataError("per_token_displacement_cosines: record has no steps");
    const std::size_t first = rec.first_analysed_row();
    const std::size_t P = rec.seq_len() - first;
    const std::size_t d = rec.states.front().dim(1);
    std::vector<double> disp(P * d);
    for (std::size_t p = 0; p < P; ++p) {
        const auto a = row(rec.states.front(), first + p), b = row(rec.states.back(), first + p);
        for (std::size_t j = 0; j < d; ++j) disp[p * d + j] = b[j] - a[j];
    }
    PerTokenCosines out;
    out.cosine = Matrix(P, P);
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < P; ++i) {
        for (std::size_t j = 0; j < P; ++j) {
            bool zero = false;
            const double c = cosine({disp.data() + i * d, d}, {disp.data() + j * d, d}, &zero);
            out.cosine(i, j) = c;
            if (i == j) continue;
            if (zero) {
                ++out.skipped_pairs;
                continue;
            }
            s += c;
            s2 += c * c;
            ++out.off_diagonal;
        }
    }
    if (out.off_diagonal > 0) {
        const double m = s / static_cast<double>(out.off_diagonal);
        out.mean = m;
        out.stddev = std::sqrt(std::max(0.0, s2 / static_cast<double>(out.off_diagonal) - m * m));
    }
    return out;
}

}  // namespace flas::analysis
