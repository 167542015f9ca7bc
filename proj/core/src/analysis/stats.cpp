#include "flas/analysis/stats.hpp"

#include "flas/errors.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

namespace flas::analysis {

double hmean(const ScoreTriple& s) {
    for (double v : {s.C, s.I, s.F}) {
        if (v < 0.0 || v > 2.0) throw DataError("hmean: scores must lie in [0, 2]");
    }
    if (s.C == 0.0 || s.I == 0.0 || s.F == 0.0) return 0.0;
    return 3.0 / (1.0 / s.C + 1.0 / s.I + 1.0 / s.F);
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw DataError("mean of empty list");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) throw DataError("sample std needs at least 2 values");
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

Interval bootstrap_ci(const std::vector<double>& values, std::size_t resamples, double level, std::uint64_t seed) {
    if (values.size() < 2) throw DataError("bootstrap_ci: need at least 2 values");
    if (!(level > 0.0 && level < 1.0)) throw UsageError("bootstrap_ci: level must be in (0, 1)");
    if (resamples == 0) throw UsageError("bootstrap_ci: resamples must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
    std::vector<double> means(resamples);
    for (auto& m : means) {
        double s = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) s += values[pick(rng)];
        m = s / static_cast<double>(values.size());
    }
    std::sort(means.begin(), means.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(resamples - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, resamples - 1);
        return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
    };
    const double alpha = 1.0 - level;
    return {quantile(alpha / 2.0), quantile(1.0 - alpha / 2.0)};
}

PairedT paired_t(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DataError("paired_t: lengths differ");
    if (a.size() < 2) throw DataError("paired_t: need at least 2 pairs");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    PairedT out;
    out.df = d.size() - 1;
    const double m = mean_of(d);
    const double sd = sample_std(d);
    if (sd == 0.0) {
        out.degenerate = true;
        if (m == 0.0) {
            out.t = 0.0;
            out.p = 1.0;
        } else {
            out.t = std::copysign(std::numeric_limits<double>::infinity(), m);
            out.p = 0.0;
        }
        return out;
    }
    out.t = m / (sd / std::sqrt(static_cast<double>(d.size())));
    boost::math::students_t dist(static_cast<double>(out.df));
    out.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t)));
    return out;
}

VarianceDecomposition variance_decomposition(const std::vector<std::vector<double>>& scores) {
    if (scores.size() < 2) throw DataError("variance_decomposition: need at least 2 concepts");
    std::vector<double> all, means;
    double within = 0.0;
    for (const auto& c : scores) {
        if (c.size() < 2) throw DataError("variance_decomposition: need at least 2 prompts per concept");
        all.insert(all.end(), c.begin(), c.end());
        means.push_back(mean_of(c));
        within += sample_std(c);
    }
    VarianceDecomposition v;
    v.sigma_samp = sample_std(all);
    v.sigma_conc = sample_std(means);
    v.sigma_within = within / static_cast<double>(scores.size());
    v.residual = v.sigma_samp * v.sigma_samp - (v.sigma_conc * v.sigma_conc + v.sigma_within * v.sigma_within);
    return v;
}

void write_table(const std::filesystem::path& path, const std::vector<std::string>& columns,
                 const std::vector<std::vector<std::string>>& rows) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "# ";
    for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "\t" : "") << columns[i];
    out << '\n';
    for (const auto& r : rows) {
        if (r.size() != columns.size()) throw DataError("write_table: row width differs from schema");
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "\t" : "") << r[i];
        out << '\n';
    }
}

}  // namespace flas::analysis
