#include "flas/baselines/baselines.hpp"

#include "flas/errors.hpp"
#include "flas/numcore/ops.hpp"
#include "flas/numcore/tape.hpp"

#include <algorithm>
#include <cmath>

namespace flas::baselines {

Tensor mean_pool(const Tensor& a) {
    if (a.ndim() == 1) return a;
    if (a.ndim() == 2) return mean_axis(a, 0);
    throw DimensionError("mean_pool: expected [d] or [seq, d], got " + shape_str(a.shape()));
}

namespace {

std::vector<double> pooled_mean(const std::vector<Tensor>& xs, const char* what) {
    if (xs.empty()) throw DataError(std::string("diffmean_fit: empty ") + what + " list");
    std::vector<double> acc;
    for (const auto& x : xs) {
        Tensor p = mean_pool(x);
        if (acc.empty()) acc.assign(p.numel(), 0.0);
        if (p.numel() != acc.size()) throw DimensionError("diffmean_fit: inconsistent widths");
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p.data()[i];
    }
    for (double& v : acc) v /= static_cast<double>(xs.size());
    return acc;
}

}  // namespace

Tensor diffmean_fit(const std::vector<Tensor>& pos, const std::vector<Tensor>& neg) {
    NoGradGuard guard;
    auto p = pooled_mean(pos, "positive");
    auto n = pooled_mean(neg, "negative");
    if (p.size() != n.size()) throw DimensionError("diffmean_fit: positive and negative widths differ");
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= n[i];
    const std::size_t d = p.size();
    return Tensor({d}, std::move(p));
}

Tensor additive_steer(const Tensor& h, const Tensor& delta, double alpha) {
    if (alpha == 0.0) return h;
    return add(h, scale(delta, alpha));
}

AffineMap act_fit(const Tensor& source, const Tensor& target) {
    if (source.ndim() != 2 || source.shape() != target.shape()) {
        throw DimensionError("act_fit: source " + shape_str(source.shape()) + " and target " +
                             shape_str(target.shape()) + " must both be [m, d]");
    }
    const std::size_t m = source.dim(0), d = source.dim(1);
    if (m < 2) throw DataError("act_fit: need at least 2 samples");
    std::vector<double> w(d), b(d), s(m), t(m);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < m; ++i) {
            s[i] = source.data()[i * d + j];
            t[i] = target.data()[i * d + j];
        }
        std::sort(s.begin(), s.end());
        std::sort(t.begin(), t.end());
        double ms = 0.0, mt = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            ms += s[i];
            mt += t[i];
        }
        ms /= static_cast<double>(m);
        mt /= static_cast<double>(m);
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            sxx += (s[i] - ms) * (s[i] - ms);
            sxy += (s[i] - ms) * (t[i] - mt);
        }
        if (sxx <= 1e-24 * static_cast<double>(m) * std::max(1.0, ms * ms)) {
            w[j] = 1.0;
            b[j] = mt - ms;
        } else {
            w[j] = sxy / sxx;
            b[j] = mt - w[j] * ms;
        }
    }
    return {Tensor({d}, std::move(w)), Tensor({d}, std::move(b))};
}

Tensor act_steer(const Tensor& h, const AffineMap& map, double lambda) {
    if (lambda == 0.0) return h;
    Tensor f = add(mul(h, map.w), map.b);
    if (lambda == 1.0) return f;
    return add(h, scale(sub(f, h), lambda));
}

void BaselineSet::write(io::ArrayFile& file) const {
    file.header["kind"] = "baselines";
    std::size_t i = 0;
    for (const auto& [c, delta] : diffmean) {
        const auto key = "diffmean." + std::to_string(i++);
        file.header[key + ".concept"] = c;
        file.put(key, delta);
    }
    i = 0;
    for (const auto& [c, m] : act) {
        const auto key = "act." + std::to_string(i++);
        file.header[key + ".concept"] = c;
        file.put(key + ".w", m.w);
        file.put(key + ".b", m.b);
    }
    file.header["diffmean.count"] = std::to_string(diffmean.size());
    file.header["act.count"] = std::to_string(act.size());
}

BaselineSet BaselineSet::read(const io::ArrayFile& file) {
    if (!file.header.count("kind") || file.header.at("kind") != "baselines") {
        throw ConfigError("file does not hold fitted baselines");
    }
    BaselineSet set;
    const auto nd = io::parse_int(file.header_value("diffmean.count"), "diffmean.count");
    for (long long i = 0; i < nd; ++i) {
        const auto key = "diffmean." + std::to_string(i);
        set.diffmean[file.header_value(key + ".concept")] = file.get(key).clone();
    }
    const auto na = io::parse_int(file.header_value("act.count"), "act.count");
    for (long long i = 0; i < na; ++i) {
        const auto key = "act." + std::to_string(i);
        set.act[file.header_value(key + ".concept")] = {file.get(key + ".w").clone(), file.get(key + ".b").clone()};
    }
    return set;
}

void BaselineSet::save(const std::filesystem::path& path) const {
    io::ArrayFile file;
    write(file);
    io::write_array_file(path, file);
}

BaselineSet BaselineSet::load(const std::filesystem::path& path) { return read(io::read_array_file(path)); }

}  // namespace flas::baselines
