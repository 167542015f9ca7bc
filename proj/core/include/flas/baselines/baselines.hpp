#pragma once

#include "flas/io/container.hpp"
#include "flas/numcore/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace flas::baselines {

// f(h) = w * h + b per channel.
struct AffineMap {
    Tensor w;  // [d]
    Tensor b;  // [d]
};

// [d] stays as is; [seq, d] is averaged over rows.
Tensor mean_pool(const Tensor& activations);

// delta = mean(pos) - mean(neg) over mean-pooled examples.
Tensor diffmean_fit(const std::vector<Tensor>& pos, const std::vector<Tensor>& neg);

// h + alpha * delta at every position.
Tensor additive_steer(const Tensor& h, const Tensor& delta, double alpha);

// Per channel: sort both sample columns to form the 1-D optimal-transport
// coupling, then least-squares fit target ~ w * source + b. A channel whose
// source has no spread gets w = 1 and b = mean(target) - mean(source).
AffineMap act_fit(const Tensor& source, const Tensor& target);

// h + lambda * (f(h) - h).
Tensor act_steer(const Tensor& h, const AffineMap& map, double lambda);

// Fitted baselines for a set of concepts, keyed by concept text.
struct BaselineSet {
    std::map<std::string, Tensor> diffmean;
    std::map<std::string, AffineMap> act;

    void write(io::ArrayFile& file) const;
    static BaselineSet read(const io::ArrayFile& file);
    void save(const std::filesystem::path& path) const;
    static BaselineSet load(const std::filesystem::path& path);
};

}  // namespace flas::baselines
