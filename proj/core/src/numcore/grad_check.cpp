#include "flas/numcore/grad_check.hpp"

#include "flas/errors.hpp"
#include "flas/numcore/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace flas {

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& opts) {
    std::vector<bool> had_grad;
    for (auto& t : inputs) {
        had_grad.push_back(t.requires_grad());
        t.set_requires_grad(true);
        t.zero_grad();
    }
    {
        Tape tape;
        Tensor y = f();
        if (y.numel() != 1) throw UsageError("grad_check: function must return a scalar");
        tape.backward(y);
    }
    std::vector<std::vector<double>> analytic;
    for (auto& t : inputs) {
        analytic.emplace_back(t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                           : std::vector<double>(t.numel(), 0.0));
    }

    auto eval = [&] {
        NoGradGuard guard;
        return f().item();
    };

    GradCheckReport report;
    std::mt19937_64 rng(opts.seed);
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        auto& t = inputs[ti];
        std::vector<std::size_t> coords(t.numel());
        std::iota(coords.begin(), coords.end(), 0);
        if (coords.size() > opts.max_coords) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(opts.max_coords);
        }
        auto data = t.mutable_data();
        for (auto c : coords) {
            const double orig = data[c];
            data[c] = orig + opts.step;
            const double fp = eval();
            data[c] = orig - opts.step;
            const double fm = eval();
            data[c] = orig;
            const double numeric = (fp - fm) / (2.0 * opts.step);
            const double a = analytic[ti][c];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double rel = std::abs(a - numeric) / denom;
            ++report.coords_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        inputs[i].zero_grad();
        inputs[i].set_requires_grad(had_grad[i]);
    }
    return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           const GradCheckOptions& opts) {
    Tensor leaf = x.detach();
    return grad_check([&] { return f(leaf); }, {leaf}, opts);
}

}  // namespace flas
