#include "flas/base_lm/generate.hpp"
#include "flas/base_lm/model.hpp"
#include "flas/baselines/baselines.hpp"
#include "flas/flow/steer.hpp"
#include "flas/numcore/ops.hpp"
#include "flas/numcore/tape.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace flas;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    std::vector<double> v(n);
    for (auto& x : v) x = nd(rng);
    return Tensor(std::move(shape), std::move(v));
}

void BM_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_tensor({n, n}, 1);
    const auto b = random_tensor({n, n}, 2);
    NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_matmul_backward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        auto a = random_tensor({n, n}, 1);
        a.set_requires_grad(true);
        const auto b = random_tensor({n, n}, 2);
        Tape tape;
        auto loss = sum(matmul(a, b));
        tape.backward(loss);
        benchmark::DoNotOptimize(a.grad());
    }
}
BENCHMARK(BM_matmul_backward)->Arg(64);

void BM_softmax(benchmark::State& state) {
    const auto x = random_tensor({64, 64}, 3);
    NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(softmax_lastdim(x));
}
BENCHMARK(BM_softmax);

void BM_additive_steer(benchmark::State& state) {
    const auto h = random_tensor({32, 64}, 4);
    const auto delta = random_tensor({64}, 5);
    for (auto _ : state) benchmark::DoNotOptimize(baselines::additive_steer(h, delta, 1.0));
}
BENCHMARK(BM_additive_steer);

struct Models {
    lm::LanguageModel base{lm::LMConfig{}, 0};
    flow::FlowModel flow{flow::FlowConfig{}, base, 1};
    flow::ConceptCache cache = flow::concept_cache_for(flow, base, "insert @ every four characters");
};

Models& models() {
    static Models m;
    return m;
}

// Full-sequence steering at horizon T = 2 with the default N.
void BM_flow_steer(benchmark::State& state) {
    auto& m = models();
    const auto h = random_tensor({static_cast<std::size_t>(state.range(0)), m.base.config().d_model}, 6);
    NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(flow::steer(m.flow, h, m.cache, 2.0));
}
BENCHMARK(BM_flow_steer)->Arg(1)->Arg(16)->Arg(64);

void BM_generate(benchmark::State& state) {
    auto& m = models();
    const bool steered = state.range(0) != 0;
    const auto prompt = lm::format_prompt("abcd");
    lm::GenerationOptions opts;
    opts.max_new = 16;
    opts.stop_at_eos = false;
    for (auto _ : state) {
        flow::FlowSteerer s(m.flow, m.cache, 2.0);
        benchmark::DoNotOptimize(lm::generate_steered(m.base, prompt, steered ? s.hook() : lm::Hook{}, opts));
    }
    state.SetLabel(steered ? "flas" : "base");
}
BENCHMARK(BM_generate)->Arg(0)->Arg(1);

}  // namespace

BENCHMARK_MAIN();
