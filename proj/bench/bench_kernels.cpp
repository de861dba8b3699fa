// Parallel kernels against the serial loop references.

#include <benchmark/benchmark.h>

#include "aedes/kernels.hpp"
#include "aedes/layers.hpp"
#include "aedes/reference.hpp"
#include "aedes/rng.hpp"

namespace {

using namespace aedes;

Tensor random_tensor(const Shape& shape, std::uint64_t seed) {
    Tensor t(shape);
    Rng rng(seed);
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

// (channels in, channels out, spatial size) triples from the reference-16 stack at 64x64.
void conv_args(benchmark::internal::Benchmark* b) {
    b->Args({3, 16, 64})->Args({16, 32, 32})->Args({32, 64, 16})->Args({64, 128, 8});
}

void BM_ConvParallel(benchmark::State& state) {
    const auto cin = static_cast<std::size_t>(state.range(0)), cout = static_cast<std::size_t>(state.range(1));
    const auto size = static_cast<std::size_t>(state.range(2));
    nn::Conv2D<float> conv(nn::LayerSpec::conv2d(cout, 3), cin);
    Rng rng(1);
    nn::he_uniform_init(conv, rng);
    const auto x = random_tensor({8, size, size, cin}, 2);
    for (auto _ : state) benchmark::DoNotOptimize(conv.infer(x));
}
BENCHMARK(BM_ConvParallel)->Apply(conv_args)->Unit(benchmark::kMillisecond);

void BM_ConvReference(benchmark::State& state) {
    const auto cin = static_cast<std::size_t>(state.range(0)), cout = static_cast<std::size_t>(state.range(1));
    const auto size = static_cast<std::size_t>(state.range(2));
    const auto w = random_tensor({cout, cin, 3, 3}, 1);
    const Tensor bias({cout});
    const auto x = random_tensor({8, size, size, cin}, 2);
    for (auto _ : state) benchmark::DoNotOptimize(reference::conv2d(x, w, bias, 1, kernels::Padding::same));
}
BENCHMARK(BM_ConvReference)->Apply(conv_args)->Unit(benchmark::kMillisecond);

void BM_PoolParallel(benchmark::State& state) {
    const auto size = static_cast<std::size_t>(state.range(0));
    const auto x = random_tensor({8, size, size, 32}, 3);
    const auto g = kernels::pool_geometry(x.shape(), 2, 2);
    std::vector<std::size_t> argmax;
    for (auto _ : state) benchmark::DoNotOptimize(kernels::maxpool(x, g, argmax));
}
BENCHMARK(BM_PoolParallel)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_PoolReference(benchmark::State& state) {
    const auto size = static_cast<std::size_t>(state.range(0));
    const auto x = random_tensor({8, size, size, 32}, 3);
    std::vector<std::size_t> argmax;
    for (auto _ : state) benchmark::DoNotOptimize(reference::maxpool(x, 2, 2, &argmax));
}
BENCHMARK(BM_PoolReference)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_DenseParallel(benchmark::State& state) {
    const auto in = static_cast<std::size_t>(state.range(0));
    nn::Dense<float> dense(nn::LayerSpec::dense(128), in);
    Rng rng(4);
    nn::he_uniform_init(dense, rng);
    const auto x = random_tensor({32, in}, 5);
    for (auto _ : state) benchmark::DoNotOptimize(dense.infer(x));
}
BENCHMARK(BM_DenseParallel)->Arg(512)->Arg(8192)->Unit(benchmark::kMicrosecond);

void BM_DenseReference(benchmark::State& state) {
    const auto in = static_cast<std::size_t>(state.range(0));
    const auto w = random_tensor({in, 128}, 4);
    const Tensor bias({128});
    const auto x = random_tensor({32, in}, 5);
    for (auto _ : state) benchmark::DoNotOptimize(reference::dense(x, w, bias));
}
BENCHMARK(BM_DenseReference)->Arg(512)->Arg(8192)->Unit(benchmark::kMicrosecond);

void BM_MatmulParallel(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_tensor({n, n}, 6), b = random_tensor({n, n}, 7);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}
BENCHMARK(BM_MatmulParallel)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_MatmulReference(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_tensor({n, n}, 6), b = random_tensor({n, n}, 7);
    for (auto _ : state) benchmark::DoNotOptimize(reference::matmul(a, b));
}
BENCHMARK(BM_MatmulReference)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
