// SPDX-License-Identifier: Apache-2.0
// Serial vs OpenMP matmul kernels, plus one ELBO step of a bandit-sized network.
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "bayesarch/kernels.hpp"
#include "bayesarch/training.hpp"

using namespace bayesarch;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

template <auto Kernel>
void BM_matmul(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const auto k = static_cast<std::size_t>(state.range(1));
    const auto n = static_cast<std::size_t>(state.range(2));
    const auto a = random_vec(m * k, 1);
    const auto b = random_vec(k * n, 2);
    std::vector<double> out(m * n);
    for (auto _ : state) {
        std::fill(out.begin(), out.end(), 0.0);
        Kernel(a, b, out, m, k, n);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * k * n));
}

void shapes(benchmark::internal::Benchmark* b) {
    b->Args({64, 119, 100})->Args({256, 256, 256})->Args({512, 100, 100});
}

BENCHMARK(BM_matmul<kernels::serial::matmul>)->Name("matmul/serial")->Apply(shapes);
BENCHMARK(BM_matmul<kernels::parallel::matmul>)->Name("matmul/parallel")->Apply(shapes);

void BM_elbo_step(benchmark::State& state) {
    NetworkSpec spec;
    const auto mode = state.range(0) != 0 ? WeightMode::gaussian : WeightMode::point;
    LayerSpec a;
    a.dense = {119, 100, Activation::relu, mode};
    LayerSpec b;
    b.dense = {100, 100, Activation::relu, mode};
    LayerSpec c;
    c.dense = {100, 1, Activation::identity, mode};
    spec.layers = {a, b, c};
    const Network net(spec, {});
    const Tensor x(Shape{64, 119}, random_vec(64 * 119, 4));
    const Tensor y(Shape{64, 1}, random_vec(64, 5));
    dist::Rng noise_rng(6);
    RandomNoise noise(noise_rng);
    for (auto _ : state) benchmark::DoNotOptimize(train::elbo_step(net, x, y, 4096, noise));
}

BENCHMARK(BM_elbo_step)->Arg(0)->Arg(1)->ArgNames({"gaussian"})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
