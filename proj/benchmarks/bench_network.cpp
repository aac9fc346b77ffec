#include <benchmark/benchmark.h>

#include "mol/network.hpp"
#include "mol/rng.hpp"

namespace {

using namespace mol;

NetworkConfig bench_config(int channels) {
    NetworkConfig cfg;
    cfg.num_layers = 5;
    cfg.channels = channels;
    cfg.probe_height = 32;
    cfg.probe_width = 32;
    return cfg;
}

void bm_h_forward(benchmark::State& state) {
    const NetworkWeights w = init_weights(bench_config(static_cast<int>(state.range(0))), 3);
    const ComplexImage x = random_gaussian_image(32, 32, 11);
    for (auto _ : state) {
        ComplexImage y = h_forward(w, x);
        benchmark::DoNotOptimize(y.data().data());
    }
}
BENCHMARK(bm_h_forward)->Arg(16)->Arg(32)->Arg(64);

void bm_h_vjp_params(benchmark::State& state) {
    const NetworkWeights w = init_weights(bench_config(static_cast<int>(state.range(0))), 3);
    const ComplexImage x = random_gaussian_image(32, 32, 11);
    const ComplexImage v = random_gaussian_image(32, 32, 13);
    for (auto _ : state) {
        WeightGradient g = h_vjp_params(w, x, v);
        benchmark::DoNotOptimize(g.kernels.data());
    }
}
BENCHMARK(bm_h_vjp_params)->Arg(16)->Arg(32);

void bm_spectral_normalize(benchmark::State& state) {
    NetworkWeights w = init_weights(bench_config(32), 3);
    for (auto _ : state) {
        NetworkWeights out = spectral_normalize(w, 0.9, 20);
        benchmark::DoNotOptimize(out.layers.data());
    }
}
BENCHMARK(bm_spectral_normalize);

}  // namespace

BENCHMARK_MAIN();
