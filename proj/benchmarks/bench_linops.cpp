#include <benchmark/benchmark.h>

#include "mol/linop.hpp"
#include "mol/rng.hpp"

namespace {

using namespace mol;

void bm_forward_masked_fourier(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const MaskSpec mask = make_mask(n, n, 4.0, 3.0, 7);
    const LinearOperatorSpec op = LinearOperatorSpec::masked_fourier(mask);
    const ComplexImage x = random_gaussian_image(n, n, 11);
    for (auto _ : state) {
        Measurement y = apply_forward(op, x);
        benchmark::DoNotOptimize(y.data.data());
    }
}
BENCHMARK(bm_forward_masked_fourier)->Arg(32)->Arg(64)->Arg(128);

void bm_gram_multi_coil(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const MaskSpec mask = make_mask(n, n, 4.0, 3.0, 7);
    const CoilSet coils = make_synthetic_coils(4, n, n, 13);
    const LinearOperatorSpec op = LinearOperatorSpec::multi_coil_masked_fourier(mask, coils);
    const ComplexImage x = random_gaussian_image(n, n, 11);
    for (auto _ : state) {
        ComplexImage y = gram(op, x);
        benchmark::DoNotOptimize(y.data().data());
    }
}
BENCHMARK(bm_gram_multi_coil)->Arg(32)->Arg(64);

void bm_solve_q_dense(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const LinearOperatorSpec op = LinearOperatorSpec::dense_gaussian(n * n / 2, n, n, 17);
    const ComplexImage y = random_gaussian_image(n, n, 11);
    for (auto _ : state) {
        ComplexImage z = solve_q(op, y, 0.05, 2.0);
        benchmark::DoNotOptimize(z.data().data());
    }
}
BENCHMARK(bm_solve_q_dense)->Arg(16)->Arg(24);

}  // namespace

BENCHMARK_MAIN();
