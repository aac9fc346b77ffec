#include <benchmark/benchmark.h>

#include "mol/linop.hpp"
#include "mol/network.hpp"
#include "mol/rng.hpp"
#include "mol/solver.hpp"

namespace {

using namespace mol;

struct Fixture {
    NetworkWeights weights;
    LinearOperatorSpec op;
    Measurement b;
    SolverConfig cfg;

    explicit Fixture(int n, int anderson)
        : weights(make_weights(n)), op(make_op(n)), b(apply_forward(op, random_gaussian_image(n, n, 5))) {
        cfg.lambda = 2.0;
        cfg.m = 0.1;
        cfg.tol_fwd = 1e-6;
        cfg.anderson_depth = anderson;
    }

    static NetworkWeights make_weights(int n) {
        NetworkConfig c;
        c.num_layers = 3;
        c.channels = 16;
        c.probe_height = n;
        c.probe_width = n;
        NetworkWeights w = init_weights(c, 3);
        return spectral_normalize(w, 0.9, 50);
    }

    static LinearOperatorSpec make_op(int n) {
        return LinearOperatorSpec::masked_fourier(make_mask(n, n, 4.0, 3.0, 7));
    }
};

void bm_solve_fixed_point(benchmark::State& state) {
    Fixture f(32, static_cast<int>(state.range(0)));
    for (auto _ : state) {
        FixedPointResult r = solve_fixed_point(f.weights, f.op, f.b, f.cfg);
        benchmark::DoNotOptimize(r.nfe);
        state.counters["nfe"] = r.nfe;
    }
}
BENCHMARK(bm_solve_fixed_point)->Arg(0)->Arg(3)->Arg(5);

void bm_deq_backward(benchmark::State& state) {
    Fixture f(32, 0);
    const FixedPointResult fp = solve_fixed_point(f.weights, f.op, f.b, f.cfg);
    const ComplexImage cot = random_gaussian_image(32, 32, 9);
    for (auto _ : state) {
        BackwardResult bw = deq_backward(f.weights, f.op, f.b, fp.solution, cot, f.cfg);
        benchmark::DoNotOptimize(bw.nbe);
    }
}
BENCHMARK(bm_deq_backward);

}  // namespace

BENCHMARK_MAIN();
