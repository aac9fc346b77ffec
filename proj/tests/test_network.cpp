#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mol/network.hpp"
#include "mol/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mol;

TEST_CASE("config validation") {
    NetworkConfig cfg;
    CHECK_NOTHROW(validate_config(cfg));

    NetworkConfig bad = cfg;
    bad.num_layers = 1;
    CHECK_THROWS_AS(validate_config(bad), ParameterError);
    bad = cfg;
    bad.kernel_size = 4;
    CHECK_THROWS_AS(validate_config(bad), ParameterError);
    bad = cfg;
    bad.channels = 0;
    CHECK_THROWS_AS(validate_config(bad), ParameterError);
    bad = cfg;
    bad.activation = Activation::LeakyReLU;
    bad.leaky_slope = 1.5;
    CHECK_THROWS_AS(validate_config(bad), ParameterError);
}

TEST_CASE("init_weights determinism and shape") {
    NetworkConfig cfg;
    cfg.num_layers = 5;
    cfg.channels = 8;
    cfg.probe_height = 16;
    cfg.probe_width = 16;
    NetworkWeights a = init_weights(cfg, 77);
    NetworkWeights b = init_weights(cfg, 77);
    REQUIRE(a.layers.size() == 5);
    CHECK(a.layers.front().in_channels == 2);
    CHECK(a.layers.back().out_channels == 2);
    for (std::size_t l = 0; l < 5; ++l) {
        CHECK(a.layers[l].kernel == b.layers[l].kernel);
        CHECK(a.layers[l].bias == b.layers[l].bias);
    }
    NetworkWeights c = init_weights(cfg, 78);
    CHECK(a.layers[0].kernel != c.layers[0].kernel);

    CHECK(global_lipschitz_bound(a, 100, 1) <= 1.0 + 1e-4);
}

TEST_CASE("h_forward trivial cases") {
    ComplexImage x = random_gaussian_image(6, 6, 3);

    ComplexImage zero_out = h_forward(testutil::zero_net(), x);
    CHECK(zero_out.norm() == 0.0);

    ComplexImage cx = h_forward(testutil::scalar_net(0.75), x);
    ComplexImage expect(x);
    scale(expect, cdouble(0.75, 0.0));
    CHECK(dist(cx, expect) < 1e-14 * x.norm());

    // general 1x1 channel mix applies the 2x2 real matrix pointwise
    Eigen::Matrix2d k{{0.3, -0.2}, {0.5, 0.1}};
    ComplexImage mixed = h_forward(testutil::linear_net(k), x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double re = k(0, 0) * x[i].real() + k(0, 1) * x[i].imag();
        const double im = k(1, 0) * x[i].real() + k(1, 1) * x[i].imag();
        CHECK(std::abs(mixed[i] - cdouble(re, im)) < 1e-14);
    }
}

TEST_CASE("h_forward matches the naive convolution oracle") {
    for (int trial = 0; trial < 3; ++trial) {
        NetworkWeights w = testutil::small_net(3, 5, 3, 8, 400 + trial);
        ComplexImage x = random_gaussian_image(8, 8, 500 + trial);
        ComplexImage lib = h_forward(w, x);
        ComplexImage ref = oracle::naive_h_forward(w, x);
        CHECK(dist(lib, ref) < 1e-12 * std::max(ref.norm(), 1.0));
    }

    NetworkConfig leaky;
    leaky.num_layers = 3;
    leaky.channels = 4;
    leaky.activation = Activation::LeakyReLU;
    leaky.leaky_slope = 0.2;
    leaky.probe_height = 8;
    leaky.probe_width = 8;
    NetworkWeights w = init_weights(leaky, 9);
    ComplexImage x = random_gaussian_image(8, 8, 10);
    CHECK(dist(h_forward(w, x), oracle::naive_h_forward(w, x)) < 1e-12);
}

TEST_CASE("h_forward determinism") {
    NetworkWeights w = testutil::small_net(3, 6, 3, 8, 11);
    ComplexImage x = random_gaussian_image(8, 8, 12);
    ComplexImage a = h_forward(w, x);
    ComplexImage b = h_forward(w, x);
    CHECK(dist(a, b) == 0.0);
}

TEST_CASE("h_vjp_input basics and finite differences") {
    ComplexImage x = random_gaussian_image(8, 8, 20);
    NetworkWeights w = testutil::small_net(3, 5, 3, 8, 21);

    ComplexImage zero(8, 8);
    CHECK(h_vjp_input(w, x, zero).norm() == 0.0);

    // linear single layer: vjp is K^T v pointwise, independent of x
    Eigen::Matrix2d k{{0.4, -0.7}, {0.2, 0.9}};
    NetworkWeights lin = testutil::linear_net(k);
    ComplexImage v = random_gaussian_image(8, 8, 22);
    ComplexImage jv = h_vjp_input(lin, x, v);
    ComplexImage jv2 = h_vjp_input(lin, random_gaussian_image(8, 8, 23), v);
    CHECK(dist(jv, jv2) == 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double re = k(0, 0) * v[i].real() + k(1, 0) * v[i].imag();
        const double im = k(0, 1) * v[i].real() + k(1, 1) * v[i].imag();
        CHECK(std::abs(jv[i] - cdouble(re, im)) < 1e-14);
    }

    // <v, J delta> by central differences vs <vjp_input(v), delta>
    ComplexImage delta = random_gaussian_image(8, 8, 24);
    const double h = 1e-6;
    ComplexImage xp(x), xm(x);
    axpy(cdouble(h, 0.0), delta, xp);
    axpy(cdouble(-h, 0.0), delta, xm);
    const ComplexImage fp = h_forward(w, xp);
    const ComplexImage fm = h_forward(w, xm);
    ComplexImage jd(fp);
    axpy(cdouble(-1.0, 0.0), fm, jd);
    scale(jd, cdouble(1.0 / (2.0 * h), 0.0));
    const double lhs = dot_real(v, jd);
    const double rhs = dot_real(h_vjp_input(w, x, v), delta);
    CHECK(std::abs(lhs - rhs) / std::max(std::abs(lhs), 1.0) < 1e-5);
}

TEST_CASE("h_vjp_params basics and finite differences") {
    ComplexImage x = random_gaussian_image(8, 8, 30);
    NetworkWeights w = testutil::small_net(3, 4, 3, 8, 31);

    ComplexImage zero(8, 8);
    WeightGradient zg = h_vjp_params(w, x, zero);
    CHECK(grad_norm(zg) == 0.0);

    // single-layer bias gradient is the per-channel spatial sum of v
    NetworkWeights lin = testutil::scalar_net(0.5);
    ComplexImage v = random_gaussian_image(8, 8, 32);
    WeightGradient g = h_vjp_params(lin, x, v);
    double sum_re = 0.0, sum_im = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        sum_re += v[i].real();
        sum_im += v[i].imag();
    }
    CHECK(g.biases[0](0) == doctest::Approx(sum_re).epsilon(1e-12));
    CHECK(g.biases[0](1) == doctest::Approx(sum_im).epsilon(1e-12));

    // central finite differences of <v, H(x)> per parameter
    WeightGradient full = h_vjp_params(w, x, v);
    std::mt19937_64 rng(33);
    for (int s = 0; s < 12; ++s) {
        const std::size_t l =
            std::uniform_int_distribution<std::size_t>(0, w.layers.size() - 1)(rng);
        const bool bias = std::uniform_int_distribution<int>(0, 3)(rng) == 0;
        NetworkWeights wp = w, wm = w;
        const double h = 1e-6;
        double analytic = 0.0;
        if (bias) {
            const Eigen::Index i =
                std::uniform_int_distribution<Eigen::Index>(0, w.layers[l].bias.size() - 1)(rng);
            wp.layers[l].bias(i) += h;
            wm.layers[l].bias(i) -= h;
            analytic = full.biases[l](i);
        } else {
            const Eigen::Index i = std::uniform_int_distribution<Eigen::Index>(
                0, w.layers[l].kernel.size() - 1)(rng);
            wp.layers[l].kernel.data()[i] += h;
            wm.layers[l].kernel.data()[i] -= h;
            analytic = full.kernels[l].data()[i];
        }
        const double fd =
            (dot_real(v, h_forward(wp, x)) - dot_real(v, h_forward(wm, x))) / (2.0 * h);
        CHECK(std::abs(fd - analytic) / std::max(std::abs(fd), 1.0) < 1e-5);
    }
}

TEST_CASE("spectral normalization") {
    // single layer of known norm 2 scaled by half to meet target 1
    NetworkWeights lin = testutil::scalar_net(2.0);
    NetworkWeights snorm = spectral_normalize(lin, 1.0, 100);
    CHECK(snorm.layers[0].kernel(0, 0) == doctest::Approx(0.5 * 2.0).epsilon(1e-6));
    CHECK(layer_spectral_norm(snorm, 0, 100) == doctest::Approx(1.0).epsilon(1e-6));

    // already compliant weights pass through unchanged
    NetworkWeights again = spectral_normalize(snorm, 1.0, 100);
    for (std::size_t l = 0; l < snorm.layers.size(); ++l) {
        CHECK((again.layers[l].kernel - snorm.layers[l].kernel).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((again.layers[l].bias - snorm.layers[l].bias).cwiseAbs().maxCoeff() < 1e-12);
    }

    // 5-layer net: global bound meets the target after normalization
    NetworkWeights deep = testutil::small_net(5, 6, 3, 12, 44);
    for (ConvLayer& l : deep.layers) l.kernel *= 1.7;
    const double target = 0.8;
    NetworkWeights constrained = spectral_normalize(deep, target, 80);
    CHECK(global_lipschitz_bound(constrained, 100, 2) <= target + 1e-3);
    const double per_layer = std::pow(target, 1.0 / 5.0);
    for (std::size_t l = 0; l < 5; ++l)
        CHECK(layer_spectral_norm(constrained, l, 100) <= per_layer + 1e-4);
}

TEST_CASE("global lipschitz bound") {
    CHECK(global_lipschitz_bound(testutil::zero_net(), 50, 1) == 0.0);

    // two linear layers with norms 0.5 and 0.8 compose to 0.4
    NetworkWeights two;
    two.config.num_layers = 2;
    two.config.channels = 2;
    two.config.kernel_size = 1;
    ConvLayer l0;
    l0.in_channels = 2;
    l0.out_channels = 2;
    l0.kernel_size = 1;
    l0.kernel = 0.5 * Eigen::Matrix2d::Identity();
    l0.bias = Eigen::Vector2d::Zero();
    ConvLayer l1 = l0;
    l1.kernel = 0.8 * Eigen::Matrix2d::Identity();
    two.layers = {l0, l1};
    CHECK(global_lipschitz_bound(two, 100, 3) == doctest::Approx(0.4).epsilon(1e-9));
}

TEST_CASE("checkpoint round trip is bit exact") {
    testutil::TempDir dir("net");
    NetworkConfig cfg;
    cfg.num_layers = 3;
    cfg.channels = 5;
    cfg.activation = Activation::LeakyReLU;
    cfg.leaky_slope = 0.11;
    cfg.probe_height = 10;
    cfg.probe_width = 12;
    NetworkWeights w = init_weights(cfg, 55);
    save_network(dir.file("w.molnet"), w);
    NetworkWeights r = load_network(dir.file("w.molnet"));

    REQUIRE(r.layers.size() == w.layers.size());
    CHECK(r.config.activation == Activation::LeakyReLU);
    CHECK(r.config.leaky_slope == 0.11);
    CHECK(r.config.channels == 5);
    CHECK(r.config.probe_height == 10);
    CHECK(r.config.probe_width == 12);
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        CHECK(r.layers[l].kernel == w.layers[l].kernel);
        CHECK(r.layers[l].bias == w.layers[l].bias);
    }

    ComplexImage x = random_gaussian_image(10, 12, 4);
    CHECK(dist(h_forward(w, x), h_forward(r, x)) == 0.0);

    CHECK_THROWS_AS(load_network(dir.file("missing.molnet")), IoError);
    {
        std::ofstream junk(dir.file("junk.molnet"), std::ios::binary);
        junk << "MOLNET v1 but truncated";
    }
    CHECK_THROWS_AS(load_network(dir.file("junk.molnet")), IoError);
}

TEST_CASE("shape mismatches raise dimension errors") {
    NetworkWeights w = testutil::small_net(2, 4, 3, 8, 66);
    ComplexImage x = random_gaussian_image(8, 8, 67);
    ComplexImage v = random_gaussian_image(7, 8, 68);
    CHECK_THROWS_AS(h_vjp_input(w, x, v), DimensionError);
    CHECK_THROWS_AS(h_vjp_params(w, x, v), DimensionError);

    NetworkWeights broken = w;
    broken.layers[0].out_channels += 1;
    CHECK_THROWS_AS(h_forward(broken, x), DimensionError);
}
