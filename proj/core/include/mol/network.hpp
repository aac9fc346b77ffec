#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mol/image.hpp"

namespace mol {

enum class Activation { ReLU, LeakyReLU };

// H sees complex images as two real channels (re, im). Hidden layers all use
// `channels` feature maps; the probe size is the image size at which layer
// spectral norms are measured.
struct NetworkConfig {
    int num_layers = 5;
    int channels = 64;
    int kernel_size = 3;
    Activation activation = Activation::ReLU;
    double leaky_slope = 0.01;
    int probe_height = 32;
    int probe_width = 32;
};

void validate_config(const NetworkConfig& cfg);

// Kernel layout: row = output channel, column = in_ch*k*k + ky*k + kx,
// equivalent to a 4-index (out, in, ky, kx) array.
struct ConvLayer {
    int in_channels = 0;
    int out_channels = 0;
    int kernel_size = 0;
    Eigen::MatrixXd kernel;
    Eigen::VectorXd bias;
};

struct NetworkWeights {
    NetworkConfig config;
    std::vector<ConvLayer> layers;
    // warm-start vectors for per-layer power iteration, sized to the probe;
    // empty until the first spectral estimate touches the layer
    std::vector<Eigen::VectorXd> spectral_state;

    int num_layers() const { return static_cast<int>(layers.size()); }
    bool all_finite() const;
};

struct WeightGradient {
    std::vector<Eigen::MatrixXd> kernels;
    std::vector<Eigen::VectorXd> biases;
};

WeightGradient zero_gradient(const NetworkWeights& w);
void grad_axpy(double a, const WeightGradient& g, WeightGradient& acc);
void grad_scale(WeightGradient& g, double a);
double grad_dot(const WeightGradient& a, const WeightGradient& b);
double grad_norm(const WeightGradient& g);

NetworkWeights init_weights(const NetworkConfig& cfg, std::uint64_t seed);

ComplexImage h_forward(const NetworkWeights& w, const ComplexImage& x);

// (dH/dx)^T v at x; activation subgradient at exact kinks is 0
ComplexImage h_vjp_input(const NetworkWeights& w, const ComplexImage& x, const ComplexImage& v);

// (dH/dw)^T v at (w, x)
WeightGradient h_vjp_params(const NetworkWeights& w, const ComplexImage& x,
                            const ComplexImage& v);

// Power-iteration estimate of one layer's spectral norm at the probe size.
// Pure: does not touch w.spectral_state.
double layer_spectral_norm(const NetworkWeights& w, int layer, int power_iters,
                           std::uint64_t seed = 0);

// Rescales each layer to spectral norm at most target^(1/num_layers) and
// returns the new weights; power vectors are warm-started from
// w.spectral_state and persisted into the result.
NetworkWeights spectral_normalize(const NetworkWeights& w, double target, int power_iters);

// Product of per-layer spectral-norm estimates (activation slope <= 1).
double global_lipschitz_bound(const NetworkWeights& w, int power_iters = 50,
                              std::uint64_t seed = 0);

// MOLNET v1 checkpoint; bit-exact round trip. spectral_state is not stored.
void save_network(const std::string& path, const NetworkWeights& w);
NetworkWeights load_network(const std::string& path);

}  // namespace mol
