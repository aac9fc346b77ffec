#pragma once

// shared fixtures: hand-built networks with known analytic behavior, a
// temporary-directory guard, and small random problem builders

#include <filesystem>
#include <random>
#include <string>

#include "mol/linop.hpp"
#include "mol/network.hpp"
#include "mol/rng.hpp"

namespace testutil {

using mol::ComplexImage;

struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("mol_test_" + tag + "_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

// single 1x1 layer acting channelwise: H([re, im]) = K * [re, im] + bias
inline mol::NetworkWeights linear_net(const Eigen::Matrix2d& k,
                                      const Eigen::Vector2d& bias = Eigen::Vector2d::Zero()) {
    mol::NetworkWeights w;
    w.config.num_layers = 2;  // config floor; the hand-built stack has one layer
    w.config.channels = 2;
    w.config.kernel_size = 1;
    mol::ConvLayer layer;
    layer.in_channels = 2;
    layer.out_channels = 2;
    layer.kernel_size = 1;
    layer.kernel = k;
    layer.bias = bias;
    w.layers.push_back(layer);
    return w;
}

// H(x) = c * x on complex images
inline mol::NetworkWeights scalar_net(double c) {
    return linear_net(Eigen::Matrix2d{{c, 0.0}, {0.0, c}});
}

inline mol::NetworkWeights zero_net() { return scalar_net(0.0); }

inline mol::NetworkWeights small_net(int layers, int channels, int k, int probe,
                                     std::uint64_t seed) {
    mol::NetworkConfig cfg;
    cfg.num_layers = layers;
    cfg.channels = channels;
    cfg.kernel_size = k;
    cfg.probe_height = probe;
    cfg.probe_width = probe;
    return mol::init_weights(cfg, seed);
}

inline mol::MaskSpec empty_mask(int h, int w) {
    mol::MaskSpec m;
    m.height = h;
    m.width = w;
    m.pattern.assign(static_cast<std::size_t>(h) * w, 0);
    m.acceleration = 0.0;
    return m;
}

inline mol::MaskSpec full_mask(int h, int w) {
    mol::MaskSpec m;
    m.height = h;
    m.width = w;
    m.pattern.assign(static_cast<std::size_t>(h) * w, 1);
    m.acceleration = 1.0;
    return m;
}

}  // namespace testutil
