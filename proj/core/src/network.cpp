#include "mol/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "binio.hpp"
#include "mol/errors.hpp"
#include "mol/rng.hpp"

namespace mol {

void validate_config(const NetworkConfig& cfg) {
    if (cfg.num_layers < 2) throw ParameterError("network config: num_layers must be >= 2");
    if (cfg.channels < 1) throw ParameterError("network config: channels must be >= 1");
    if (cfg.kernel_size < 1 || cfg.kernel_size % 2 == 0)
        throw ParameterError("network config: kernel_size must be odd and positive");
    if (cfg.activation == Activation::LeakyReLU &&
        (cfg.leaky_slope < 0.0 || cfg.leaky_slope > 1.0))
        throw ParameterError("network config: leaky_slope must lie in [0, 1]");
    if (cfg.probe_height < 1 || cfg.probe_width < 1)
        throw ParameterError("network config: probe size must be positive");
}

bool NetworkWeights::all_finite() const {
    for (const ConvLayer& l : layers)
        if (!l.kernel.allFinite() || !l.bias.allFinite()) return false;
    return true;
}

WeightGradient zero_gradient(const NetworkWeights& w) {
    WeightGradient g;
    g.kernels.reserve(w.layers.size());
    g.biases.reserve(w.layers.size());
    for (const ConvLayer& l : w.layers) {
        g.kernels.emplace_back(Eigen::MatrixXd::Zero(l.kernel.rows(), l.kernel.cols()));
        g.biases.emplace_back(Eigen::VectorXd::Zero(l.bias.size()));
    }
    return g;
}

void grad_axpy(double a, const WeightGradient& g, WeightGradient& acc) {
    if (g.kernels.size() != acc.kernels.size())
        throw DimensionError("grad_axpy: layer count mismatch");
    for (std::size_t l = 0; l < g.kernels.size(); ++l) {
        acc.kernels[l] += a * g.kernels[l];
        acc.biases[l] += a * g.biases[l];
    }
}

void grad_scale(WeightGradient& g, double a) {
    for (std::size_t l = 0; l < g.kernels.size(); ++l) {
        g.kernels[l] *= a;
        g.biases[l] *= a;
    }
}

double grad_dot(const WeightGradient& a, const WeightGradient& b) {
    if (a.kernels.size() != b.kernels.size()) throw DimensionError("grad_dot: layer count mismatch");
    double s = 0.0;
    for (std::size_t l = 0; l < a.kernels.size(); ++l) {
        s += a.kernels[l].cwiseProduct(b.kernels[l]).sum();
        s += a.biases[l].dot(b.biases[l]);
    }
    return s;
}

double grad_norm(const WeightGradient& g) { return std::sqrt(grad_dot(g, g)); }

namespace {

// im2col: column p = flattened k*k patch around pixel p for every input
// channel, row order in_ch*k*k + ky*k + kx, zero padded
Eigen::MatrixXd im2col(const Eigen::MatrixXd& x, int h, int w, int k) {
    const int in_ch = static_cast<int>(x.rows());
    const int pad = k / 2;
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(in_ch) * k * k,
                                              static_cast<Eigen::Index>(h) * w);
    for (int c = 0; c < in_ch; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int row = (c * k + ky) * k + kx;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - pad;
                    if (sy < 0 || sy >= h) continue;
                    for (int xx = 0; xx < w; ++xx) {
                        const int sx = xx + kx - pad;
                        if (sx < 0 || sx >= w) continue;
                        p(row, static_cast<Eigen::Index>(y) * w + xx) =
                            x(c, static_cast<Eigen::Index>(sy) * w + sx);
                    }
                }
            }
        }
    }
    return p;
}

// adjoint of im2col: scatter-add patch rows back onto the image grid
Eigen::MatrixXd col2im(const Eigen::MatrixXd& p, int in_ch, int h, int w, int k) {
    const int pad = k / 2;
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(in_ch, static_cast<Eigen::Index>(h) * w);
    for (int c = 0; c < in_ch; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int row = (c * k + ky) * k + kx;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - pad;
                    if (sy < 0 || sy >= h) continue;
                    for (int xx = 0; xx < w; ++xx) {
                        const int sx = xx + kx - pad;
                        if (sx < 0 || sx >= w) continue;
                        x(c, static_cast<Eigen::Index>(sy) * w + sx) +=
                            p(row, static_cast<Eigen::Index>(y) * w + xx);
                    }
                }
            }
        }
    }
    return x;
}

Eigen::MatrixXd conv_apply(const ConvLayer& layer, const Eigen::MatrixXd& x, int h, int w,
                           bool with_bias) {
    Eigen::MatrixXd out = layer.kernel * im2col(x, h, w, layer.kernel_size);
    if (with_bias) out.colwise() += layer.bias;
    return out;
}

Eigen::MatrixXd conv_adjoint(const ConvLayer& layer, const Eigen::MatrixXd& g, int h, int w) {
    return col2im(layer.kernel.transpose() * g, layer.in_channels, h, w, layer.kernel_size);
}

double act_deriv(double z, const NetworkConfig& cfg) {
    if (z > 0.0) return 1.0;
    if (z < 0.0) return cfg.activation == Activation::LeakyReLU ? cfg.leaky_slope : 0.0;
    return 0.0;  // subgradient at the kink pinned to 0
}

void apply_activation(Eigen::MatrixXd& z, const NetworkConfig& cfg) {
    const double slope = cfg.activation == Activation::LeakyReLU ? cfg.leaky_slope : 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        double& v = z.data()[i];
        if (v < 0.0) v *= slope;
    }
}

Eigen::MatrixXd to_channels(const ComplexImage& x) {
    Eigen::MatrixXd m(2, static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        m(0, static_cast<Eigen::Index>(i)) = x[i].real();
        m(1, static_cast<Eigen::Index>(i)) = x[i].imag();
    }
    return m;
}

ComplexImage from_channels(const Eigen::MatrixXd& m, int h, int w) {
    ComplexImage x(h, w);
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = cdouble(m(0, static_cast<Eigen::Index>(i)), m(1, static_cast<Eigen::Index>(i)));
    return x;
}

void check_feed(const NetworkWeights& w, const ComplexImage& x, const char* where) {
    if (w.layers.empty()) throw DimensionError(std::string(where) + ": network has no layers");
    if (x.height() < 1 || x.width() < 1) throw DimensionError(std::string(where) + ": empty image");
    if (w.layers.front().in_channels != 2 || w.layers.back().out_channels != 2)
        throw DimensionError(std::string(where) + ": network is not a 2-channel endomorphism");
    for (std::size_t l = 0; l + 1 < w.layers.size(); ++l)
        if (w.layers[l].out_channels != w.layers[l + 1].in_channels)
            throw DimensionError(std::string(where) + ": channel mismatch between layers");
    for (const ConvLayer& layer : w.layers) {
        if (layer.kernel.rows() != layer.out_channels ||
            layer.kernel.cols() !=
                static_cast<Eigen::Index>(layer.in_channels) * layer.kernel_size *
                    layer.kernel_size ||
            layer.bias.size() != layer.out_channels)
            throw DimensionError(std::string(where) + ": kernel/bias shape mismatch");
    }
}

struct ForwardTrace {
    std::vector<Eigen::MatrixXd> inputs;  // input of each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation output of each layer
};

ForwardTrace forward_trace(const NetworkWeights& w, const ComplexImage& x) {
    const int h = x.height();
    const int wd = x.width();
    ForwardTrace t;
    t.inputs.reserve(w.layers.size());
    t.pre.reserve(w.layers.size());
    Eigen::MatrixXd cur = to_channels(x);
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        t.inputs.push_back(cur);
        Eigen::MatrixXd z = conv_apply(w.layers[l], cur, h, wd, true);
        t.pre.push_back(z);
        if (l + 1 < w.layers.size()) apply_activation(z, w.config);
        cur = std::move(z);
    }
    return t;
}

}  // namespace

ComplexImage h_forward(const NetworkWeights& w, const ComplexImage& x) {
    check_feed(w, x, "h_forward");
    const int h = x.height();
    const int wd = x.width();
    Eigen::MatrixXd cur = to_channels(x);
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        cur = conv_apply(w.layers[l], cur, h, wd, true);
        if (l + 1 < w.layers.size()) apply_activation(cur, w.config);
    }
    return from_channels(cur, h, wd);
}

namespace {

// shared backward sweep; fills whichever outputs are requested
void backward_pass(const NetworkWeights& w, const ComplexImage& x, const ComplexImage& v,
                   ComplexImage* dx, WeightGradient* dw, const char* where) {
    check_feed(w, x, where);
    if (!x.same_shape(v)) throw DimensionError(std::string(where) + ": cotangent shape mismatch");
    const int h = x.height();
    const int wd = x.width();
    const ForwardTrace trace = forward_trace(w, x);
    Eigen::MatrixXd g = to_channels(v);
    for (int l = static_cast<int>(w.layers.size()) - 1; l >= 0; --l) {
        const ConvLayer& layer = w.layers[static_cast<std::size_t>(l)];
        if (l + 1 < static_cast<int>(w.layers.size())) {
            const Eigen::MatrixXd& z = trace.pre[static_cast<std::size_t>(l)];
            for (Eigen::Index i = 0; i < g.size(); ++i)
                g.data()[i] *= act_deriv(z.data()[i], w.config);
        }
        if (dw) {
            dw->kernels[static_cast<std::size_t>(l)] =
                g * im2col(trace.inputs[static_cast<std::size_t>(l)], h, wd, layer.kernel_size)
                        .transpose();
            dw->biases[static_cast<std::size_t>(l)] = g.rowwise().sum();
        }
        if (l > 0 || dx) g = conv_adjoint(layer, g, h, wd);
    }
    if (dx) *dx = from_channels(g, h, wd);
}

}  // namespace

ComplexImage h_vjp_input(const NetworkWeights& w, const ComplexImage& x, const ComplexImage& v) {
    ComplexImage dx;
    backward_pass(w, x, v, &dx, nullptr, "h_vjp_input");
    return dx;
}

WeightGradient h_vjp_params(const NetworkWeights& w, const ComplexImage& x,
                            const ComplexImage& v) {
    WeightGradient dw = zero_gradient(w);
    backward_pass(w, x, v, nullptr, &dw, "h_vjp_params");
    return dw;
}

namespace {

Eigen::VectorXd probe_start(const ConvLayer& layer, int probe_h, int probe_w,
                            std::uint64_t seed) {
    const Eigen::Index n = static_cast<Eigen::Index>(layer.in_channels) * probe_h * probe_w;
    std::mt19937_64 rng(mix_seed(seed, 0x90e7));
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd u(n);
    for (Eigen::Index i = 0; i < n; ++i) u(i) = gauss(rng);
    const double nn = u.norm();
    return nn > 0.0 ? Eigen::VectorXd(u / nn) : Eigen::VectorXd(Eigen::VectorXd::Unit(n, 0));
}

// power iteration on the bias-free layer map at the probe size; returns the
// norm estimate and leaves the final unit vector in u
double layer_norm_power(const ConvLayer& layer, int probe_h, int probe_w, int iters,
                        Eigen::VectorXd& u) {
    const Eigen::Index n = static_cast<Eigen::Index>(layer.in_channels) * probe_h * probe_w;
    if (u.size() != n || !u.allFinite() || u.norm() == 0.0)
        u = probe_start(layer, probe_h, probe_w, 0);
    double sigma = 0.0;
    for (int it = 0; it < iters; ++it) {
        Eigen::Map<const Eigen::MatrixXd> um(u.data(), layer.in_channels,
                                             static_cast<Eigen::Index>(probe_h) * probe_w);
        Eigen::MatrixXd z = conv_apply(layer, um, probe_h, probe_w, false);
        const double zn = z.norm();
        if (zn == 0.0) {
            sigma = 0.0;
            break;
        }
        Eigen::MatrixXd back = conv_adjoint(layer, z, probe_h, probe_w);
        Eigen::Map<Eigen::VectorXd> bv(back.data(), back.size());
        const double bn = bv.norm();
        if (bn == 0.0) {
            sigma = zn;
            break;
        }
        u = bv / bn;
        if (it > 2 && std::abs(zn - sigma) <= 1e-13 * std::max(1.0, zn)) {
            sigma = zn;
            break;
        }
        sigma = zn;
    }
    return sigma;
}

}  // namespace

double layer_spectral_norm(const NetworkWeights& w, int layer, int power_iters,
                           std::uint64_t seed) {
    if (layer < 0 || layer >= w.num_layers())
        throw ParameterError("layer_spectral_norm: layer index out of range");
    if (power_iters < 1) throw ParameterError("layer_spectral_norm: power_iters must be >= 1");
    const ConvLayer& l = w.layers[static_cast<std::size_t>(layer)];
    Eigen::VectorXd u;
    if (layer < static_cast<int>(w.spectral_state.size()) &&
        w.spectral_state[static_cast<std::size_t>(layer)].size() ==
            static_cast<Eigen::Index>(l.in_channels) * w.config.probe_height *
                w.config.probe_width)
        u = w.spectral_state[static_cast<std::size_t>(layer)];
    else
        u = probe_start(l, w.config.probe_height, w.config.probe_width, seed);
    return layer_norm_power(l, w.config.probe_height, w.config.probe_width, power_iters, u);
}

NetworkWeights spectral_normalize(const NetworkWeights& w, double target, int power_iters) {
    if (target <= 0.0) throw ParameterError("spectral_normalize: target must be positive");
    if (power_iters < 1) throw ParameterError("spectral_normalize: power_iters must be >= 1");
    if (w.layers.empty()) return w;
    NetworkWeights out = w;
    out.spectral_state.resize(w.layers.size());
    const double per_layer =
        std::pow(target, 1.0 / static_cast<double>(w.layers.size()));
    // repeated estimate/rescale rounds: a single under-converged power pass
    // can miss the top singular value, which a later warm-started estimate
    // (e.g. global_lipschitz_bound) would then find above the target
    for (int round = 0; round < 50; ++round) {
        bool dirty = false;
        for (std::size_t l = 0; l < out.layers.size(); ++l) {
            ConvLayer& layer = out.layers[l];
            Eigen::VectorXd u = out.spectral_state[l];
            const double sigma = layer_norm_power(layer, out.config.probe_height,
                                                  out.config.probe_width, power_iters, u);
            out.spectral_state[l] = u;
            if (sigma > per_layer) {
                layer.kernel *= per_layer / sigma;
                if (sigma > per_layer * (1.0 + 1e-6)) dirty = true;
            }
        }
        if (!dirty) break;
    }
    return out;
}

double global_lipschitz_bound(const NetworkWeights& w, int power_iters, std::uint64_t seed) {
    if (w.layers.empty()) return 0.0;
    double prod = 1.0;
    for (int l = 0; l < w.num_layers(); ++l)
        prod *= layer_spectral_norm(w, l, power_iters, mix_seed(seed, static_cast<std::uint64_t>(l)));
    return prod;
}

NetworkWeights init_weights(const NetworkConfig& cfg, std::uint64_t seed) {
    validate_config(cfg);
    NetworkWeights w;
    w.config = cfg;
    w.layers.resize(static_cast<std::size_t>(cfg.num_layers));
    std::mt19937_64 rng(mix_seed(seed, 0x1417));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int l = 0; l < cfg.num_layers; ++l) {
        ConvLayer& layer = w.layers[static_cast<std::size_t>(l)];
        layer.in_channels = l == 0 ? 2 : cfg.channels;
        layer.out_channels = l == cfg.num_layers - 1 ? 2 : cfg.channels;
        layer.kernel_size = cfg.kernel_size;
        const Eigen::Index cols =
            static_cast<Eigen::Index>(layer.in_channels) * cfg.kernel_size * cfg.kernel_size;
        const double std_dev = std::sqrt(2.0 / static_cast<double>(cols));
        layer.kernel.resize(layer.out_channels, cols);
        for (Eigen::Index i = 0; i < layer.kernel.size(); ++i)
            layer.kernel.data()[i] = std_dev * gauss(rng);
        layer.bias = Eigen::VectorXd::Zero(layer.out_channels);
    }
    return spectral_normalize(w, 1.0, 100);
}

void save_network(const std::string& path, const NetworkWeights& w) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    const auto frame = binio::make_frame("MOLNET v1");
    out.write(frame.data(), frame.size());
    binio::put_u32(out, static_cast<std::uint32_t>(w.layers.size()));
    binio::put_u32(out, w.config.activation == Activation::LeakyReLU ? 1u : 0u);
    binio::put_f64(out, w.config.leaky_slope);
    binio::put_u32(out, static_cast<std::uint32_t>(w.config.channels));
    binio::put_u32(out, static_cast<std::uint32_t>(w.config.probe_height));
    binio::put_u32(out, static_cast<std::uint32_t>(w.config.probe_width));
    for (const ConvLayer& l : w.layers) {
        binio::put_u32(out, static_cast<std::uint32_t>(l.out_channels));
        binio::put_u32(out, static_cast<std::uint32_t>(l.in_channels));
        binio::put_u32(out, static_cast<std::uint32_t>(l.kernel_size));
    }
    for (const ConvLayer& l : w.layers) {
        for (Eigen::Index i = 0; i < l.kernel.size(); ++i) binio::put_f64(out, l.kernel.data()[i]);
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) binio::put_f64(out, l.bias(i));
    }
    if (!out) throw IoError("short write to " + path);
}

NetworkWeights load_network(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    const auto frame = binio::read_frame(in, path);
    if (std::strncmp(frame.data(), "MOLNET v1", 9) != 0)
        throw IoError(path + ": not a MOLNET v1 file");
    const std::uint32_t layers = binio::get_u32(in);
    if (!in || layers == 0 || layers > 1024) throw IoError(path + ": bad layer count");
    NetworkWeights w;
    w.config.num_layers = static_cast<int>(layers);
    w.config.activation = binio::get_u32(in) == 1u ? Activation::LeakyReLU : Activation::ReLU;
    w.config.leaky_slope = binio::get_f64(in);
    w.config.channels = static_cast<int>(binio::get_u32(in));
    w.config.probe_height = static_cast<int>(binio::get_u32(in));
    w.config.probe_width = static_cast<int>(binio::get_u32(in));
    w.layers.resize(layers);
    for (ConvLayer& l : w.layers) {
        l.out_channels = static_cast<int>(binio::get_u32(in));
        l.in_channels = static_cast<int>(binio::get_u32(in));
        l.kernel_size = static_cast<int>(binio::get_u32(in));
        if (!in || l.out_channels < 1 || l.in_channels < 1 || l.kernel_size < 1)
            throw IoError(path + ": bad layer shape");
    }
    if (!w.layers.empty()) w.config.kernel_size = w.layers.front().kernel_size;
    for (ConvLayer& l : w.layers) {
        l.kernel.resize(l.out_channels,
                        static_cast<Eigen::Index>(l.in_channels) * l.kernel_size * l.kernel_size);
        for (Eigen::Index i = 0; i < l.kernel.size(); ++i)
            l.kernel.data()[i] = binio::get_f64(in);
        l.bias.resize(l.out_channels);
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = binio::get_f64(in);
    }
    if (!in) throw IoError(path + ": truncated parameter data");
    return w;
}

}  // namespace mol
