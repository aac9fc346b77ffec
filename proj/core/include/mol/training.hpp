#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mol/analysis.hpp"
#include "mol/image.hpp"
#include "mol/linop.hpp"
#include "mol/network.hpp"
#include "mol/solver.hpp"

namespace mol {

enum class Split { Train, Validation, Test };

// piecewise-constant magnitude from random ellipses/rectangles, smooth
// low-order phase
struct PhantomSpec {
    int min_shapes = 3;
    int max_shapes = 7;
    double max_amplitude = 1.0;
    double phase_scale = 0.5;
};

struct Dataset {
    int height = 0;
    int width = 0;
    double acceleration = 1.0;
    double noise_sigma = 0.0;
    std::vector<ComplexImage> images;
    std::vector<MaskSpec> masks;
    std::vector<LinearOperatorSpec> ops;
    std::vector<Measurement> measurements;
    std::vector<Split> split;

    int size() const { return static_cast<int>(images.size()); }
    std::vector<int> indices_of(Split s) const;
};

Dataset make_synthetic_dataset(int count, int height, int width, const PhantomSpec& spec,
                               double acceleration, double noise_sigma, std::uint64_t seed);

// squared reconstruction error plus the weighted Lipschitz penalty
double loss(const ComplexImage& recon, const ComplexImage& target, double lip_value_squared,
            double lip_weight);

enum class OptimizerKind { SGD, Adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct OptimizerState {
    WeightGradient m;
    WeightGradient v;
    int t = 0;
    bool initialized = false;
};

void apply_update(NetworkWeights& w, const WeightGradient& g, double learning_rate,
                  const OptimizerConfig& cfg, OptimizerState& state);

enum class TrainMode { MOL_LR, MOL_SN, Unconstrained };

struct TrainConfig {
    int epochs = 20;
    int batch_size = 4;
    double learning_rate = 1e-4;
    OptimizerConfig optimizer;
    double lip_weight = 1.0;
    int lip_ascent_steps = 10;
    TrainMode mode = TrainMode::MOL_LR;
    double m_target = 0.1;
    std::uint64_t seed = 0;
};

void validate_train_config(const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_psnr = 0.0;
    double val_ssim = 0.0;
    double mean_lip = 0.0;
    double mean_nfe = 0.0;
    int diverged_batches = 0;
};

struct TrainState {
    NetworkWeights weights;
    OptimizerState opt;
    int epoch = 0;
    std::vector<EpochRecord> history;
};

// one pass over the training split: solve, implicit backward, optional
// Lipschitz penalty (MOL-LR) or post-update spectral normalization (MOL-SN),
// then a validation sweep recorded into history
TrainState train_epoch(TrainState state, const Dataset& data, const SolverConfig& solver_cfg,
                       const TrainConfig& train_cfg);

struct UnrolledResult {
    ComplexImage output;
    WeightGradient grad;
    int buffers_retained = 0;
};

// exactly `unrolls` fb_step iterations from A^H b with every intermediate
// stored, backpropagated through the whole chain; the stored-buffer count is
// the memory cost an unrolled network would pay
UnrolledResult unrolled_reference(const NetworkWeights& w, const LinearOperatorSpec& op,
                                  const Measurement& b, int unrolls,
                                  const ComplexImage& cotangent, const SolverConfig& cfg);

// 10*log10(peak^2/MSE), peak = max magnitude of ref, capped at 200 dB
double psnr(const ComplexImage& x, const ComplexImage& ref);

// windowed SSIM on magnitude images, uniform window, constants (k1*L)^2 and
// (k2*L)^2 with L = max magnitude of ref
double ssim(const ComplexImage& x, const ComplexImage& ref, int window = 7, double k1 = 0.01,
            double k2 = 0.03);

ComplexImage magnitude_image(const ComplexImage& x);

// deterministic CSV (epoch, train_loss, val_psnr, val_ssim, mean_lip,
// mean_nfe, diverged_batches), header included
std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace mol
