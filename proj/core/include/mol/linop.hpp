#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <vector>

#include "mol/image.hpp"

namespace mol {

enum class OperatorKind {
    Identity,
    MaskedFourier,
    DenseGaussian,
    MultiCoilMaskedFourier,
};

// Synthetic receive-coil profiles: smooth Gaussian bumps, normalized so the
// pointwise sum of squared magnitudes is 1.
struct CoilSet {
    int coils = 0;
    int height = 0;
    int width = 0;
    std::vector<std::vector<cdouble>> maps;  // coils entries of h*w each
};

CoilSet make_synthetic_coils(int coils, int height, int width, std::uint64_t seed);

// The forward model A with apply/adjoint/Gram. The stored normalization
// scale keeps the spectral norm of the scaled operator at most 1.
class LinearOperatorSpec {
public:
    static LinearOperatorSpec identity(int height, int width);
    static LinearOperatorSpec masked_fourier(MaskSpec mask);
    static LinearOperatorSpec dense_gaussian(int rows, int height, int width, std::uint64_t seed);
    static LinearOperatorSpec multi_coil_masked_fourier(MaskSpec mask, CoilSet coils);

    OperatorKind kind() const { return kind_; }
    int domain_height() const { return domain_h_; }
    int domain_width() const { return domain_w_; }
    double normalization() const { return normalization_; }
    MeasurementLayout range_layout() const;

    const MaskSpec& mask() const { return mask_; }
    const CoilSet& coils() const { return coils_; }
    const Eigen::MatrixXcd& matrix() const { return matrix_; }

    // sampled flat indices of the mask, in row-major scan order
    const std::vector<int>& sampled_indices() const { return sampled_; }

private:
    LinearOperatorSpec() = default;

    OperatorKind kind_ = OperatorKind::Identity;
    int domain_h_ = 0;
    int domain_w_ = 0;
    double normalization_ = 1.0;
    MaskSpec mask_;
    CoilSet coils_;
    Eigen::MatrixXcd matrix_;  // DenseGaussian only
    std::vector<int> sampled_;
};

Measurement apply_forward(const LinearOperatorSpec& op, const ComplexImage& x);
ComplexImage apply_adjoint(const LinearOperatorSpec& op, const Measurement& y);

// A^H A x, equal to apply_adjoint(apply_forward(x))
ComplexImage gram(const LinearOperatorSpec& op, const ComplexImage& x);

// Solves (I + alpha*lambda*A^H A) z = y. Closed form where the Gram operator
// is diagonal in the Fourier basis (identity, single-coil masked Fourier),
// conjugate gradients otherwise (relative tolerance 1e-10, cap 200).
ComplexImage solve_q(const LinearOperatorSpec& op, const ComplexImage& y, double alpha,
                     double lambda);

// y + alpha*lambda*gram(y); the forward multiply matching solve_q
ComplexImage apply_q(const LinearOperatorSpec& op, const ComplexImage& y, double alpha,
                     double lambda);

// Power-iteration estimate of ||A||_2 on the scaled operator.
double spectral_norm_estimate(const LinearOperatorSpec& op, int iters, std::uint64_t seed);

// Variable-density undersampling pattern. Sampling weight decays as
// (1 + r/r0)^(-density_decay) with the 4x4 lowest-frequency block always
// kept; exactly round(h*w/acceleration) locations are sampled.
MaskSpec make_mask(int height, int width, double acceleration, double density_decay,
                   std::uint64_t seed);

}  // namespace mol
