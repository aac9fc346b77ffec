#pragma once

#include <iosfwd>
#include <vector>

#include "mol/image.hpp"
#include "mol/linop.hpp"
#include "mol/network.hpp"

namespace mol {

// alpha = 0 requests the default step 0.99 * step_size_bound(m); strict_mode
// rejects explicit steps at or above the step-size bound. anderson_depth = 0
// runs the plain iteration.
struct SolverConfig {
    double alpha = 0.0;
    double lambda = 1.0;
    double m = 0.1;
    double tol_fwd = 1e-6;
    double tol_bwd = 1e-6;
    int max_iter_fwd = 200;
    int max_iter_bwd = 200;
    int anderson_depth = 0;
    double divergence_threshold = 1e6;
    bool strict_mode = true;
    std::ostream* trace_sink = nullptr;  // CSV lines "iteration,residual,wall_seconds"
};

// alpha pinned exactly at the step-size bound, where the contraction
// guarantee degenerates; strict_mode is therefore off
SolverConfig pinned_alpha_config(double m, double lambda);

void validate_solver_config(const SolverConfig& cfg);
double effective_alpha(const SolverConfig& cfg);

// sup of admissible steps, 2m/(2-m)^2
double step_size_bound(double m);

// r = sqrt(1 - 2*alpha*m + alpha^2*(2-m)^2); r < 1 iff alpha below the bound
double contraction_rate(double m, double alpha);

struct FixedPointResult {
    ComplexImage solution;
    int nfe = 0;
    std::vector<double> residual_trace;  // relative update norm per iteration
    bool converged = false;
    bool diverged = false;
};

// one update: Q^{-1}((1-alpha)x + alpha*H(x) + alpha*lambda*A^H b)
ComplexImage fb_step(const ComplexImage& x, const NetworkWeights& w,
                     const LinearOperatorSpec& op, const Measurement& b,
                     const SolverConfig& cfg);

FixedPointResult solve_fixed_point(const NetworkWeights& w, const LinearOperatorSpec& op,
                                   const Measurement& b, const ComplexImage& x0,
                                   const SolverConfig& cfg);

// warm start x0 = A^H b
FixedPointResult solve_fixed_point(const NetworkWeights& w, const LinearOperatorSpec& op,
                                   const Measurement& b, const SolverConfig& cfg);

// ||lambda*A^H(Ax - b) + x - H(x)|| / max(||x||, 1), zero exactly at a
// stationary point of the regularized objective
double fixed_point_residual(const ComplexImage& x, const NetworkWeights& w,
                            const LinearOperatorSpec& op, const Measurement& b, double lambda);

struct BackwardResult {
    WeightGradient grad;
    int nbe = 0;
    double final_residual = 0.0;
    // forward images the backward pass needed to keep: x_star alone, the
    // counterpart of unrolled_reference's per-step trajectory storage
    int retained_buffers = 1;
};

// implicit (Neumann) backward pass at the fixed point x_star; stores only
// x_star and the running backward iterate, independent of nFE
BackwardResult deq_backward(const NetworkWeights& w, const LinearOperatorSpec& op,
                            const Measurement& b, const ComplexImage& x_star,
                            const ComplexImage& cotangent, const SolverConfig& cfg);

struct AndersonPair {
    ComplexImage x;
    ComplexImage g;  // residual T(x) - x
};

// type-II Anderson mixing over the last `depth` pairs, Tikhonov damping 1e-8,
// QR least squares; falls back to the plain step on a degenerate system
ComplexImage anderson_accelerate(const std::vector<AndersonPair>& history, int depth);

}  // namespace mol
