#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mol/image.hpp"
#include "mol/linop.hpp"
#include "mol/network.hpp"
#include "mol/solver.hpp"

namespace mol {

struct LipschitzEstimate {
    double value_squared = 0.0;  // squared adversarial gain ||H(x+e)-H(x)||^2/||e||^2
    double value = 0.0;          // its square root, the reported constant
    ComplexImage perturbation;   // best epsilon found
    int ascent_steps = 0;
};

// gradient ascent on ||H(f*+eps) - H(f*)||^2 / ||eps||^2; the best ratio seen
// is returned, so the estimate is nondecreasing in steps for a fixed seed
LipschitzEstimate local_lipschitz(const NetworkWeights& w, const ComplexImage& f_star,
                                  int steps, double step_size, std::uint64_t seed);

struct PairSampling {
    int height = 32;
    int width = 32;
    double amplitude = 1.0;       // scale of fully random samples
    double anchor_spread = 0.1;   // perturbation scale around anchor points
    std::vector<ComplexImage> anchors;
};

struct MonotoneEstimate {
    double m_hat = 0.0;
    int num_pairs = 0;
    std::pair<ComplexImage, ComplexImage> worst_pair;
};

// m_hat = min over pairs of Re<x-y, F(x)-F(y)> / ||x-y||^2 with F = I - H
MonotoneEstimate monotone_margin(const NetworkWeights& w, int samples, std::uint64_t seed,
                                 const PairSampling& sampling);

// alpha*lambda / (1 - contraction_rate(m, alpha)), computed in the
// cancellation-free form lambda*(1+r)/(2m - alpha*(2-m)^2); infinite at the
// step-size bound
double robustness_bound(double alpha, double lambda, double m);

struct RobustnessReport {
    double bound_factor = 0.0;  // may be +inf
    double m_hat = 0.0;
    std::vector<double> empirical_ratios;
    double max_ratio = 0.0;
    bool violated = false;
    int trials = 0;
    int skipped_trials = 0;       // zero-norm perturbations
    int nonconverged_trials = 0;  // reported, never silently dropped
};

RobustnessReport verify_robustness(const NetworkWeights& w, const LinearOperatorSpec& op,
                                   const Measurement& base_measurement, int trials,
                                   double perturb_scale, const SolverConfig& cfg,
                                   std::uint64_t seed);

// key/value lines plus the ratio array, as consumed by the verify subcommand
std::string serialize_robustness_report(const RobustnessReport& report);

}  // namespace mol
