// end-to-end acceptance gate: one pass/fail line per criterion, nonzero exit
// if any criterion fails

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mol/analysis.hpp"
#include "mol/image.hpp"
#include "mol/linop.hpp"
#include "mol/network.hpp"
#include "mol/rng.hpp"
#include "mol/solver.hpp"
#include "mol/training.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mol;

namespace {

struct SharedState {
    std::vector<EpochRecord> lr_history;
};
SharedState shared;

ComplexImage phantom(int h, int w, std::uint64_t seed) {
    return make_synthetic_dataset(1, h, w, PhantomSpec{}, 1.0, 0.0, seed).images.front();
}

NetworkConfig net_config(int layers, int channels, int probe) {
    NetworkConfig nc;
    nc.num_layers = layers;
    nc.channels = channels;
    nc.kernel_size = 3;
    nc.activation = Activation::ReLU;
    nc.probe_height = probe;
    nc.probe_width = probe;
    return nc;
}

// spectral_normalize only shrinks; expansive test nets are scaled up by hand
NetworkWeights rescale_to(NetworkWeights w, double target, std::uint64_t seed) {
    const double g = global_lipschitz_bound(w, 80, seed);
    const double s = std::pow(target / g, 1.0 / static_cast<double>(w.layers.size()));
    for (ConvLayer& l : w.layers) l.kernel *= s;
    return w;
}

std::string fmt(double v) {
    std::ostringstream out;
    out.precision(6);
    out << v;
    return out.str();
}

// ---------------------------------------------------------------- criterion 1

bool criterion1(std::string& why) {
    const double m = 0.1;
    SolverConfig cfg;
    cfg.m = m;
    cfg.alpha = 0.9 * step_size_bound(m);
    cfg.lambda = 4.0;
    cfg.tol_fwd = 1e-6;
    cfg.max_iter_fwd = 200;
    cfg.anderson_depth = 0;
    cfg.strict_mode = true;

    NetworkWeights w = spectral_normalize(init_weights(net_config(3, 8, 32), 0x101), 1.0 - m, 60);
    const double threshold = contraction_rate(m, cfg.alpha) + 0.05;

    for (int t = 0; t < 20; ++t) {
        LinearOperatorSpec op = [&]() {
            if (t % 3 == 0) return LinearOperatorSpec::identity(32, 32);
            if (t % 3 == 1)
                return LinearOperatorSpec::masked_fourier(testutil::full_mask(32, 32));
            return LinearOperatorSpec::multi_coil_masked_fourier(
                testutil::full_mask(32, 32),
                make_synthetic_coils(4, 32, 32, mix_seed(0x102, t)));
        }();
        const ComplexImage truth = phantom(32, 32, mix_seed(0x103, t));
        const Measurement b = apply_forward(op, truth);
        const FixedPointResult fp = solve_fixed_point(w, op, b, cfg);
        if (!fp.converged) {
            why = "problem " + std::to_string(t) + " did not converge in 200 iterations";
            return false;
        }
        for (std::size_t k = 3; k + 1 < fp.residual_trace.size(); ++k) {
            if (fp.residual_trace[k] <= 0.0) continue;
            const double ratio = fp.residual_trace[k + 1] / fp.residual_trace[k];
            if (ratio > threshold) {
                why = "problem " + std::to_string(t) + " ratio " + fmt(ratio) + " > " +
                      fmt(threshold) + " at iteration " + std::to_string(k);
                return false;
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------- criterion 2

bool criterion2(std::string& why) {
    SolverConfig cfg;
    cfg.m = 0.5;
    cfg.alpha = 0.9 * step_size_bound(0.5);
    cfg.lambda = 3.0;
    cfg.tol_fwd = 1e-8;
    cfg.max_iter_fwd = 3000;
    cfg.anderson_depth = 0;
    cfg.strict_mode = true;

    NetworkWeights w = spectral_normalize(init_weights(net_config(3, 6, 8), 0x201), 0.5, 60);
    NetworkWeights zero = testutil::zero_net();

    for (int t = 0; t < 8; ++t) {
        LinearOperatorSpec op = [&]() {
            switch (t % 4) {
                case 0: return LinearOperatorSpec::identity(8, 8);
                case 1:
                    return LinearOperatorSpec::masked_fourier(
                        make_mask(8, 8, 2.0, 3.0, mix_seed(0x202, t)));
                case 2:
                    return LinearOperatorSpec::dense_gaussian(32, 8, 8, mix_seed(0x203, t));
                default:
                    return LinearOperatorSpec::multi_coil_masked_fourier(
                        make_mask(8, 8, 2.0, 3.0, mix_seed(0x204, t)),
                        make_synthetic_coils(3, 8, 8, mix_seed(0x205, t)));
            }
        }();
        const ComplexImage truth = phantom(8, 8, mix_seed(0x206, t));
        const Measurement b = apply_forward(op, truth);

        const FixedPointResult fp = solve_fixed_point(w, op, b, cfg);
        if (!fp.converged) {
            why = "learned solve " + std::to_string(t) + " did not converge";
            return false;
        }
        const double fpr = fixed_point_residual(fp.solution, w, op, b, cfg.lambda);
        if (fpr > 10.0 * cfg.tol_fwd) {
            why = "fixed_point_residual " + fmt(fpr) + " > 10*tol on problem " +
                  std::to_string(t);
            return false;
        }

        SolverConfig tight = cfg;
        tight.tol_fwd = 1e-10;
        const FixedPointResult zp = solve_fixed_point(zero, op, b, tight);
        if (!zp.converged) {
            why = "H=0 solve " + std::to_string(t) + " did not converge";
            return false;
        }
        const ComplexImage dense = oracle::dense_fixed_point(op, b, cfg.lambda, 0.0);
        const double rel = dist(zp.solution, dense) / std::max(dense.norm(), 1e-12);
        if (rel > 1e-6) {
            why = "H=0 closed form mismatch " + fmt(rel) + " on problem " + std::to_string(t);
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------- criterion 3

bool criterion3(std::string& why) {
    SolverConfig cfg;
    cfg.m = 0.5;
    cfg.alpha = 1.0;
    cfg.lambda = 3.0;
    cfg.tol_fwd = 1e-12;
    cfg.tol_bwd = 1e-12;
    cfg.max_iter_fwd = 6000;
    cfg.max_iter_bwd = 6000;
    cfg.anderson_depth = 0;
    cfg.strict_mode = false;

    LinearOperatorSpec op = LinearOperatorSpec::masked_fourier(make_mask(8, 8, 2.0, 3.0, 0x301));
    NetworkWeights w = spectral_normalize(init_weights(net_config(5, 4, 8), 0x302), 0.5, 60);
    const ComplexImage truth = phantom(8, 8, 0x303);
    const Measurement b = apply_forward(op, truth);

    const FixedPointResult fp = solve_fixed_point(w, op, b, cfg);
    if (!fp.converged) {
        why = "forward solve did not converge";
        return false;
    }
    ComplexImage cot(fp.solution);
    axpy(cdouble(-1.0, 0.0), truth, cot);
    scale(cot, cdouble(2.0, 0.0));
    const WeightGradient grad = deq_backward(w, op, b, fp.solution, cot, cfg).grad;

    std::mt19937_64 rng(0x304);
    double worst = 0.0;
    for (int s = 0; s < 20; ++s) {
        const std::size_t layer =
            std::uniform_int_distribution<std::size_t>(0, w.layers.size() - 1)(rng);
        const Eigen::Index ix =
            std::uniform_int_distribution<Eigen::Index>(0, w.layers[layer].kernel.size() - 1)(rng);
        const double orig = w.layers[layer].kernel.data()[ix];
        const double h = 1e-5 * std::max(1.0, std::abs(orig));
        auto eval = [&](double v) {
            NetworkWeights wv = w;
            wv.layers[layer].kernel.data()[ix] = v;
            const FixedPointResult r = solve_fixed_point(wv, op, b, cfg);
            if (!r.converged) throw SolverError("fd solve did not converge", 0.0);
            const double d = dist(r.solution, truth);
            return d * d;
        };
        const double fd = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
        const double an = grad.kernels[layer](ix);
        worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(fd) + std::abs(an), 1e-6));
    }
    if (worst > 1e-3) {
        why = "finite-difference relative error " + fmt(worst);
        return false;
    }

    const UnrolledResult unrolled = unrolled_reference(w, op, b, 120, cot, cfg);
    WeightGradient diff = unrolled.grad;
    grad_axpy(-1.0, grad, diff);
    const double rel = grad_norm(diff) / std::max(grad_norm(grad), 1e-12);
    if (rel > 1e-4) {
        why = "unrolled gradient mismatch " + fmt(rel);
        return false;
    }
    return true;
}

// ---------------------------------------------------------------- criterion 4

bool criterion4(std::string& why) {
    SolverConfig cfg;
    cfg.m = 0.4;
    cfg.alpha = 0.3 * step_size_bound(0.4);
    cfg.lambda = 2.0;
    cfg.tol_fwd = 1e-9;
    cfg.max_iter_fwd = 8000;
    cfg.anderson_depth = 0;
    cfg.strict_mode = true;

    LinearOperatorSpec op =
        LinearOperatorSpec::masked_fourier(make_mask(16, 16, 2.0, 3.0, 0x401));
    NetworkWeights w = spectral_normalize(init_weights(net_config(3, 8, 16), 0x402), 0.5, 60);
    const ComplexImage truth = phantom(16, 16, 0x403);
    const Measurement b = apply_forward(op, truth);

    const RobustnessReport rep = verify_robustness(w, op, b, 100, 0.05, cfg, 0x404);
    if (rep.nonconverged_trials != 0 || rep.skipped_trials != 0) {
        why = std::to_string(rep.nonconverged_trials) + " nonconverged and " +
              std::to_string(rep.skipped_trials) + " skipped trials";
        return false;
    }
    if (static_cast<int>(rep.empirical_ratios.size()) != 100) {
        why = "expected 100 ratios, got " + std::to_string(rep.empirical_ratios.size());
        return false;
    }
    if (rep.violated || rep.max_ratio > rep.bound_factor * (1.0 + 1e-6)) {
        why = "max ratio " + fmt(rep.max_ratio) + " violates bound " + fmt(rep.bound_factor);
        return false;
    }

    // the small-step limit of the bound factor is lambda / m
    const double tiny = 1e-6 * step_size_bound(rep.m_hat);
    const double limit = robustness_bound(tiny, cfg.lambda, rep.m_hat);
    const double target = cfg.lambda / rep.m_hat;
    const double rel = std::abs(limit - target) / target;
    if (rel > 1e-3) {
        why = "alpha->0 factor " + fmt(limit) + " vs lambda/m_hat " + fmt(target) +
              " (rel " + fmt(rel) + ")";
        return false;
    }
    return true;
}

// ---------------------------------------------------------------- criterion 5

bool criterion5(std::string& why) {
    for (double m : {0.1, 0.5}) {
        NetworkWeights w = spectral_normalize(
            init_weights(net_config(3, 8, 16), 0x501 + static_cast<std::uint64_t>(m * 100)),
            1.0 - m, 60);
        PairSampling sampling;
        sampling.height = 16;
        sampling.width = 16;
        sampling.amplitude = 1.0;
        const MonotoneEstimate est = monotone_margin(w, 1000, 0x502, sampling);
        if (est.m_hat < m - 0.02) {
            why = "m_hat " + fmt(est.m_hat) + " < " + fmt(m - 0.02) + " at m=" + fmt(m);
            return false;
        }

        // sampled Lipschitz constant of F = I - H over fresh pairs
        double lip_f = 0.0;
        for (int t = 0; t < 1000; ++t) {
            const ComplexImage x =
                random_gaussian_image(16, 16, mix_seed(0x504, 2 * t));
            const ComplexImage y =
                random_gaussian_image(16, 16, mix_seed(0x504, 2 * t + 1));
            ComplexImage dx = sub(x, y);
            const double dn = dx.norm();
            if (dn == 0.0) continue;
            ComplexImage df = dx;
            const ComplexImage hx = h_forward(w, x);
            const ComplexImage hy = h_forward(w, y);
            axpy(cdouble(-1.0, 0.0), sub(hx, hy), df);
            lip_f = std::max(lip_f, df.norm() / dn);
        }
        if (lip_f > 2.0 - est.m_hat + 0.02) {
            why = "sampled Lip(F) " + fmt(lip_f) + " > " + fmt(2.0 - est.m_hat + 0.02) +
                  " at m=" + fmt(m);
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------- criterion 6

bool criterion6(std::string& why) {
    SolverConfig cfg;
    cfg.m = 0.5;
    cfg.alpha = 1.0;
    cfg.lambda = 5.0;
    cfg.tol_fwd = 1e-6;
    cfg.max_iter_fwd = 150;
    cfg.anderson_depth = 0;
    cfg.strict_mode = false;

    NetworkWeights base = init_weights(net_config(3, 8, 16), 0x601);
    NetworkWeights contractive = spectral_normalize(base, 0.23, 60);
    // random init keeps the realized gain far under the layer-norm product,
    // so the bound must sit well above the 1.5 class floor before the
    // iterates actually blow up
    NetworkWeights expansive = rescale_to(base, 12.0, 0x602);
    if (global_lipschitz_bound(expansive, 200, 0x605) < 1.5) {
        why = "expansive net bound below 1.5";
        return false;
    }

    int converged = 0;
    int stuck = 0;
    for (int t = 0; t < 20; ++t) {
        LinearOperatorSpec op = LinearOperatorSpec::masked_fourier(
            make_mask(16, 16, 4.0, 3.0, mix_seed(0x603, t)));
        const ComplexImage truth = phantom(16, 16, mix_seed(0x604, t));
        const Measurement b = apply_forward(op, truth);

        try {
            const FixedPointResult fp = solve_fixed_point(contractive, op, b, cfg);
            if (fp.converged) ++converged;
        } catch (const NumericError&) {
        }
        try {
            const FixedPointResult fp = solve_fixed_point(expansive, op, b, cfg);
            if (!fp.converged || fp.diverged) ++stuck;
        } catch (const NumericError&) {
            ++stuck;
        }
    }
    if (converged < 19) {
        why = "lip 0.23 net converged on only " + std::to_string(converged) + "/20";
        return false;
    }
    if (stuck < 18) {
        why = "expansive net failed on only " + std::to_string(stuck) + "/20";
        return false;
    }
    return true;
}

// ---------------------------------------------------------------- criterion 7

bool criterion7(std::string& why) {
    SolverConfig cfg;
    cfg.m = 0.5;
    cfg.alpha = 1.0;
    cfg.lambda = 3.0;
    cfg.tol_bwd = 1e-10;
    cfg.max_iter_fwd = 6000;
    cfg.max_iter_bwd = 6000;
    cfg.anderson_depth = 0;
    cfg.strict_mode = false;

    LinearOperatorSpec op =
        LinearOperatorSpec::masked_fourier(make_mask(16, 16, 2.0, 3.0, 0x701));
    NetworkWeights w = spectral_normalize(init_weights(net_config(3, 8, 16), 0x702), 0.5, 60);
    const ComplexImage truth = phantom(16, 16, 0x703);
    const Measurement b = apply_forward(op, truth);

    std::vector<int> nfes;
    std::vector<int> buffers;
    ComplexImage cot0;
    for (double tol : {1e-4, 1e-7, 1e-10}) {
        SolverConfig c = cfg;
        c.tol_fwd = tol;
        const FixedPointResult fp = solve_fixed_point(w, op, b, c);
        if (!fp.converged) {
            why = "solve at tol " + fmt(tol) + " did not converge";
            return false;
        }
        ComplexImage cot(fp.solution);
        axpy(cdouble(-1.0, 0.0), truth, cot);
        scale(cot, cdouble(2.0, 0.0));
        if (nfes.empty()) cot0 = cot;
        const BackwardResult bw = deq_backward(w, op, b, fp.solution, cot, c);
        nfes.push_back(fp.nfe);
        buffers.push_back(bw.retained_buffers);
    }
    if (!(nfes[0] < nfes[1] && nfes[1] < nfes[2])) {
        why = "nfe did not grow with tighter tolerance";
        return false;
    }
    if (buffers[0] != buffers[1] || buffers[1] != buffers[2]) {
        why = "deq buffer count varies with nfe";
        return false;
    }

    SolverConfig c = cfg;
    c.tol_fwd = 1e-4;
    const UnrolledResult ur = unrolled_reference(w, op, b, 10, cot0, c);
    const double ratio = static_cast<double>(ur.buffers_retained) / buffers[0];
    if (ratio < 8.0 || ratio > 12.0) {
        why = "buffer ratio " + fmt(ratio) + " outside [8, 12]";
        return false;
    }
    return true;
}

// ---------------------------------------------------------------- criterion 8

double mean_test_psnr(const NetworkWeights& w, const Dataset& data, const SolverConfig& cfg) {
    const std::vector<int> test_idx = data.indices_of(Split::Test);
    double sum = 0.0;
    int count = 0;
    for (int idx : test_idx) {
        FixedPointResult fp;
        try {
            fp = solve_fixed_point(w, data.ops[static_cast<std::size_t>(idx)],
                                   data.measurements[static_cast<std::size_t>(idx)], cfg);
        } catch (const NumericError&) {
            continue;
        }
        if (!fp.converged) continue;
        const ComplexImage& truth = data.images[static_cast<std::size_t>(idx)];
        sum += psnr(magnitude_image(fp.solution), magnitude_image(truth));
        ++count;
    }
    return count > 0 ? sum / count : 0.0;
}

bool criterion8(std::string& why) {
    Dataset data = make_synthetic_dataset(200, 24, 24, PhantomSpec{}, 4.0, 0.01, 0x801);

    SolverConfig sc;
    sc.m = 0.1;
    sc.alpha = 1.0;
    sc.lambda = 5.0;
    sc.tol_fwd = 1e-4;
    sc.tol_bwd = 1e-4;
    sc.max_iter_fwd = 250;
    sc.max_iter_bwd = 250;
    sc.anderson_depth = 5;
    sc.strict_mode = false;

    const NetworkWeights init =
        spectral_normalize(init_weights(net_config(3, 12, 24), 0x802), 0.9, 60);
    const int epochs = 12;

    auto train = [&](TrainMode mode, std::vector<EpochRecord>* history_out) {
        TrainConfig tc;
        tc.epochs = epochs;
        tc.batch_size = 4;
        tc.learning_rate = 1e-3;
        tc.optimizer.kind = OptimizerKind::Adam;
        tc.lip_weight = 1.0;
        tc.lip_ascent_steps = 5;
        tc.mode = mode;
        tc.m_target = 0.1;
        tc.seed = 0x803;
        TrainState state;
        state.weights = init;
        for (int e = 0; e < epochs; ++e) state = train_epoch(std::move(state), data, sc, tc);
        if (history_out) *history_out = state.history;
        return state.weights;
    };

    std::vector<EpochRecord> lr_history;
    const NetworkWeights w_lr = train(TrainMode::MOL_LR, &lr_history);
    const NetworkWeights w_sn = train(TrainMode::MOL_SN, nullptr);

    const double psnr_lr = mean_test_psnr(w_lr, data, sc);
    const double psnr_sn = mean_test_psnr(w_sn, data, sc);
    const double psnr_zero = mean_test_psnr(testutil::zero_net(), data, sc);
    shared.lr_history = lr_history;

    if (psnr_lr < psnr_sn + 0.5) {
        why = "MOL-LR " + fmt(psnr_lr) + " dB < MOL-SN " + fmt(psnr_sn) + " dB + 0.5";
        return false;
    }
    if (psnr_lr < psnr_zero + 1.0) {
        why = "MOL-LR " + fmt(psnr_lr) + " dB < baseline " + fmt(psnr_zero) + " dB + 1.0";
        return false;
    }
    return true;
}

// ---------------------------------------------------------------- criterion 9

bool criterion9(std::string& why) {
    Eigen::Matrix2d k;
    k << 1.3, 0.4, 0.0, 0.7;
    const NetworkWeights linear = testutil::linear_net(k);
    const double sigma = k.jacobiSvd(Eigen::ComputeFullU | Eigen::ComputeFullV).singularValues()(0);
    const ComplexImage at = random_gaussian_image(16, 16, 0x901);
    const LipschitzEstimate est = local_lipschitz(linear, at, 80, 1.0, 0x902);
    const double rel = std::abs(est.value_squared - sigma * sigma) / (sigma * sigma);
    if (rel > 0.01) {
        why = "linear net value_squared " + fmt(est.value_squared) + " vs " +
              fmt(sigma * sigma) + " (rel " + fmt(rel) + ")";
        return false;
    }

    for (int n = 0; n < 2; ++n) {
        const NetworkWeights w = init_weights(net_config(3 + n, 6, 16), 0x903 + n);
        const double global = global_lipschitz_bound(w, 80, 0x904 + n);
        for (int t = 0; t < 25; ++t) {
            const ComplexImage x = random_gaussian_image(16, 16, mix_seed(0x905 + n, t));
            const LipschitzEstimate e = local_lipschitz(w, x, 12, 1.0, mix_seed(0x906 + n, t));
            if (e.value > global + 1e-3) {
                why = "local estimate " + fmt(e.value) + " above global bound " + fmt(global);
                return false;
            }
        }
    }
    return true;
}

// --------------------------------------------------------------- criterion 10

bool criterion10(std::string& why) {
    if (shared.lr_history.size() < 3) {
        why = "no MOL-LR history available";
        return false;
    }
    std::vector<double> lips;
    std::vector<double> nfes;
    for (const EpochRecord& r : shared.lr_history) {
        lips.push_back(r.mean_lip);
        nfes.push_back(r.mean_nfe);
    }
    const double rho = oracle::spearman(lips, nfes);
    if (!(rho >= 0.0)) {
        why = "spearman rho " + fmt(rho) + " is negative";
        return false;
    }
    return true;
}

}  // namespace

int main() {
    const std::vector<std::function<bool(std::string&)>> criteria = {
        criterion1, criterion2, criterion3, criterion4, criterion5,
        criterion6, criterion7, criterion8, criterion9, criterion10};

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        std::string why;
        bool pass = false;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            pass = criteria[i](why);
        } catch (const std::exception& e) {
            why = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << "criterion " << (i + 1) << ": " << (pass ? "PASS" : "FAIL");
        if (!pass) std::cout << " (" << why << ")";
        std::cout << " [" << fmt(secs) << "s]\n";
        if (!pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
