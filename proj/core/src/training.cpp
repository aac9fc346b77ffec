#include "mol/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "mol/errors.hpp"
#include "mol/parallel.hpp"
#include "mol/rng.hpp"

namespace mol {

std::vector<int> Dataset::indices_of(Split s) const {
    std::vector<int> idx;
    for (int i = 0; i < size(); ++i)
        if (split[static_cast<std::size_t>(i)] == s) idx.push_back(i);
    return idx;
}

namespace {

ComplexImage make_phantom(int height, int width, const PhantomSpec& spec, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> nshapes(spec.min_shapes, spec.max_shapes);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<double> mag(static_cast<std::size_t>(height) * width, 0.0);
    const int n = nshapes(rng);
    for (int s = 0; s < n; ++s) {
        const bool ellipse = uni(rng) < 0.5;
        const double cy = (0.15 + 0.7 * uni(rng)) * height;
        const double cx = (0.15 + 0.7 * uni(rng)) * width;
        const double ay = (0.08 + 0.27 * uni(rng)) * height;
        const double ax = (0.08 + 0.27 * uni(rng)) * width;
        const double amp = (0.2 + 0.8 * uni(rng)) * spec.max_amplitude;
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double dy = (y - cy) / ay;
                const double dx = (x - cx) / ax;
                const bool inside = ellipse ? (dy * dy + dx * dx <= 1.0)
                                            : (std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0);
                if (inside) mag[static_cast<std::size_t>(y) * width + x] += amp;
            }
        }
    }
    double peak = 0.0;
    for (double v : mag) peak = std::max(peak, v);
    const double rescale = peak > 0.0 ? spec.max_amplitude / peak : 0.0;

    const double p1 = (2.0 * uni(rng) - 1.0) * M_PI;
    const double p2 = (2.0 * uni(rng) - 1.0) * M_PI;
    const double p3 = (2.0 * uni(rng) - 1.0) * M_PI;
    ComplexImage img(height, width);
    for (int y = 0; y < height; ++y) {
        const double v = (y + 0.5) / height - 0.5;
        for (int x = 0; x < width; ++x) {
            const double u = (x + 0.5) / width - 0.5;
            const double phase =
                spec.phase_scale *
                (p1 * v + p2 * u + p3 * std::sin(2.0 * M_PI * v) * std::cos(2.0 * M_PI * u));
            const double m = mag[static_cast<std::size_t>(y) * width + x] * rescale;
            img(y, x) = m * cdouble(std::cos(phase), std::sin(phase));
        }
    }
    return img;
}

}  // namespace

Dataset make_synthetic_dataset(int count, int height, int width, const PhantomSpec& spec,
                               double acceleration, double noise_sigma, std::uint64_t seed) {
    if (count < 1) throw ParameterError("make_synthetic_dataset: count must be >= 1");
    if (height < 1 || width < 1) throw ParameterError("make_synthetic_dataset: bad shape");
    if (noise_sigma < 0.0)
        throw ParameterError("make_synthetic_dataset: noise_sigma must be non-negative");
    if (spec.min_shapes < 1 || spec.max_shapes < spec.min_shapes)
        throw ParameterError("make_synthetic_dataset: bad shape counts");

    Dataset data;
    data.height = height;
    data.width = width;
    data.acceleration = acceleration;
    data.noise_sigma = noise_sigma;
    data.images.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        std::mt19937_64 rng(mix_seed(seed, 0xda7a + static_cast<std::uint64_t>(i)));
        data.images.push_back(make_phantom(height, width, spec, rng));
        data.masks.push_back(make_mask(height, width, acceleration, 3.0,
                                       mix_seed(seed, 0x3a50 + static_cast<std::uint64_t>(i))));
        data.ops.push_back(LinearOperatorSpec::masked_fourier(data.masks.back()));
        Measurement b = apply_forward(data.ops.back(), data.images.back());
        if (noise_sigma > 0.0) {
            std::normal_distribution<double> gauss(0.0, noise_sigma / std::sqrt(2.0));
            for (cdouble& v : b.data) v += cdouble(gauss(rng), gauss(rng));
        }
        data.measurements.push_back(std::move(b));
        const int slot = i % 10;
        data.split.push_back(slot == 8 ? Split::Validation
                                       : slot == 9 ? Split::Test : Split::Train);
    }
    return data;
}

double loss(const ComplexImage& recon, const ComplexImage& target, double lip_value_squared,
            double lip_weight) {
    check_same_shape(recon, target, "loss");
    if (lip_value_squared < 0.0 || lip_weight < 0.0)
        throw ParameterError("loss: penalty terms must be non-negative");
    const double d = dist(recon, target);
    return d * d + lip_weight * lip_value_squared;
}

void apply_update(NetworkWeights& w, const WeightGradient& g, double learning_rate,
                  const OptimizerConfig& cfg, OptimizerState& state) {
    if (g.kernels.size() != w.layers.size())
        throw DimensionError("apply_update: gradient/weight layer mismatch");
    if (learning_rate < 0.0) throw ParameterError("apply_update: negative learning rate");
    if (cfg.kind == OptimizerKind::SGD) {
        for (std::size_t l = 0; l < w.layers.size(); ++l) {
            w.layers[l].kernel -= learning_rate * g.kernels[l];
            w.layers[l].bias -= learning_rate * g.biases[l];
        }
        return;
    }
    if (!state.initialized) {
        state.m = zero_gradient(w);
        state.v = zero_gradient(w);
        state.t = 0;
        state.initialized = true;
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, state.t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, state.t);
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        state.m.kernels[l] = cfg.beta1 * state.m.kernels[l] + (1.0 - cfg.beta1) * g.kernels[l];
        state.m.biases[l] = cfg.beta1 * state.m.biases[l] + (1.0 - cfg.beta1) * g.biases[l];
        state.v.kernels[l] = cfg.beta2 * state.v.kernels[l] +
                             (1.0 - cfg.beta2) * g.kernels[l].cwiseProduct(g.kernels[l]);
        state.v.biases[l] = cfg.beta2 * state.v.biases[l] +
                            (1.0 - cfg.beta2) * g.biases[l].cwiseProduct(g.biases[l]);
        w.layers[l].kernel.array() -=
            learning_rate * (state.m.kernels[l].array() / bc1) /
            ((state.v.kernels[l].array() / bc2).sqrt() + cfg.eps);
        w.layers[l].bias.array() -=
            learning_rate * (state.m.biases[l].array() / bc1) /
            ((state.v.biases[l].array() / bc2).sqrt() + cfg.eps);
    }
}

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.epochs < 0) throw ParameterError("train config: epochs must be non-negative");
    if (cfg.batch_size < 1) throw ParameterError("train config: batch_size must be >= 1");
    if (cfg.learning_rate < 0.0)
        throw ParameterError("train config: learning_rate must be non-negative");
    if (cfg.lip_weight < 0.0) throw ParameterError("train config: lip_weight must be non-negative");
    if (cfg.lip_ascent_steps < 1)
        throw ParameterError("train config: lip_ascent_steps must be >= 1");
    if (!(cfg.m_target > 0.0 && cfg.m_target < 1.0))
        throw ParameterError("train config: m_target must lie in (0, 1)");
}

namespace {

struct ItemResult {
    bool usable = false;
    bool diverged = false;
    WeightGradient grad;
    double loss_value = 0.0;
    double lip = 0.0;
    bool has_lip = false;
    int nfe = 0;
};

ItemResult process_item(const NetworkWeights& w, const Dataset& data, int idx,
                        const SolverConfig& solver_cfg, const TrainConfig& train_cfg,
                        std::uint64_t item_seed) {
    ItemResult out;
    const LinearOperatorSpec& op = data.ops[static_cast<std::size_t>(idx)];
    const Measurement& b = data.measurements[static_cast<std::size_t>(idx)];
    const ComplexImage& target = data.images[static_cast<std::size_t>(idx)];

    FixedPointResult fp;
    try {
        fp = solve_fixed_point(w, op, b, solver_cfg);
    } catch (const NumericError&) {
        out.diverged = true;
        return out;
    }
    out.nfe = fp.nfe;
    if (fp.diverged || !fp.converged) {
        out.diverged = true;
        return out;
    }

    LipschitzEstimate lip = local_lipschitz(w, fp.solution, train_cfg.lip_ascent_steps, 1.0,
                                            mix_seed(item_seed, 0x11b));
    out.lip = lip.value;
    out.has_lip = true;

    // cotangent of the squared error, real-pair convention
    ComplexImage cot(fp.solution);
    axpy(cdouble(-1.0, 0.0), target, cot);
    scale(cot, cdouble(2.0, 0.0));
    try {
        out.grad = deq_backward(w, op, b, fp.solution, cot, solver_cfg).grad;
    } catch (const SolverError&) {
        out.diverged = true;
        return out;
    }

    double lip_term = 0.0;
    if (train_cfg.mode == TrainMode::MOL_LR) {
        // penalty gradient with both the ascent iterate and the fixed point
        // frozen; only the direct dependence of H on w is differentiated
        const ComplexImage& eps = lip.perturbation;
        const double en = dot_real(eps, eps);
        if (en > 0.0) {
            ComplexImage shifted(fp.solution);
            axpy(cdouble(1.0, 0.0), eps, shifted);
            ComplexImage d = h_forward(w, shifted);
            {
                ComplexImage hf = h_forward(w, fp.solution);
                axpy(cdouble(-1.0, 0.0), hf, d);
            }
            const double s = 2.0 * train_cfg.lip_weight / en;
            WeightGradient gp = h_vjp_params(w, shifted, d);
            grad_axpy(s, gp, out.grad);
            WeightGradient gm = h_vjp_params(w, fp.solution, d);
            grad_axpy(-s, gm, out.grad);
            lip_term = train_cfg.lip_weight * lip.value_squared;
        }
    }
    out.loss_value = loss(fp.solution, target, 0.0, 0.0) + lip_term;
    out.usable = true;
    return out;
}

}  // namespace

TrainState train_epoch(TrainState state, const Dataset& data, const SolverConfig& solver_cfg,
                       const TrainConfig& train_cfg) {
    validate_solver_config(solver_cfg);
    validate_train_config(train_cfg);
    if (data.size() == 0) throw ParameterError("train_epoch: empty dataset");

    std::vector<int> train_idx = data.indices_of(Split::Train);
    if (train_idx.empty()) throw ParameterError("train_epoch: no training samples");
    {
        std::mt19937_64 rng(mix_seed(train_cfg.seed,
                                     0xe90c + static_cast<std::uint64_t>(state.epoch)));
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
    }

    EpochRecord rec;
    rec.epoch = state.epoch + 1;
    double loss_sum = 0.0;
    int used_batches = 0;
    double lip_sum = 0.0;
    int lip_count = 0;
    double nfe_sum = 0.0;
    int nfe_count = 0;

    const int nbatches =
        (static_cast<int>(train_idx.size()) + train_cfg.batch_size - 1) / train_cfg.batch_size;
    for (int bi = 0; bi < nbatches; ++bi) {
        const int lo = bi * train_cfg.batch_size;
        const int hi = std::min<int>(lo + train_cfg.batch_size,
                                     static_cast<int>(train_idx.size()));
        std::vector<ItemResult> items(static_cast<std::size_t>(hi - lo));
        parallel_for(static_cast<std::size_t>(hi - lo), default_workers(), [&](std::size_t j) {
            const int idx = train_idx[static_cast<std::size_t>(lo) + j];
            items[j] = process_item(state.weights, data, idx, solver_cfg, train_cfg,
                                    mix_seed(train_cfg.seed,
                                             (static_cast<std::uint64_t>(state.epoch) << 20) +
                                                 static_cast<std::uint64_t>(idx)));
        });
        bool batch_ok = true;
        for (const ItemResult& it : items) {
            if (it.has_lip) {
                lip_sum += it.lip;
                ++lip_count;
            }
            if (it.usable) {
                nfe_sum += it.nfe;
                ++nfe_count;
            }
            if (!it.usable) batch_ok = false;
        }
        if (!batch_ok) {
            ++rec.diverged_batches;
            continue;
        }
        WeightGradient acc = zero_gradient(state.weights);
        double batch_loss = 0.0;
        for (const ItemResult& it : items) {
            grad_axpy(1.0 / static_cast<double>(items.size()), it.grad, acc);
            batch_loss += it.loss_value / static_cast<double>(items.size());
        }
        apply_update(state.weights, acc, train_cfg.learning_rate, train_cfg.optimizer,
                     state.opt);
        if (train_cfg.mode == TrainMode::MOL_SN)
            state.weights = spectral_normalize(state.weights, 1.0 - train_cfg.m_target, 30);
        loss_sum += batch_loss;
        ++used_batches;
    }
    if (used_batches == 0)
        throw SolverError("train_epoch: all batches diverged", 0.0);

    rec.train_loss = loss_sum / used_batches;
    rec.mean_lip = lip_count > 0 ? lip_sum / lip_count : 0.0;
    rec.mean_nfe = nfe_count > 0 ? nfe_sum / nfe_count : 0.0;

    const std::vector<int> val_idx = data.indices_of(Split::Validation);
    double psnr_sum = 0.0;
    double ssim_sum = 0.0;
    int val_count = 0;
    for (int idx : val_idx) {
        FixedPointResult fp;
        try {
            fp = solve_fixed_point(state.weights, data.ops[static_cast<std::size_t>(idx)],
                                   data.measurements[static_cast<std::size_t>(idx)], solver_cfg);
        } catch (const NumericError&) {
            continue;
        }
        if (!fp.converged) continue;
        const ComplexImage& truth = data.images[static_cast<std::size_t>(idx)];
        const ComplexImage mx = magnitude_image(fp.solution);
        const ComplexImage mr = magnitude_image(truth);
        psnr_sum += psnr(mx, mr);
        const int win = std::min(7, std::min(data.height, data.width));
        ssim_sum += ssim(fp.solution, truth, win);
        ++val_count;
    }
    rec.val_psnr = val_count > 0 ? psnr_sum / val_count : 0.0;
    rec.val_ssim = val_count > 0 ? ssim_sum / val_count : 0.0;

    state.epoch += 1;
    state.history.push_back(rec);
    return state;
}

UnrolledResult unrolled_reference(const NetworkWeights& w, const LinearOperatorSpec& op,
                                  const Measurement& b, int unrolls,
                                  const ComplexImage& cotangent, const SolverConfig& cfg) {
    if (unrolls < 1) throw ParameterError("unrolled_reference: unrolls must be >= 1");
    validate_solver_config(cfg);
    const double alpha = effective_alpha(cfg);

    std::vector<ComplexImage> trajectory;
    trajectory.reserve(static_cast<std::size_t>(unrolls));
    ComplexImage x = apply_adjoint(op, b);
    for (int k = 0; k < unrolls; ++k) {
        trajectory.push_back(x);
        x = fb_step(x, w, op, b, cfg);
        if (!x.all_finite())
            throw NumericError("unrolled_reference: non-finite iterate at step " +
                               std::to_string(k));
    }

    UnrolledResult res;
    res.buffers_retained = static_cast<int>(trajectory.size());
    if (!x.same_shape(cotangent))
        throw DimensionError("unrolled_reference: cotangent shape mismatch");
    res.grad = zero_gradient(w);
    ComplexImage u(cotangent);
    for (int k = unrolls - 1; k >= 0; --k) {
        const ComplexImage& xk = trajectory[static_cast<std::size_t>(k)];
        ComplexImage qu = solve_q(op, u, alpha, cfg.lambda);
        {
            WeightGradient gw = h_vjp_params(w, xk, qu);
            grad_axpy(alpha, gw, res.grad);
        }
        if (k > 0) {
            ComplexImage next = h_vjp_input(w, xk, qu);
            scale(next, cdouble(alpha, 0.0));
            axpy(cdouble(1.0 - alpha, 0.0), qu, next);
            u = std::move(next);
        }
    }
    res.output = std::move(x);
    return res;
}

double psnr(const ComplexImage& x, const ComplexImage& ref) {
    check_same_shape(x, ref, "psnr");
    double peak = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) peak = std::max(peak, std::abs(ref[i]));
    if (peak == 0.0) throw ParameterError("psnr: reference image is zero");
    const double d = dist(x, ref);
    const double mse = d * d / static_cast<double>(ref.size());
    if (mse == 0.0) return 200.0;
    return std::min(10.0 * std::log10(peak * peak / mse), 200.0);
}

ComplexImage magnitude_image(const ComplexImage& x) {
    ComplexImage m(x.height(), x.width());
    for (std::size_t i = 0; i < x.size(); ++i) m[i] = cdouble(std::abs(x[i]), 0.0);
    return m;
}

double ssim(const ComplexImage& x, const ComplexImage& ref, int window, double k1, double k2) {
    check_same_shape(x, ref, "ssim");
    const int h = x.height();
    const int w = x.width();
    if (window < 1 || window > std::min(h, w))
        throw ParameterError("ssim: window must fit inside the image");
    std::vector<double> mx(x.size()), mr(x.size());
    double peak = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx[i] = std::abs(x[i]);
        mr[i] = std::abs(ref[i]);
        peak = std::max(peak, mr[i]);
    }
    const double level = peak > 0.0 ? peak : 1.0;
    const double c1 = (k1 * level) * (k1 * level);
    const double c2 = (k2 * level) * (k2 * level);
    const double n = static_cast<double>(window) * window;

    double total = 0.0;
    int positions = 0;
    for (int y = 0; y + window <= h; ++y) {
        for (int xx = 0; xx + window <= w; ++xx) {
            double sx = 0.0, sr = 0.0, sxx = 0.0, srr = 0.0, sxr = 0.0;
            for (int dy = 0; dy < window; ++dy) {
                for (int dx = 0; dx < window; ++dx) {
                    const double a = mx[static_cast<std::size_t>(y + dy) * w + xx + dx];
                    const double b = mr[static_cast<std::size_t>(y + dy) * w + xx + dx];
                    sx += a;
                    sr += b;
                    sxx += a * a;
                    srr += b * b;
                    sxr += a * b;
                }
            }
            const double ux = sx / n;
            const double ur = sr / n;
            const double vx = sxx / n - ux * ux;
            const double vr = srr / n - ur * ur;
            const double cov = sxr / n - ux * ur;
            total += ((2.0 * ux * ur + c1) * (2.0 * cov + c2)) /
                     ((ux * ux + ur * ur + c1) * (vx + vr + c2));
            ++positions;
        }
    }
    return total / positions;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,train_loss,val_psnr,val_ssim,mean_lip,mean_nfe,diverged_batches\n";
    for (const EpochRecord& r : history)
        out << r.epoch << ',' << r.train_loss << ',' << r.val_psnr << ',' << r.val_ssim << ','
            << r.mean_lip << ',' << r.mean_nfe << ',' << r.diverged_batches << '\n';
    return out.str();
}

}  // namespace mol
