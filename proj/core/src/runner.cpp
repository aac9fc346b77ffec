#include "mol/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "mol/analysis.hpp"
#include "mol/config.hpp"
#include "mol/errors.hpp"
#include "mol/manifest.hpp"
#include "mol/rng.hpp"
#include "mol/training.hpp"

namespace mol {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "1.0.0";

ExperimentConfig load_config(const RunOptions& opt) {
    ExperimentConfig cfg = parse_config_file(opt.config_path);
    if (opt.has_seed) {
        cfg.seed = opt.seed;
        cfg.training.seed = mix_seed(cfg.seed, 0x7121);
    }
    return cfg;
}

std::string echo_config(const ExperimentConfig& cfg, const std::string& out_dir) {
    const std::string text = serialize_config(cfg);
    std::ofstream out(fs::path(out_dir) / "config.json");
    if (!out) throw IoError("cannot write config echo in " + out_dir);
    out << text;
    return text;
}

int guarded(const char* command, const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        std::cerr << command << ": config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ParameterError& e) {
        std::cerr << command << ": config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DimensionError& e) {
        std::cerr << command << ": config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << command << ": config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const SolverError& e) {
        std::cerr << command << ": numeric failure: " << e.what()
                  << " (residual " << e.final_residual << ")\n";
        return kExitNumeric;
    } catch (const NumericError& e) {
        std::cerr << command << ": numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    }
}

NetworkWeights load_checkpoint_required(const RunOptions& opt) {
    if (opt.checkpoint.empty()) throw ConfigError("a --checkpoint path is required");
    if (!fs::exists(opt.checkpoint))
        throw ConfigError("checkpoint file not found: " + opt.checkpoint);
    return load_network(opt.checkpoint);
}

ComplexImage verify_phantom(const ExperimentConfig& cfg) {
    Dataset one = make_synthetic_dataset(1, cfg.dataset.height, cfg.dataset.width,
                                         cfg.dataset.phantom, 1.0, 0.0,
                                         mix_seed(cfg.seed, 0xda7a));
    return one.images.front();
}

cdouble measurement_dot(const Measurement& a, const Measurement& b) {
    cdouble s(0.0, 0.0);
    for (std::size_t i = 0; i < a.data.size(); ++i) s += std::conj(a.data[i]) * b.data[i];
    return s;
}

Measurement random_measurement(const MeasurementLayout& layout, std::uint64_t seed) {
    Measurement m;
    m.layout = layout;
    m.data.resize(layout.total());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (cdouble& v : m.data) v = cdouble(gauss(rng), gauss(rng));
    return m;
}

struct Check {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string detail;
};

void run_check(std::vector<Check>& checks, const std::string& name, double threshold,
               const std::function<double()>& measure, bool pass_below = true) {
    Check c;
    c.name = name;
    c.threshold = threshold;
    try {
        c.value = measure();
        c.pass = pass_below ? c.value <= threshold : c.value >= threshold;
    } catch (const Error& e) {
        c.value = std::numeric_limits<double>::quiet_NaN();
        c.pass = false;
        c.detail = e.what();
    }
    checks.push_back(std::move(c));
}

}  // namespace

int run_train(const RunOptions& opt) {
    return guarded("train", [&]() -> int {
        const std::string started = iso_timestamp_now();
        ExperimentConfig cfg = load_config(opt);
        fs::create_directories(opt.out_dir);
        const std::string config_json = echo_config(cfg, opt.out_dir);

        Dataset data = make_synthetic_dataset(cfg.dataset.count, cfg.dataset.height,
                                              cfg.dataset.width, cfg.dataset.phantom,
                                              cfg.dataset.acceleration, cfg.dataset.noise_sigma,
                                              mix_seed(cfg.seed, 0xda7a));
        TrainState state;
        if (opt.checkpoint.empty()) {
            // fresh nets start inside the monotone region so the first epoch's
            // fixed-point solves converge in every mode
            state.weights = spectral_normalize(
                init_weights(cfg.network, mix_seed(cfg.seed, 0x1417)),
                1.0 - cfg.training.m_target, 50);
        } else {
            state.weights = load_checkpoint_required(opt);
        }

        std::vector<std::string> files = {"config.json", "checkpoint_init.molnet"};
        save_network((fs::path(opt.out_dir) / "checkpoint_init.molnet").string(), state.weights);

        for (int e = 1; e <= cfg.training.epochs; ++e) {
            state = train_epoch(std::move(state), data, cfg.solver, cfg.training);
            if (cfg.checkpoint_every > 0 && e % cfg.checkpoint_every == 0 &&
                e != cfg.training.epochs) {
                const std::string name = "checkpoint_epoch_" + std::to_string(e) + ".molnet";
                save_network((fs::path(opt.out_dir) / name).string(), state.weights);
                files.push_back(name);
            }
        }
        if (cfg.training.epochs > 0) {
            save_network((fs::path(opt.out_dir) / "checkpoint_final.molnet").string(),
                         state.weights);
            files.push_back("checkpoint_final.molnet");
            std::ofstream hist(fs::path(opt.out_dir) / "history.csv");
            if (!hist) throw IoError("cannot write history.csv in " + opt.out_dir);
            hist << history_csv(state.history);
            hist.close();
            files.push_back("history.csv");
        }

        RunManifest manifest;
        manifest.command = "train";
        manifest.config_json = config_json;
        manifest.started_at = started;
        manifest.finished_at = iso_timestamp_now();
        manifest.version = kVersion;
        for (const std::string& f : files)
            manifest.files.push_back(manifest_entry_for(opt.out_dir, f));
        write_manifest(opt.out_dir, manifest);
        return kExitOk;
    });
}

int run_reconstruct(const RunOptions& opt) {
    return guarded("reconstruct", [&]() -> int {
        const std::string started = iso_timestamp_now();
        ExperimentConfig cfg = load_config(opt);
        fs::create_directories(opt.out_dir);
        const std::string config_json = echo_config(cfg, opt.out_dir);
        NetworkWeights weights = load_checkpoint_required(opt);
        LinearOperatorSpec op = build_operator(cfg, cfg.seed);
        const MeasurementLayout layout = op.range_layout();

        if (cfg.reconstruct.measurements.empty())
            throw ConfigError("reconstruct.measurements: no measurement files given");
        if (!cfg.reconstruct.ground_truth.empty() &&
            cfg.reconstruct.ground_truth.size() != cfg.reconstruct.measurements.size())
            throw ConfigError("reconstruct.ground_truth: list must match measurements");

        std::vector<std::string> files = {"config.json"};
        json records = json::array();
        int ok_count = 0;
        for (std::size_t i = 0; i < cfg.reconstruct.measurements.size(); ++i) {
            const std::string& path = cfg.reconstruct.measurements[i];
            const ComplexImage raw = read_image(path);
            if (raw.height() != layout.coils || raw.width() != layout.samples_per_coil)
                throw DimensionError(path + ": measurement shape does not match the operator (" +
                                     std::to_string(layout.coils) + "x" +
                                     std::to_string(layout.samples_per_coil) + " expected)");
            Measurement b;
            b.layout = layout;
            b.data = raw.data();

            json rec;
            rec["input"] = path;
            try {
                FixedPointResult fp = solve_fixed_point(weights, op, b, cfg.solver);
                const std::string out_name = "recon_" + std::to_string(i) + ".molimg";
                write_image((fs::path(opt.out_dir) / out_name).string(), fp.solution);
                files.push_back(out_name);
                rec["output"] = out_name;
                rec["nfe"] = fp.nfe;
                rec["converged"] = fp.converged;
                rec["diverged"] = fp.diverged;
                rec["residual"] =
                    fp.residual_trace.empty() ? 0.0 : fp.residual_trace.back();
                rec["fixed_point_residual"] =
                    fixed_point_residual(fp.solution, weights, op, b, cfg.solver.lambda);
                if (!cfg.reconstruct.ground_truth.empty()) {
                    const ComplexImage truth = read_image(cfg.reconstruct.ground_truth[i]);
                    rec["psnr"] = psnr(magnitude_image(fp.solution), magnitude_image(truth));
                    const int win = std::min(7, std::min(truth.height(), truth.width()));
                    rec["ssim"] = ssim(fp.solution, truth, win);
                }
                if (fp.converged) ++ok_count;
            } catch (const NumericError& e) {
                rec["converged"] = false;
                rec["diverged"] = true;
                rec["error"] = e.what();
            }
            records.push_back(std::move(rec));
        }
        {
            std::ofstream out(fs::path(opt.out_dir) / "results.json");
            if (!out) throw IoError("cannot write results.json in " + opt.out_dir);
            out << records.dump(2) << '\n';
        }
        files.push_back("results.json");

        RunManifest manifest;
        manifest.command = "reconstruct";
        manifest.config_json = config_json;
        manifest.started_at = started;
        manifest.finished_at = iso_timestamp_now();
        manifest.version = kVersion;
        for (const std::string& f : files)
            manifest.files.push_back(manifest_entry_for(opt.out_dir, f));
        write_manifest(opt.out_dir, manifest);
        return ok_count > 0 ? kExitOk : kExitNumeric;
    });
}

int run_verify(const RunOptions& opt) {
    return guarded("verify", [&]() -> int {
        const std::string started = iso_timestamp_now();
        ExperimentConfig cfg = load_config(opt);
        fs::create_directories(opt.out_dir);
        const std::string config_json = echo_config(cfg, opt.out_dir);
        NetworkWeights weights = load_checkpoint_required(opt);
        LinearOperatorSpec op = build_operator(cfg, cfg.seed);
        const ComplexImage truth = verify_phantom(cfg);
        const Measurement b = apply_forward(op, truth);
        const double alpha = effective_alpha(cfg.solver);

        std::vector<Check> checks;

        run_check(checks, "adjoint_identity", 1e-10, [&]() {
            double worst = 0.0;
            for (int t = 0; t < 3; ++t) {
                const ComplexImage x = random_gaussian_image(op.domain_height(), op.domain_width(),
                                                             mix_seed(cfg.seed, 0xad70 + t));
                const Measurement y =
                    random_measurement(op.range_layout(), mix_seed(cfg.seed, 0xad90 + t));
                const Measurement ax = apply_forward(op, x);
                const ComplexImage aty = apply_adjoint(op, y);
                const cdouble lhs = measurement_dot(ax, y);
                const cdouble rhs = dot(x, aty);
                const double scale_term =
                    ax.norm() * y.norm() + x.norm() * aty.norm() + 1.0;
                worst = std::max(worst, std::abs(lhs - rhs) / scale_term);
            }
            return worst;
        });

        run_check(checks, "q_solve_roundtrip", 1e-8, [&]() {
            double worst = 0.0;
            for (int t = 0; t < 3; ++t) {
                const ComplexImage y = random_gaussian_image(op.domain_height(), op.domain_width(),
                                                             mix_seed(cfg.seed, 0x1500 + t));
                const ComplexImage z = solve_q(op, y, alpha, cfg.solver.lambda);
                const ComplexImage back = apply_q(op, z, alpha, cfg.solver.lambda);
                worst = std::max(worst, dist(back, y) / std::max(y.norm(), 1.0));
            }
            return worst;
        });

        FixedPointResult fp;
        bool solved = false;
        run_check(checks, "contraction_decay",
                  contraction_rate(cfg.solver.m, std::min(alpha, step_size_bound(cfg.solver.m))) +
                      0.05,
                  [&]() {
                      fp = solve_fixed_point(weights, op, b, cfg.solver);
                      solved = fp.converged;
                      if (!fp.converged)
                          throw SolverError("solver did not converge",
                                            fp.residual_trace.empty() ? 0.0
                                                                      : fp.residual_trace.back());
                      double worst = 0.0;
                      for (std::size_t k = 3; k + 1 < fp.residual_trace.size(); ++k) {
                          if (fp.residual_trace[k] <= 0.0) continue;
                          worst = std::max(worst,
                                           fp.residual_trace[k + 1] / fp.residual_trace[k]);
                      }
                      return worst;
                  });

        run_check(checks, "fixed_point_residual", 10.0 * cfg.solver.tol_fwd, [&]() {
            if (!solved) throw SolverError("no converged fixed point", 0.0);
            return fixed_point_residual(fp.solution, weights, op, b, cfg.solver.lambda);
        });

        run_check(checks, "monotone_margin", cfg.solver.m - 0.02, [&]() {
            PairSampling sampling;
            sampling.height = op.domain_height();
            sampling.width = op.domain_width();
            sampling.amplitude = 1.0;
            if (solved) sampling.anchors.push_back(fp.solution);
            return monotone_margin(weights, cfg.analysis.monotone_samples,
                                   mix_seed(cfg.seed, 0x303), sampling)
                .m_hat;
        }, false);

        run_check(checks, "robustness_bound", 0.5, [&]() {
            RobustnessReport rep =
                verify_robustness(weights, op, b, cfg.analysis.trials,
                                  cfg.analysis.perturb_scale, cfg.solver,
                                  mix_seed(cfg.seed, 0x0b));
            std::ofstream out(fs::path(opt.out_dir) / "robustness.txt");
            out << serialize_robustness_report(rep);
            return rep.violated ? 1.0 : 0.0;
        });

        run_check(checks, "lipschitz_cross_check", 1e-3, [&]() {
            const double global = global_lipschitz_bound(weights, 60, mix_seed(cfg.seed, 0x91));
            double worst = -std::numeric_limits<double>::infinity();
            for (int p = 0; p < cfg.analysis.lip_points; ++p) {
                ComplexImage at = solved && p == 0
                                      ? fp.solution
                                      : random_gaussian_image(op.domain_height(),
                                                              op.domain_width(),
                                                              mix_seed(cfg.seed, 0x11900 + p));
                const LipschitzEstimate est =
                    local_lipschitz(weights, at, cfg.analysis.lip_steps, 1.0,
                                    mix_seed(cfg.seed, 0x11a00 + p));
                worst = std::max(worst, est.value - global);
            }
            return worst;
        });

        run_check(checks, "implicit_gradient_fd", 1e-3, [&]() {
            if (!solved) throw SolverError("no converged fixed point", 0.0);
            SolverConfig tight = cfg.solver;
            tight.tol_fwd = std::min(cfg.solver.tol_fwd, 1e-11);
            tight.max_iter_fwd = std::max(cfg.solver.max_iter_fwd, 2000);
            FixedPointResult base = solve_fixed_point(weights, op, b, tight);
            if (!base.converged) throw SolverError("tight solve did not converge", 0.0);
            ComplexImage cot(base.solution);
            axpy(cdouble(-1.0, 0.0), truth, cot);
            scale(cot, cdouble(2.0, 0.0));
            const WeightGradient grad = deq_backward(weights, op, b, base.solution, cot, tight).grad;

            std::mt19937_64 rng(mix_seed(cfg.seed, 0xfd));
            double worst = 0.0;
            for (int s = 0; s < 5; ++s) {
                const std::size_t layer =
                    std::uniform_int_distribution<std::size_t>(0, weights.layers.size() - 1)(rng);
                const Eigen::Index ix = std::uniform_int_distribution<Eigen::Index>(
                    0, weights.layers[layer].kernel.size() - 1)(rng);
                const double orig = weights.layers[layer].kernel.data()[ix];
                const double h = 1e-5 * std::max(1.0, std::abs(orig));
                auto eval = [&](double v) {
                    NetworkWeights wv = weights;
                    wv.layers[layer].kernel.data()[ix] = v;
                    const FixedPointResult r = solve_fixed_point(wv, op, b, tight);
                    if (!r.converged) throw SolverError("fd solve did not converge", 0.0);
                    const double d = dist(r.solution, truth);
                    return d * d;
                };
                const double fd = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
                const double an = grad.kernels[layer](ix);
                worst = std::max(worst,
                                 std::abs(fd - an) / std::max(std::abs(fd) + std::abs(an), 1e-6));
            }
            return worst;
        });

        json report;
        json jchecks = json::array();
        int failures = 0;
        for (const Check& c : checks) {
            if (!c.pass) ++failures;
            json jc = {{"name", c.name},
                       {"pass", c.pass},
                       {"value", std::isfinite(c.value) ? json(c.value) : json(nullptr)},
                       {"threshold", c.threshold}};
            if (!c.detail.empty()) jc["detail"] = c.detail;
            jchecks.push_back(std::move(jc));
        }
        report["checks"] = jchecks;
        report["failures"] = failures;
        {
            std::ofstream out(fs::path(opt.out_dir) / "report.json");
            if (!out) throw IoError("cannot write report.json in " + opt.out_dir);
            out << report.dump(2) << '\n';
        }

        RunManifest manifest;
        manifest.command = "verify";
        manifest.config_json = config_json;
        manifest.started_at = started;
        manifest.finished_at = iso_timestamp_now();
        manifest.version = kVersion;
        for (const char* f : {"config.json", "report.json", "robustness.txt"})
            if (fs::exists(fs::path(opt.out_dir) / f))
                manifest.files.push_back(manifest_entry_for(opt.out_dir, f));
        write_manifest(opt.out_dir, manifest);
        return failures == 0 ? kExitOk : kExitVerification;
    });
}

int run_bench(const RunOptions& opt) {
    return guarded("bench", [&]() -> int {
        const std::string started = iso_timestamp_now();
        ExperimentConfig cfg = load_config(opt);
        fs::create_directories(opt.out_dir);
        const std::string config_json = echo_config(cfg, opt.out_dir);
        NetworkWeights weights = load_checkpoint_required(opt);
        LinearOperatorSpec op = build_operator(cfg, cfg.seed);

        std::ostringstream csv;
        csv.precision(17);
        csv << "mode,unrolls,buffers,seconds,nfe\n";

        ComplexImage truth;
        Measurement b0;
        for (int rep = 0; rep < 4; ++rep) {
            Dataset one = make_synthetic_dataset(1, cfg.dataset.height, cfg.dataset.width,
                                                 cfg.dataset.phantom, 1.0, 0.0,
                                                 mix_seed(cfg.seed, 0xbe0 + rep));
            const Measurement b = apply_forward(op, one.images.front());
            if (rep == 0) {
                truth = one.images.front();
                b0 = b;
            }
            const auto t0 = std::chrono::steady_clock::now();
            const FixedPointResult fp = solve_fixed_point(weights, op, b, cfg.solver);
            if (!fp.converged)
                throw SolverError("bench: forward solve did not converge",
                                  fp.residual_trace.empty() ? 0.0 : fp.residual_trace.back());
            ComplexImage cot(fp.solution);
            axpy(cdouble(-1.0, 0.0), one.images.front(), cot);
            scale(cot, cdouble(2.0, 0.0));
            const BackwardResult bw = deq_backward(weights, op, b, fp.solution, cot, cfg.solver);
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            csv << "deq," << rep << ',' << bw.retained_buffers << ',' << secs << ','
                << fp.nfe << '\n';
        }

        const FixedPointResult fp0 = solve_fixed_point(weights, op, b0, cfg.solver);
        ComplexImage cot(fp0.solution);
        axpy(cdouble(-1.0, 0.0), truth, cot);
        scale(cot, cdouble(2.0, 0.0));
        for (int u : {1, 2, 5, 10}) {
            const auto t0 = std::chrono::steady_clock::now();
            const UnrolledResult ur = unrolled_reference(weights, op, b0, u, cot, cfg.solver);
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            csv << "unrolled," << u << ',' << ur.buffers_retained << ',' << secs << ',' << u
                << '\n';
        }

        {
            std::ofstream out(fs::path(opt.out_dir) / "bench.csv");
            if (!out) throw IoError("cannot write bench.csv in " + opt.out_dir);
            out << csv.str();
        }

        RunManifest manifest;
        manifest.command = "bench";
        manifest.config_json = config_json;
        manifest.started_at = started;
        manifest.finished_at = iso_timestamp_now();
        manifest.version = kVersion;
        for (const char* f : {"config.json", "bench.csv"})
            manifest.files.push_back(manifest_entry_for(opt.out_dir, f));
        write_manifest(opt.out_dir, manifest);
        return kExitOk;
    });
}

}  // namespace mol
