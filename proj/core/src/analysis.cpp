#include "mol/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mol/errors.hpp"
#include "mol/rng.hpp"

namespace mol {

namespace {

double ratio_at(const NetworkWeights& w, const ComplexImage& f_star, const ComplexImage& hf,
                const ComplexImage& eps) {
    ComplexImage shifted(f_star);
    axpy(cdouble(1.0, 0.0), eps, shifted);
    ComplexImage d = h_forward(w, shifted);
    axpy(cdouble(-1.0, 0.0), hf, d);
    const double en = dot_real(eps, eps);
    return en > 0.0 ? dot_real(d, d) / en : 0.0;
}

}  // namespace

LipschitzEstimate local_lipschitz(const NetworkWeights& w, const ComplexImage& f_star,
                                  int steps, double step_size, std::uint64_t seed) {
    if (steps < 1) throw ParameterError("local_lipschitz: steps must be >= 1");
    if (step_size <= 0.0) throw ParameterError("local_lipschitz: step_size must be positive");
    if (!f_star.all_finite()) throw NumericError("local_lipschitz: f_star is not finite");

    const double fnorm = f_star.norm();
    const double init_norm = 1e-2 * (fnorm > 1e-8 ? fnorm : 1.0);
    const double max_norm = 0.1 * (fnorm > 1e-8 ? fnorm : 1.0);

    ComplexImage hf = h_forward(w, f_star);
    ComplexImage eps = random_gaussian_image(f_star.height(), f_star.width(),
                                             mix_seed(seed, 0xa5ce));
    scale(eps, cdouble(init_norm / eps.norm(), 0.0));

    LipschitzEstimate best;
    best.ascent_steps = steps;
    best.value_squared = ratio_at(w, f_star, hf, eps);
    best.perturbation = eps;

    double step = step_size;
    for (int it = 0; it < steps; ++it) {
        // gradient of the ratio: (2/||eps||^2) J^T d - (2 ratio/||eps||^2) eps
        ComplexImage shifted(f_star);
        axpy(cdouble(1.0, 0.0), eps, shifted);
        ComplexImage d = h_forward(w, shifted);
        axpy(cdouble(-1.0, 0.0), hf, d);
        const double en = dot_real(eps, eps);
        if (en == 0.0) break;
        const double ratio = dot_real(d, d) / en;
        ComplexImage grad = h_vjp_input(w, shifted, d);
        axpy(cdouble(-ratio, 0.0), eps, grad);
        scale(grad, cdouble(2.0 / en, 0.0));
        const double gnorm = grad.norm();
        if (gnorm < 1e-16) break;

        ComplexImage cand(eps);
        axpy(cdouble(step * std::sqrt(en) / gnorm, 0.0), grad, cand);
        double cn = cand.norm();
        if (cn < 1e-8) {
            scale(cand, cdouble(cn > 0.0 ? init_norm / cn : 0.0, 0.0));
            if (cand.norm() == 0.0)
                cand = scaled(eps, cdouble(init_norm / std::sqrt(en), 0.0));
            cn = cand.norm();
        }
        if (cn > max_norm) {
            scale(cand, cdouble(max_norm / cn, 0.0));
        }
        const double cand_ratio = ratio_at(w, f_star, hf, cand);
        if (cand_ratio > best.value_squared) {
            best.value_squared = cand_ratio;
            best.perturbation = cand;
            eps = std::move(cand);
            step *= 1.5;
        } else {
            step *= 0.5;
            if (step < 1e-12) break;
        }
    }
    best.value = std::sqrt(best.value_squared);
    return best;
}

MonotoneEstimate monotone_margin(const NetworkWeights& w, int samples, std::uint64_t seed,
                                 const PairSampling& sampling) {
    if (samples < 2) throw ParameterError("monotone_margin: samples must be >= 2");
    if (sampling.height < 1 || sampling.width < 1)
        throw ParameterError("monotone_margin: bad sampling shape");

    MonotoneEstimate est;
    est.m_hat = std::numeric_limits<double>::infinity();
    const std::size_t kinds = sampling.anchors.empty() ? 1 : 2;
    for (int s = 0; s < samples; ++s) {
        const std::uint64_t ps = mix_seed(seed, static_cast<std::uint64_t>(s));
        ComplexImage x, y;
        if (kinds == 2 && s % 2 == 1) {
            const ComplexImage& anchor =
                sampling.anchors[static_cast<std::size_t>(s / 2) % sampling.anchors.size()];
            x = anchor;
            y = anchor;
            ComplexImage dx = random_gaussian_image(anchor.height(), anchor.width(),
                                                    mix_seed(ps, 1));
            ComplexImage dy = random_gaussian_image(anchor.height(), anchor.width(),
                                                    mix_seed(ps, 2));
            axpy(cdouble(sampling.anchor_spread, 0.0), dx, x);
            axpy(cdouble(sampling.anchor_spread, 0.0), dy, y);
        } else {
            x = random_gaussian_image(sampling.height, sampling.width, mix_seed(ps, 1));
            y = random_gaussian_image(sampling.height, sampling.width, mix_seed(ps, 2));
            scale(x, cdouble(sampling.amplitude, 0.0));
            scale(y, cdouble(sampling.amplitude, 0.0));
        }
        const ComplexImage diff = sub(x, y);
        const double dn = dot_real(diff, diff);
        if (dn < 1e-28) continue;  // degenerate pair
        ComplexImage fdiff(diff);
        {
            ComplexImage hx = h_forward(w, x);
            ComplexImage hy = h_forward(w, y);
            axpy(cdouble(-1.0, 0.0), hx, fdiff);
            axpy(cdouble(1.0, 0.0), hy, fdiff);
        }
        const double val = dot_real(diff, fdiff) / dn;
        ++est.num_pairs;
        if (val < est.m_hat) {
            est.m_hat = val;
            est.worst_pair = {x, y};
        }
    }
    if (est.num_pairs == 0) throw NumericError("monotone_margin: all sampled pairs degenerate");
    return est;
}

double robustness_bound(double alpha, double lambda, double m) {
    if (!(m > 0.0 && m <= 1.0)) throw ParameterError("robustness_bound: m must lie in (0, 1]");
    if (lambda <= 0.0) throw ParameterError("robustness_bound: lambda must be positive");
    if (alpha < 0.0) throw ParameterError("robustness_bound: alpha must be non-negative");
    const double bound = step_size_bound(m);
    if (alpha > bound) throw ParameterError("robustness_bound: alpha exceeds the step-size bound");
    // alpha*lambda/(1-r) = lambda*(1+r)/(2m - alpha*(2-m)^2), exact as alpha->0
    const double denom = 2.0 * m - alpha * (2.0 - m) * (2.0 - m);
    if (denom <= 0.0) return std::numeric_limits<double>::infinity();
    const double r = contraction_rate(m, alpha);
    return lambda * (1.0 + r) / denom;
}

RobustnessReport verify_robustness(const NetworkWeights& w, const LinearOperatorSpec& op,
                                   const Measurement& base_measurement, int trials,
                                   double perturb_scale, const SolverConfig& cfg,
                                   std::uint64_t seed) {
    if (trials < 1) throw ParameterError("verify_robustness: trials must be >= 1");
    if (perturb_scale < 0.0)
        throw ParameterError("verify_robustness: perturb_scale must be non-negative");
    validate_solver_config(cfg);

    FixedPointResult base = solve_fixed_point(w, op, base_measurement, cfg);
    if (!base.converged)
        throw SolverError("verify_robustness: solver did not converge on the base measurement",
                          base.residual_trace.empty() ? 0.0 : base.residual_trace.back());

    RobustnessReport report;
    report.trials = trials;
    {
        PairSampling sampling;
        sampling.height = op.domain_height();
        sampling.width = op.domain_width();
        sampling.amplitude = std::max(base.solution.norm() /
                                          std::sqrt(static_cast<double>(base.solution.size())),
                                      1e-3);
        sampling.anchors.push_back(base.solution);
        report.m_hat = monotone_margin(w, 200, mix_seed(seed, 0x33), sampling).m_hat;
    }
    const double alpha = effective_alpha(cfg);
    const double c = (2.0 - cfg.m) * (2.0 - cfg.m);
    if (report.m_hat <= 0.0 || 2.0 * report.m_hat - alpha * c <= 0.0 ||
        report.m_hat > 1.0) {
        report.bound_factor = std::numeric_limits<double>::infinity();
    } else {
        report.bound_factor = robustness_bound(alpha, cfg.lambda, report.m_hat);
    }

    const double bnorm = base_measurement.norm();
    for (int t = 0; t < trials; ++t) {
        Measurement pert = base_measurement;
        std::mt19937_64 rng(mix_seed(seed, 0x7000 + static_cast<std::uint64_t>(t)));
        std::normal_distribution<double> gauss(0.0, 1.0);
        double dn2 = 0.0;
        std::vector<cdouble> delta(pert.data.size());
        for (std::size_t i = 0; i < delta.size(); ++i) {
            delta[i] = cdouble(gauss(rng), gauss(rng));
            dn2 += std::norm(delta[i]);
        }
        const double target = perturb_scale * std::max(bnorm, 1e-12);
        const double dn = std::sqrt(dn2);
        if (dn == 0.0 || target == 0.0) {
            ++report.skipped_trials;
            continue;
        }
        const double s = target / dn;
        for (std::size_t i = 0; i < delta.size(); ++i) pert.data[i] += s * delta[i];

        FixedPointResult r = solve_fixed_point(w, op, pert, cfg);
        if (!r.converged) {
            ++report.nonconverged_trials;
            continue;
        }
        report.empirical_ratios.push_back(dist(r.solution, base.solution) / target);
    }
    for (double v : report.empirical_ratios) report.max_ratio = std::max(report.max_ratio, v);
    report.violated = report.max_ratio > report.bound_factor * (1.0 + 1e-6);
    return report;
}

std::string serialize_robustness_report(const RobustnessReport& report) {
    std::ostringstream out;
    out.precision(17);
    out << "bound_factor " << report.bound_factor << '\n';
    out << "m_hat " << report.m_hat << '\n';
    out << "max_ratio " << report.max_ratio << '\n';
    out << "violated " << (report.violated ? 1 : 0) << '\n';
    out << "trials " << report.trials << '\n';
    out << "skipped_trials " << report.skipped_trials << '\n';
    out << "nonconverged_trials " << report.nonconverged_trials << '\n';
    out << "ratios";
    for (double v : report.empirical_ratios) out << ' ' << v;
    out << '\n';
    return out.str();
}

}  // namespace mol
