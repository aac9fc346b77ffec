#include "mol/solver.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <ostream>

#include "mol/errors.hpp"

namespace mol {

SolverConfig pinned_alpha_config(double m, double lambda) {
    SolverConfig cfg;
    cfg.m = m;
    cfg.lambda = lambda;
    cfg.alpha = step_size_bound(m);
    cfg.strict_mode = false;
    return cfg;
}

double step_size_bound(double m) {
    if (!(m > 0.0 && m <= 1.0)) throw ParameterError("step_size_bound: m must lie in (0, 1]");
    return 2.0 * m / ((2.0 - m) * (2.0 - m));
}

double contraction_rate(double m, double alpha) {
    if (!(m > 0.0 && m <= 1.0)) throw ParameterError("contraction_rate: m must lie in (0, 1]");
    if (alpha < 0.0) throw ParameterError("contraction_rate: alpha must be non-negative");
    const double c = (2.0 - m) * (2.0 - m);
    const double radicand = 1.0 - 2.0 * alpha * m + alpha * alpha * c;
    if (radicand < -1e-12) throw ParameterError("contraction_rate: negative radicand");
    return std::sqrt(std::max(radicand, 0.0));
}

void validate_solver_config(const SolverConfig& cfg) {
    if (!(cfg.m > 0.0 && cfg.m <= 1.0)) throw ParameterError("solver config: m must lie in (0, 1]");
    if (cfg.lambda <= 0.0) throw ParameterError("solver config: lambda must be positive");
    if (cfg.alpha < 0.0) throw ParameterError("solver config: alpha must be non-negative");
    if (cfg.tol_fwd <= 0.0 || cfg.tol_bwd <= 0.0)
        throw ParameterError("solver config: tolerances must be positive");
    if (cfg.max_iter_fwd < 1 || cfg.max_iter_bwd < 1)
        throw ParameterError("solver config: iteration caps must be >= 1");
    if (cfg.anderson_depth < 0)
        throw ParameterError("solver config: anderson_depth must be non-negative");
    if (cfg.divergence_threshold <= 0.0)
        throw ParameterError("solver config: divergence_threshold must be positive");
    if (cfg.strict_mode && cfg.alpha > 0.0 && cfg.alpha >= step_size_bound(cfg.m))
        throw ParameterError("solver config: alpha at or above the step-size bound in strict mode");
}

double effective_alpha(const SolverConfig& cfg) {
    return cfg.alpha > 0.0 ? cfg.alpha : 0.99 * step_size_bound(cfg.m);
}

ComplexImage fb_step(const ComplexImage& x, const NetworkWeights& w,
                     const LinearOperatorSpec& op, const Measurement& b,
                     const SolverConfig& cfg) {
    const double alpha = effective_alpha(cfg);
    ComplexImage acc = h_forward(w, x);
    scale(acc, cdouble(alpha, 0.0));
    axpy(cdouble(1.0 - alpha, 0.0), x, acc);
    {
        ComplexImage adj = apply_adjoint(op, b);
        axpy(cdouble(alpha * cfg.lambda, 0.0), adj, acc);
    }
    return solve_q(op, acc, alpha, cfg.lambda);
}

namespace {

Eigen::VectorXd to_real_vec(const ComplexImage& x) {
    Eigen::VectorXd v(2 * static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        v(2 * static_cast<Eigen::Index>(i)) = x[i].real();
        v(2 * static_cast<Eigen::Index>(i) + 1) = x[i].imag();
    }
    return v;
}

}  // namespace

ComplexImage anderson_accelerate(const std::vector<AndersonPair>& history, int depth) {
    if (history.empty()) throw ParameterError("anderson_accelerate: empty history");
    if (depth < 1) throw ParameterError("anderson_accelerate: depth must be >= 1");
    const int m = std::min<int>(depth, static_cast<int>(history.size()));
    const std::size_t first = history.size() - static_cast<std::size_t>(m);
    const AndersonPair& last = history.back();
    if (m == 1) {
        ComplexImage next(last.x);
        axpy(cdouble(1.0, 0.0), last.g, next);
        return next;
    }
    const Eigen::Index dim = 2 * static_cast<Eigen::Index>(last.x.size());
    const int cols = m - 1;
    constexpr double kDamping = 1e-8;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim + cols, cols);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim + cols);
    for (int j = 0; j < cols; ++j) {
        const AndersonPair& p0 = history[first + static_cast<std::size_t>(j)];
        const AndersonPair& p1 = history[first + static_cast<std::size_t>(j) + 1];
        if (!p0.x.same_shape(last.x))
            throw DimensionError("anderson_accelerate: inconsistent history shapes");
        a.col(j).head(dim) = to_real_vec(p1.g) - to_real_vec(p0.g);
        a(dim + j, j) = std::sqrt(kDamping);
    }
    rhs.head(dim) = to_real_vec(last.g);
    Eigen::VectorXd gamma = a.colPivHouseholderQr().solve(rhs);
    if (!gamma.allFinite()) {
        ComplexImage next(last.x);
        axpy(cdouble(1.0, 0.0), last.g, next);
        return next;
    }
    ComplexImage next(last.x);
    axpy(cdouble(1.0, 0.0), last.g, next);
    for (int j = 0; j < cols; ++j) {
        const AndersonPair& p0 = history[first + static_cast<std::size_t>(j)];
        const AndersonPair& p1 = history[first + static_cast<std::size_t>(j) + 1];
        const cdouble gj(-gamma(j), 0.0);
        for (std::size_t i = 0; i < next.size(); ++i)
            next[i] += gj * ((p1.x[i] - p0.x[i]) + (p1.g[i] - p0.g[i]));
    }
    return next;
}

FixedPointResult solve_fixed_point(const NetworkWeights& w, const LinearOperatorSpec& op,
                                   const Measurement& b, const ComplexImage& x0,
                                   const SolverConfig& cfg) {
    validate_solver_config(cfg);
    if (x0.height() != op.domain_height() || x0.width() != op.domain_width())
        throw DimensionError("solve_fixed_point: x0 does not match operator domain");
    const auto t0 = std::chrono::steady_clock::now();
    FixedPointResult res;
    res.solution = x0;
    std::vector<AndersonPair> history;
    for (int k = 0; k < cfg.max_iter_fwd; ++k) {
        ComplexImage tx = fb_step(res.solution, w, op, b, cfg);
        if (!tx.all_finite())
            throw NumericError("solve_fixed_point: non-finite iterate at iteration " +
                               std::to_string(k));
        ComplexImage next;
        if (cfg.anderson_depth >= 1) {
            ComplexImage g(tx);
            axpy(cdouble(-1.0, 0.0), res.solution, g);
            history.push_back({res.solution, std::move(g)});
            if (static_cast<int>(history.size()) > cfg.anderson_depth)
                history.erase(history.begin());
            next = anderson_accelerate(history, cfg.anderson_depth);
            if (!next.all_finite())
                throw NumericError("solve_fixed_point: non-finite iterate at iteration " +
                                   std::to_string(k));
        } else {
            next = std::move(tx);
        }
        const double rel = dist(next, res.solution) / std::max(res.solution.norm(), 1.0);
        res.residual_trace.push_back(rel);
        res.nfe = k + 1;
        res.solution = std::move(next);
        if (cfg.trace_sink) {
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            *cfg.trace_sink << k << ',' << rel << ',' << secs << '\n';
        }
        if (res.solution.norm() > cfg.divergence_threshold) {
            res.diverged = true;
            break;
        }
        // The update norm alone is not enough: it scales the stationarity
        // residual by alpha*Q^{-1}, which for small steps hides a large
        // remaining gap. Converged means both the update and the residual are small.
        if (rel <= cfg.tol_fwd &&
            fixed_point_residual(res.solution, w, op, b, cfg.lambda) <= 10.0 * cfg.tol_fwd) {
            res.converged = true;
            break;
        }
    }
    return res;
}

FixedPointResult solve_fixed_point(const NetworkWeights& w, const LinearOperatorSpec& op,
                                   const Measurement& b, const SolverConfig& cfg) {
    return solve_fixed_point(w, op, b, apply_adjoint(op, b), cfg);
}

double fixed_point_residual(const ComplexImage& x, const NetworkWeights& w,
                            const LinearOperatorSpec& op, const Measurement& b, double lambda) {
    Measurement ax = apply_forward(op, x);
    if (ax.data.size() != b.data.size())
        throw DimensionError("fixed_point_residual: measurement shape mismatch");
    for (std::size_t i = 0; i < ax.data.size(); ++i) ax.data[i] -= b.data[i];
    ComplexImage r = apply_adjoint(op, ax);
    scale(r, cdouble(lambda, 0.0));
    axpy(cdouble(1.0, 0.0), x, r);
    {
        ComplexImage hx = h_forward(w, x);
        axpy(cdouble(-1.0, 0.0), hx, r);
    }
    return r.norm() / std::max(x.norm(), 1.0);
}

BackwardResult deq_backward(const NetworkWeights& w, const LinearOperatorSpec& op,
                            const Measurement& b, const ComplexImage& x_star,
                            const ComplexImage& cotangent, const SolverConfig& cfg) {
    validate_solver_config(cfg);
    if (!x_star.same_shape(cotangent))
        throw DimensionError("deq_backward: cotangent shape mismatch");
    const double fp_res = fixed_point_residual(x_star, w, op, b, cfg.lambda);
    if (fp_res > 10.0 * cfg.tol_fwd)
        throw SolverError("deq_backward: x_star is not a converged fixed point", fp_res);
    const double alpha = effective_alpha(cfg);

    // Neumann iteration for u = cot + (dT/dx)^T u at x_star, where
    // (dT/dx)^T v = (1-alpha) Q^{-1} v + alpha * h_vjp_input(w, x_star, Q^{-1} v)
    BackwardResult res;
    ComplexImage u(cotangent);
    for (int j = 1; j <= cfg.max_iter_bwd; ++j) {
        ComplexImage qv = solve_q(op, u, alpha, cfg.lambda);
        ComplexImage next = h_vjp_input(w, x_star, qv);
        scale(next, cdouble(alpha, 0.0));
        axpy(cdouble(1.0 - alpha, 0.0), qv, next);
        axpy(cdouble(1.0, 0.0), cotangent, next);
        if (!next.all_finite())
            throw NumericError("deq_backward: non-finite iterate at iteration " +
                               std::to_string(j));
        const double rel = dist(next, u) / std::max(u.norm(), 1.0);
        u = std::move(next);
        res.nbe = j;
        res.final_residual = rel;
        if (rel <= cfg.tol_bwd) break;
    }
    if (res.final_residual > cfg.tol_bwd)
        throw SolverError("deq_backward: backward iteration did not converge",
                          res.final_residual);
    ComplexImage qu = solve_q(op, u, alpha, cfg.lambda);
    res.grad = h_vjp_params(w, x_star, qu);
    grad_scale(res.grad, alpha);
    return res;
}

}  // namespace mol
