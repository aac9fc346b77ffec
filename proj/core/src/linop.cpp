#include "mol/linop.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mol/errors.hpp"
#include "mol/fft.hpp"
#include "mol/rng.hpp"

namespace mol {

namespace {

std::vector<int> collect_sampled(const MaskSpec& mask) {
    std::vector<int> idx;
    idx.reserve(mask.pattern.size());
    for (int i = 0; i < static_cast<int>(mask.pattern.size()); ++i)
        if (mask.pattern[static_cast<std::size_t>(i)]) idx.push_back(i);
    return idx;
}

void check_domain(const LinearOperatorSpec& op, const ComplexImage& x, const char* where) {
    if (x.height() != op.domain_height() || x.width() != op.domain_width())
        throw DimensionError(std::string(where) + ": image does not match operator domain");
}

void check_range(const LinearOperatorSpec& op, const Measurement& y, const char* where) {
    if (!(y.layout == op.range_layout()) || y.data.size() != y.layout.total())
        throw DimensionError(std::string(where) + ": measurement does not match operator range");
}

using VecMap = Eigen::Map<const Eigen::VectorXcd>;

}  // namespace

CoilSet make_synthetic_coils(int coils, int height, int width, std::uint64_t seed) {
    if (coils < 1) throw ParameterError("make_synthetic_coils: coils must be >= 1");
    if (height < 1 || width < 1) throw ParameterError("make_synthetic_coils: bad shape");
    CoilSet set;
    set.coils = coils;
    set.height = height;
    set.width = width;
    set.maps.assign(static_cast<std::size_t>(coils),
                    std::vector<cdouble>(static_cast<std::size_t>(height) * width));

    std::mt19937_64 rng(mix_seed(seed, 0xc011));
    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    const double sigma = 0.6 * std::min(height, width);
    for (int c = 0; c < coils; ++c) {
        const double theta = 2.0 * M_PI * c / coils + jitter(rng);
        const double cy = 0.5 * height + 0.45 * height * std::sin(theta);
        const double cx = 0.5 * width + 0.45 * width * std::cos(theta);
        const double py = jitter(rng) * 2.0 * M_PI / height;
        const double px = jitter(rng) * 2.0 * M_PI / width;
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                const double mag = std::exp(-d2 / (2.0 * sigma * sigma));
                const double phase = py * y + px * x;
                set.maps[static_cast<std::size_t>(c)][static_cast<std::size_t>(y) * width + x] =
                    mag * cdouble(std::cos(phase), std::sin(phase));
            }
        }
    }
    // pointwise sum of squared magnitudes -> 1
    for (int i = 0; i < height * width; ++i) {
        double sos = 0.0;
        for (int c = 0; c < coils; ++c) sos += std::norm(set.maps[c][i]);
        const double inv = 1.0 / std::sqrt(sos);
        for (int c = 0; c < coils; ++c) set.maps[c][i] *= inv;
    }
    return set;
}

LinearOperatorSpec LinearOperatorSpec::identity(int height, int width) {
    if (height < 1 || width < 1) throw ParameterError("identity: bad shape");
    LinearOperatorSpec op;
    op.kind_ = OperatorKind::Identity;
    op.domain_h_ = height;
    op.domain_w_ = width;
    return op;
}

LinearOperatorSpec LinearOperatorSpec::masked_fourier(MaskSpec mask) {
    if (mask.height < 1 || mask.width < 1 ||
        mask.pattern.size() != static_cast<std::size_t>(mask.height) * mask.width)
        throw ParameterError("masked_fourier: inconsistent mask");
    LinearOperatorSpec op;
    op.kind_ = OperatorKind::MaskedFourier;
    op.domain_h_ = mask.height;
    op.domain_w_ = mask.width;
    op.mask_ = std::move(mask);
    op.sampled_ = collect_sampled(op.mask_);
    return op;
}

LinearOperatorSpec LinearOperatorSpec::dense_gaussian(int rows, int height, int width,
                                                      std::uint64_t seed) {
    if (rows < 1 || height < 1 || width < 1) throw ParameterError("dense_gaussian: bad shape");
    const int n = height * width;
    LinearOperatorSpec op;
    op.kind_ = OperatorKind::DenseGaussian;
    op.domain_h_ = height;
    op.domain_w_ = width;
    op.matrix_.resize(rows, n);
    std::mt19937_64 rng(mix_seed(seed, 0xde6a));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < n; ++c) op.matrix_(r, c) = cdouble(gauss(rng), gauss(rng));

    // power-iterate A^H A to find the top singular value, then scale to norm 1
    Eigen::VectorXcd v(n);
    for (int c = 0; c < n; ++c) v(c) = cdouble(gauss(rng), gauss(rng));
    v.normalize();
    double rho = 0.0;
    for (int it = 0; it < 2000; ++it) {
        Eigen::VectorXcd w = op.matrix_.adjoint() * (op.matrix_ * v);
        const double next = std::real(v.dot(w));
        const double wn = w.norm();
        if (wn == 0.0) break;
        v = w / wn;
        if (it > 4 && std::abs(next - rho) <= 1e-13 * std::max(1.0, next)) {
            rho = next;
            break;
        }
        rho = next;
    }
    const double sigma = std::sqrt(std::max(rho, 0.0));
    op.normalization_ = sigma > 0.0 ? 1.0 / (sigma * (1.0 + 1e-9)) : 1.0;
    op.matrix_ *= op.normalization_;
    return op;
}

LinearOperatorSpec LinearOperatorSpec::multi_coil_masked_fourier(MaskSpec mask, CoilSet coils) {
    if (coils.height != mask.height || coils.width != mask.width)
        throw ParameterError("multi_coil_masked_fourier: coil/mask shape mismatch");
    if (coils.coils < 1 || coils.maps.size() != static_cast<std::size_t>(coils.coils))
        throw ParameterError("multi_coil_masked_fourier: bad coil set");
    LinearOperatorSpec op;
    op.kind_ = OperatorKind::MultiCoilMaskedFourier;
    op.domain_h_ = mask.height;
    op.domain_w_ = mask.width;
    op.mask_ = std::move(mask);
    op.coils_ = std::move(coils);
    op.sampled_ = collect_sampled(op.mask_);
    return op;
}

MeasurementLayout LinearOperatorSpec::range_layout() const {
    MeasurementLayout layout;
    layout.domain_height = domain_h_;
    layout.domain_width = domain_w_;
    switch (kind_) {
        case OperatorKind::Identity:
            layout.coils = 1;
            layout.samples_per_coil = domain_h_ * domain_w_;
            break;
        case OperatorKind::MaskedFourier:
            layout.coils = 1;
            layout.samples_per_coil = static_cast<int>(sampled_.size());
            break;
        case OperatorKind::DenseGaussian:
            layout.coils = 1;
            layout.samples_per_coil = static_cast<int>(matrix_.rows());
            break;
        case OperatorKind::MultiCoilMaskedFourier:
            layout.coils = coils_.coils;
            layout.samples_per_coil = static_cast<int>(sampled_.size());
            break;
    }
    return layout;
}

Measurement apply_forward(const LinearOperatorSpec& op, const ComplexImage& x) {
    check_domain(op, x, "apply_forward");
    Measurement y;
    y.layout = op.range_layout();
    y.data.resize(y.layout.total());
    switch (op.kind()) {
        case OperatorKind::Identity: {
            std::copy(x.data().begin(), x.data().end(), y.data.begin());
            break;
        }
        case OperatorKind::MaskedFourier: {
            ComplexImage spec = fft2(x);
            const auto& idx = op.sampled_indices();
            for (std::size_t j = 0; j < idx.size(); ++j)
                y.data[j] = spec[static_cast<std::size_t>(idx[j])];
            break;
        }
        case OperatorKind::DenseGaussian: {
            VecMap xv(x.data().data(), static_cast<Eigen::Index>(x.size()));
            Eigen::VectorXcd out = op.matrix() * xv;
            for (Eigen::Index i = 0; i < out.size(); ++i)
                y.data[static_cast<std::size_t>(i)] = out(i);
            break;
        }
        case OperatorKind::MultiCoilMaskedFourier: {
            const auto& idx = op.sampled_indices();
            ComplexImage weighted(x.height(), x.width());
            for (int c = 0; c < op.coils().coils; ++c) {
                const auto& map = op.coils().maps[static_cast<std::size_t>(c)];
                for (std::size_t i = 0; i < x.size(); ++i) weighted[i] = map[i] * x[i];
                ComplexImage spec = fft2(weighted);
                const std::size_t base = static_cast<std::size_t>(c) * idx.size();
                for (std::size_t j = 0; j < idx.size(); ++j)
                    y.data[base + j] = spec[static_cast<std::size_t>(idx[j])];
            }
            break;
        }
    }
    return y;
}

ComplexImage apply_adjoint(const LinearOperatorSpec& op, const Measurement& y) {
    check_range(op, y, "apply_adjoint");
    ComplexImage x(op.domain_height(), op.domain_width());
    switch (op.kind()) {
        case OperatorKind::Identity: {
            std::copy(y.data.begin(), y.data.end(), x.data().begin());
            break;
        }
        case OperatorKind::MaskedFourier: {
            ComplexImage grid(op.domain_height(), op.domain_width());
            const auto& idx = op.sampled_indices();
            for (std::size_t j = 0; j < idx.size(); ++j)
                grid[static_cast<std::size_t>(idx[j])] = y.data[j];
            x = ifft2(grid);
            break;
        }
        case OperatorKind::DenseGaussian: {
            VecMap yv(y.data.data(), static_cast<Eigen::Index>(y.data.size()));
            Eigen::VectorXcd out = op.matrix().adjoint() * yv;
            for (Eigen::Index i = 0; i < out.size(); ++i) x[static_cast<std::size_t>(i)] = out(i);
            break;
        }
        case OperatorKind::MultiCoilMaskedFourier: {
            const auto& idx = op.sampled_indices();
            ComplexImage grid(op.domain_height(), op.domain_width());
            for (int c = 0; c < op.coils().coils; ++c) {
                std::fill(grid.data().begin(), grid.data().end(), cdouble(0.0, 0.0));
                const std::size_t base = static_cast<std::size_t>(c) * idx.size();
                for (std::size_t j = 0; j < idx.size(); ++j)
                    grid[static_cast<std::size_t>(idx[j])] = y.data[base + j];
                ComplexImage img = ifft2(grid);
                const auto& map = op.coils().maps[static_cast<std::size_t>(c)];
                for (std::size_t i = 0; i < x.size(); ++i) x[i] += std::conj(map[i]) * img[i];
            }
            break;
        }
    }
    return x;
}

ComplexImage gram(const LinearOperatorSpec& op, const ComplexImage& x) {
    check_domain(op, x, "gram");
    return apply_adjoint(op, apply_forward(op, x));
}

ComplexImage apply_q(const LinearOperatorSpec& op, const ComplexImage& y, double alpha,
                     double lambda) {
    check_domain(op, y, "apply_q");
    ComplexImage out = gram(op, y);
    scale(out, cdouble(alpha * lambda, 0.0));
    axpy(cdouble(1.0, 0.0), y, out);
    return out;
}

namespace {

constexpr double kCgTol = 1e-10;
constexpr int kCgMaxIter = 200;

ComplexImage solve_q_cg(const LinearOperatorSpec& op, const ComplexImage& y, double mu) {
    // CG on (I + mu*A^H A) z = y; the operator is Hermitian with spectrum in
    // [1, 1+mu], so this converges quickly.
    const double ynorm = y.norm();
    if (ynorm == 0.0) return ComplexImage(y.height(), y.width());
    ComplexImage z(y.height(), y.width());
    ComplexImage r(y);
    ComplexImage p(r);
    double rr = dot_real(r, r);
    for (int it = 0; it < kCgMaxIter; ++it) {
        ComplexImage qp = gram(op, p);
        scale(qp, cdouble(mu, 0.0));
        axpy(cdouble(1.0, 0.0), p, qp);
        const double p_qp = dot_real(p, qp);
        if (p_qp <= 0.0) throw SolverError("solve_q: lost positive definiteness", std::sqrt(rr));
        const double a = rr / p_qp;
        axpy(cdouble(a, 0.0), p, z);
        axpy(cdouble(-a, 0.0), qp, r);
        const double rr_next = dot_real(r, r);
        if (std::sqrt(rr_next) <= kCgTol * ynorm) return z;
        const double beta = rr_next / rr;
        rr = rr_next;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
    }
    throw SolverError("solve_q: conjugate gradients did not converge",
                      std::sqrt(rr) / ynorm);
}

}  // namespace

ComplexImage solve_q(const LinearOperatorSpec& op, const ComplexImage& y, double alpha,
                     double lambda) {
    check_domain(op, y, "solve_q");
    if (alpha < 0.0 || lambda < 0.0)
        throw ParameterError("solve_q: alpha and lambda must be non-negative");
    const double mu = alpha * lambda;
    if (mu == 0.0) return y;
    switch (op.kind()) {
        case OperatorKind::Identity: {
            ComplexImage z(y);
            scale(z, cdouble(1.0 / (1.0 + mu), 0.0));
            return z;
        }
        case OperatorKind::MaskedFourier: {
            // A^H A is diagonal in the Fourier basis with entries in {0, 1}
            ComplexImage spec = fft2(y);
            const auto& pat = op.mask().pattern;
            for (std::size_t i = 0; i < spec.size(); ++i)
                if (pat[i]) spec[i] /= (1.0 + mu);
            return ifft2(spec);
        }
        case OperatorKind::DenseGaussian:
        case OperatorKind::MultiCoilMaskedFourier:
            return solve_q_cg(op, y, mu);
    }
    throw ParameterError("solve_q: unknown operator kind");
}

double spectral_norm_estimate(const LinearOperatorSpec& op, int iters, std::uint64_t seed) {
    if (iters < 1) throw ParameterError("spectral_norm_estimate: iters must be >= 1");
    ComplexImage v = random_gaussian_image(op.domain_height(), op.domain_width(),
                                           mix_seed(seed, 0x5bec));
    const double vn = v.norm();
    if (vn == 0.0) return 0.0;
    scale(v, cdouble(1.0 / vn, 0.0));
    double rho = 0.0;
    for (int it = 0; it < iters; ++it) {
        ComplexImage w = gram(op, v);
        rho = dot_real(v, w);
        const double wn = w.norm();
        if (wn == 0.0) return 0.0;
        scale(w, cdouble(1.0 / wn, 0.0));
        v = std::move(w);
    }
    return std::sqrt(std::max(rho, 0.0));
}

MaskSpec make_mask(int height, int width, double acceleration, double density_decay,
                   std::uint64_t seed) {
    if (height < 1 || width < 1) throw ParameterError("make_mask: bad shape");
    if (acceleration < 1.0) throw ParameterError("make_mask: acceleration must be >= 1");
    if (density_decay <= 0.0) throw ParameterError("make_mask: density_decay must be positive");
    const int n = height * width;
    const int target = static_cast<int>(std::llround(n / acceleration));
    if (target < 1) throw ParameterError("make_mask: acceleration exceeds grid capacity");

    MaskSpec mask;
    mask.height = height;
    mask.width = width;
    mask.acceleration = acceleration;
    mask.seed = seed;
    mask.pattern.assign(static_cast<std::size_t>(n), 0);

    if (target >= n) {
        std::fill(mask.pattern.begin(), mask.pattern.end(), 1);
        return mask;
    }

    // signed frequency index, DC at 0
    auto signed_freq = [](int i, int extent) { return i <= extent / 2 ? i : i - extent; };
    auto in_center = [&](int y, int x) {
        const int cy = signed_freq(y, height);
        const int cx = signed_freq(x, width);
        return cy >= -2 && cy <= 1 && cx >= -2 && cx <= 1;
    };

    int center_count = 0;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if (in_center(y, x)) {
                mask.pattern[static_cast<std::size_t>(y) * width + x] = 1;
                ++center_count;
            }
    if (target < center_count)
        throw ParameterError("make_mask: acceleration exceeds grid capacity "
                             "(fewer samples than the fully sampled center)");

    // weighted sampling without replacement over the remaining cells keeps
    // the sampled count exact for every seed
    const double r0 = std::max(2.0, std::min(height, width) / 8.0);
    std::mt19937_64 rng(mix_seed(seed, 0xba5e));
    std::uniform_real_distribution<double> uni(std::numeric_limits<double>::min(), 1.0);
    struct Cell {
        double key;
        int index;
    };
    std::vector<Cell> cells;
    cells.reserve(static_cast<std::size_t>(n));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double u = uni(rng);
            if (in_center(y, x)) continue;
            const double fy = signed_freq(y, height);
            const double fx = signed_freq(x, width);
            const double r = std::sqrt(fy * fy + fx * fx);
            const double w = std::pow(1.0 + r / r0, -density_decay);
            cells.push_back({std::log(u) / w, y * width + x});
        }
    }
    const int remaining = target - center_count;
    std::partial_sort(cells.begin(), cells.begin() + remaining, cells.end(),
                      [](const Cell& a, const Cell& b) {
                          return a.key > b.key || (a.key == b.key && a.index < b.index);
                      });
    for (int i = 0; i < remaining; ++i)
        mask.pattern[static_cast<std::size_t>(cells[static_cast<std::size_t>(i)].index)] = 1;
    return mask;
}

}  // namespace mol
