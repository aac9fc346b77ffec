#pragma once

#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "mol/errors.hpp"

namespace mol {

using cdouble = std::complex<double>;

// Live-instance accounting for iterate-sized complex images. The solver's
// memory contract (constant retained buffers, independent of iteration count)
// is asserted against these counters, so every allocating ComplexImage
// constructor reports here.
namespace image_stats {
std::int64_t live();
std::int64_t peak();
void reset_peak();
namespace detail {
void on_alloc();
void on_free();
}  // namespace detail
}  // namespace image_stats

// 2D complex-valued image grid, row-major.
class ComplexImage {
public:
    ComplexImage() = default;

    ComplexImage(int height, int width) : height_(height), width_(width) {
        if (height <= 0 || width <= 0)
            throw ParameterError("ComplexImage: dimensions must be positive");
        data_.assign(static_cast<std::size_t>(height) * width, cdouble(0.0, 0.0));
        image_stats::detail::on_alloc();
    }

    ComplexImage(const ComplexImage& other)
        : height_(other.height_), width_(other.width_), data_(other.data_) {
        if (!data_.empty()) image_stats::detail::on_alloc();
    }

    ComplexImage(ComplexImage&& other) noexcept
        : height_(other.height_), width_(other.width_), data_(std::move(other.data_)) {
        other.height_ = 0;
        other.width_ = 0;
        other.data_.clear();
    }

    ComplexImage& operator=(const ComplexImage& other) {
        if (this == &other) return *this;
        const bool had = !data_.empty();
        data_ = other.data_;
        height_ = other.height_;
        width_ = other.width_;
        if (!had && !data_.empty()) image_stats::detail::on_alloc();
        if (had && data_.empty()) image_stats::detail::on_free();
        return *this;
    }

    ComplexImage& operator=(ComplexImage&& other) noexcept {
        if (this == &other) return *this;
        if (!data_.empty()) image_stats::detail::on_free();
        data_ = std::move(other.data_);
        height_ = other.height_;
        width_ = other.width_;
        other.height_ = 0;
        other.width_ = 0;
        other.data_.clear();
        return *this;
    }

    ~ComplexImage() {
        if (!data_.empty()) image_stats::detail::on_free();
    }

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    cdouble& operator()(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    const cdouble& operator()(int y, int x) const {
        return data_[static_cast<std::size_t>(y) * width_ + x];
    }
    cdouble& operator[](std::size_t i) { return data_[i]; }
    const cdouble& operator[](std::size_t i) const { return data_[i]; }

    std::vector<cdouble>& data() { return data_; }
    const std::vector<cdouble>& data() const { return data_; }

    bool same_shape(const ComplexImage& o) const {
        return height_ == o.height_ && width_ == o.width_;
    }

    double norm() const {
        double s = 0.0;
        for (const cdouble& v : data_) s += std::norm(v);
        return std::sqrt(s);
    }

    bool all_finite() const {
        for (const cdouble& v : data_)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
        return true;
    }

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<cdouble> data_;
};

// elementwise helpers shared by the solver and analysis code

inline void check_same_shape(const ComplexImage& a, const ComplexImage& b, const char* where) {
    if (!a.same_shape(b)) throw DimensionError(std::string(where) + ": image shape mismatch");
}

// y += a*x
inline void axpy(cdouble a, const ComplexImage& x, ComplexImage& y) {
    check_same_shape(x, y, "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void scale(ComplexImage& x, cdouble a) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= a;
}

inline ComplexImage add(const ComplexImage& a, const ComplexImage& b) {
    check_same_shape(a, b, "add");
    ComplexImage r(a);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += b[i];
    return r;
}

inline ComplexImage sub(const ComplexImage& a, const ComplexImage& b) {
    check_same_shape(a, b, "sub");
    ComplexImage r(a);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
    return r;
}

inline ComplexImage scaled(const ComplexImage& a, cdouble s) {
    ComplexImage r(a);
    scale(r, s);
    return r;
}

// complex inner product, conjugate-linear in the first argument
inline cdouble dot(const ComplexImage& a, const ComplexImage& b) {
    check_same_shape(a, b, "dot");
    cdouble s(0.0, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s;
}

// real inner product of the underlying 2N real coordinates
inline double dot_real(const ComplexImage& a, const ComplexImage& b) { return dot(a, b).real(); }

inline double dist(const ComplexImage& a, const ComplexImage& b) {
    check_same_shape(a, b, "dist");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a[i] - b[i]);
    return std::sqrt(s);
}

// ties measurement entries to (coil, sampled-location) pairs
struct MeasurementLayout {
    int coils = 1;
    int samples_per_coil = 0;
    int domain_height = 0;
    int domain_width = 0;

    bool operator==(const MeasurementLayout&) const = default;
    std::size_t total() const {
        return static_cast<std::size_t>(coils) * samples_per_coil;
    }
};

struct Measurement {
    MeasurementLayout layout;
    std::vector<cdouble> data;

    double norm() const {
        double s = 0.0;
        for (const cdouble& v : data) s += std::norm(v);
        return std::sqrt(s);
    }
    bool all_finite() const {
        for (const cdouble& v : data)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
        return true;
    }
};

inline double dist(const Measurement& a, const Measurement& b) {
    if (!(a.layout == b.layout)) throw DimensionError("dist: measurement layout mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += std::norm(a.data[i] - b.data[i]);
    return std::sqrt(s);
}

// undersampling pattern, stored in FFT index order (DC at [0][0])
struct MaskSpec {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pattern;
    double acceleration = 1.0;
    std::uint64_t seed = 0;

    int count_sampled() const {
        int n = 0;
        for (std::uint8_t v : pattern) n += (v != 0);
        return n;
    }
    double density() const {
        return pattern.empty() ? 0.0 : static_cast<double>(count_sampled()) / pattern.size();
    }
};

// MOLIMG v1 container: 16-byte text frame, little-endian u32 height/width,
// then row-major (re, im) float64 pairs. Masks use the MOLMSK frame with one
// byte (0/1) per entry.
void write_image(const std::string& path, const ComplexImage& img);
ComplexImage read_image(const std::string& path);
void write_mask(const std::string& path, const MaskSpec& mask);
MaskSpec read_mask(const std::string& path);

}  // namespace mol
