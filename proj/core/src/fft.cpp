#include "mol/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <vector>

namespace mol {

namespace {

// Plan creation is not thread-safe in FFTW; executing a cached plan on new
// arrays is, provided the plan was made with FFTW_UNALIGNED.
class PlanCache {
public:
    fftw_plan get(int h, int w, int sign) {
        std::lock_guard<std::mutex> lock(mutex_);
        const Key key{h, w, sign};
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        std::vector<fftw_complex> a(static_cast<std::size_t>(h) * w);
        std::vector<fftw_complex> b(static_cast<std::size_t>(h) * w);
        fftw_plan plan = fftw_plan_dft_2d(h, w, a.data(), b.data(), sign,
                                          FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_.emplace(key, plan);
        return plan;
    }

private:
    using Key = std::tuple<int, int, int>;
    std::mutex mutex_;
    std::map<Key, fftw_plan> plans_;
};

PlanCache& cache() {
    static PlanCache c;
    return c;
}

void run(int h, int w, int sign, const cdouble* in, cdouble* out) {
    fftw_plan plan = cache().get(h, w, sign);
    // out-of-place plan: need distinct buffers at execute time
    std::vector<cdouble> tmp;
    const cdouble* src = in;
    if (in == out) {
        tmp.assign(in, in + static_cast<std::size_t>(h) * w);
        src = tmp.data();
    }
    fftw_execute_dft(plan,
                     reinterpret_cast<fftw_complex*>(const_cast<cdouble*>(src)),
                     reinterpret_cast<fftw_complex*>(out));
    const double s = 1.0 / std::sqrt(static_cast<double>(h) * w);
    const std::size_t n = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < n; ++i) out[i] *= s;
}

}  // namespace

void fft2_unitary(int h, int w, const cdouble* in, cdouble* out) {
    run(h, w, FFTW_FORWARD, in, out);
}

void ifft2_unitary(int h, int w, const cdouble* in, cdouble* out) {
    run(h, w, FFTW_BACKWARD, in, out);
}

ComplexImage fft2(const ComplexImage& img) {
    ComplexImage out(img.height(), img.width());
    fft2_unitary(img.height(), img.width(), img.data().data(), out.data().data());
    return out;
}

ComplexImage ifft2(const ComplexImage& img) {
    ComplexImage out(img.height(), img.width());
    ifft2_unitary(img.height(), img.width(), img.data().data(), out.data().data());
    return out;
}

}  // namespace mol
