#pragma once

#include <cstdint>
#include <random>

#include "mol/image.hpp"

namespace mol {

// splitmix64 step; used to derive independent sub-seeds from one global seed
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + b * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline ComplexImage random_gaussian_image(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    ComplexImage img(h, w);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        img[i] = cdouble(re, im);
    }
    return img;
}

}  // namespace mol
