#pragma once

#include "mol/image.hpp"

namespace mol {

// Unitary 2D DFT pair: both directions carry a 1/sqrt(h*w) factor, so a
// fully sampled Fourier operator has spectral norm exactly 1.
void fft2_unitary(int height, int width, const cdouble* in, cdouble* out);
void ifft2_unitary(int height, int width, const cdouble* in, cdouble* out);

ComplexImage fft2(const ComplexImage& img);
ComplexImage ifft2(const ComplexImage& img);

}  // namespace mol
