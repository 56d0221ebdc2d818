#pragma once

#include <cstddef>
#include <vector>

#include "lipcmp/matrix.hpp"
#include "lipcmp/tensor.hpp"

namespace lipcmp {

// Same-size 2D cross-correlation (PyTorch convention), odd kernels only:
// out[n,o,y,x] = sum_{i,dy,dx} w[o,i,dy,dx] * in[n,i,y+dy-ph,x+dx-pw].
FeatureBatch conv2d(const FeatureBatch& x, const KernelTensor& w,
                    PaddingMode padding = PaddingMode::Circular);

// Swaps channel axes and flips taps; the result's Jacobian is the transpose
// of the original's.
KernelTensor conv_transpose_kernel(const KernelTensor& w);

// Unnormalized forward transform over the last two axes.
ComplexTensor4 fft2(const ComplexTensor4& x);
ComplexTensor4 fft2(const FeatureBatch& x);
// Inverse transform, scaled by 1/(h*w).
ComplexTensor4 ifft2(const ComplexTensor4& x);
FeatureBatch real_part(const ComplexTensor4& x);

// Channel matrices of a circular convolution, one per frequency (u, v) of an
// h x w grid, stored at index u*w + v.
struct SpectralMatrices {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<ComplexMatrix> freq;

  std::size_t rows() const { return freq.empty() ? 0 : freq.front().rows(); }
  std::size_t cols() const { return freq.empty() ? 0 : freq.front().cols(); }
};

// Frequency index of (-u, -v); for real kernels its matrix is the conjugate.
std::size_t conjugate_frequency(std::size_t index, std::size_t h, std::size_t w);

SpectralMatrices kernel_spectrum(const KernelTensor& w, std::size_t h, std::size_t width);
SpectralMatrices adjoint(const SpectralMatrices& m);

// fft2 -> per-frequency matrix product -> ifft2 -> real part.
FeatureBatch apply_spectral(const SpectralMatrices& m, const FeatureBatch& x);

// Circular convolution evaluated through the Fourier domain.
FeatureBatch fft_conv2d(const FeatureBatch& x, const KernelTensor& w);

}  // namespace lipcmp
