#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "gkt/tensor.hpp"

namespace gkt {

using cdouble = std::complex<double>;

bool is_power_of_two(std::int64_t n);

/// In-place radix-2 DFT, unscaled forward: X_k = sum_j x_j e^{-2*pi*i*j*k/n}.
/// Inverse applies the conjugate transform and divides by n. Twiddle tables
/// are cached per length.
void fft_inplace(std::vector<cdouble>& a, bool inverse);

std::vector<cdouble> fft(const std::vector<cdouble>& x, bool inverse = false);
std::vector<cdouble> fft_real(const std::vector<double>& x);
/// Real part of the inverse transform (caller asserts Hermitian symmetry).
std::vector<double> ifft_real(const std::vector<cdouble>& X);

/// Complex tensor stored as shape [..., 2] with interleaved (re, im) pairs.
/// Invariant: produced by FFT ops and spectral weights only.
struct ComplexTensor {
  Tensor interleaved;  // last extent is 2

  static ComplexTensor from_vector(const std::vector<cdouble>& v);
  std::vector<cdouble> to_vector() const;
  std::int64_t length() const { return interleaved.numel() / 2; }
};

}  // namespace gkt
