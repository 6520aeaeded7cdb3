#pragma once

#include <complex>
#include <span>
#include <vector>

namespace rawradar {

using cplx = std::complex<double>;

// In-place unnormalized DFT (forward uses exp(-j...)). Backed by FFTW plans
// cached per thread and length.
void fft(std::span<cplx> data);
void ifft(std::span<cplx> data);  // includes the 1/N factor

// Move the zero-frequency bin to the middle: index N/2 after the shift.
template <typename T>
void fftshift(std::span<T> data) {
  const std::size_t n = data.size();
  std::vector<T> tmp(data.begin(), data.end());
  for (std::size_t i = 0; i < n; ++i) data[(i + n / 2) % n] = tmp[i];
}

std::vector<double> hann_window(int n);
std::vector<double> rect_window(int n);

}  // namespace rawradar
