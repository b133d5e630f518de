#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "speck/error.hpp"
#include "speck/tensor.hpp"

namespace speck {

constexpr double kPi = 3.14159265358979323846;

inline int64_t next_pow2(int64_t n) {
  int64_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 FFT. Length must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a, bool inverse = false) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw ShapeError("fft_radix2: length must be a power of two");

  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> t = a[i + k + len / 2] * w;
        a[i + k] = u + t;
        a[i + k + len / 2] = u - t;
        w *= wlen;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= static_cast<double>(n);
}

inline std::vector<double> hann_window(int64_t n) {
  std::vector<double> w(static_cast<size_t>(n));
  if (n == 1) {
    w[0] = 1.0;
    return w;
  }
  for (int64_t i = 0; i < n; ++i)
    w[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (n - 1));
  return w;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular mel filterbank over FFT magnitude bins, filters spanning 0 Hz to
// Nyquist with centers uniformly spaced on the mel scale.
//
// Returned matrix is n_mels x (n_fft/2 + 1).
inline Tensor<double> mel_filterbank(int n_mels, int64_t n_fft, int sample_rate) {
  if (n_mels < 1) throw ShapeError("mel_filterbank: n_mels must be >= 1");
  const int64_t n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
  for (int m = 0; m < n_mels + 2; ++m)
    edges[static_cast<size_t>(m)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (n_mels + 1));

  Tensor<double> fb({n_mels, n_bins});
  const double hz_per_bin = static_cast<double>(sample_rate) / static_cast<double>(n_fft);
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[static_cast<size_t>(m)];
    const double center = edges[static_cast<size_t>(m) + 1];
    const double right = edges[static_cast<size_t>(m) + 2];
    for (int64_t k = 0; k < n_bins; ++k) {
      const double hz = k * hz_per_bin;
      double wgt = 0.0;
      if (hz >= left && hz <= center && center > left)
        wgt = (hz - left) / (center - left);
      else if (hz > center && hz <= right && right > center)
        wgt = (right - hz) / (right - center);
      fb.at(m, k) = wgt;
    }
  }
  return fb;
}

inline std::vector<double> mel_filter_centers_hz(int n_mels, int sample_rate) {
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(static_cast<size_t>(n_mels));
  for (int m = 0; m < n_mels; ++m)
    centers[static_cast<size_t>(m)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / (n_mels + 1));
  return centers;
}

// Orthonormal DCT-II matrix, n_out x n_in.
inline Tensor<double> dct2_matrix(int n_out, int n_in) {
  if (n_out > n_in) throw ShapeError("dct2_matrix: cannot keep more coefficients than inputs");
  Tensor<double> d({n_out, n_in});
  const double norm0 = std::sqrt(1.0 / n_in);
  const double norm = std::sqrt(2.0 / n_in);
  for (int k = 0; k < n_out; ++k)
    for (int n = 0; n < n_in; ++n)
      d.at(k, n) = (k == 0 ? norm0 : norm) *
                   std::cos(kPi * k * (2.0 * n + 1.0) / (2.0 * n_in));
  return d;
}

}  // namespace speck
