#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "speck/dsp.hpp"
#include "speck/error.hpp"
#include "speck/tensor.hpp"
#include "speck/wav.hpp"

namespace speck {

// Frame-level features: T x D matrix plus the framing that produced it.
struct FeatureSequence {
  Tensor<float> data;  // T x D
  double frame_shift_ms = 10.0;
  double frame_length_ms = 25.0;

  int64_t num_frames() const { return data.rows(); }
  int64_t dim() const { return data.cols(); }
};

constexpr double kLogMelFloor = 1e-6;

namespace detail {

struct Framing {
  int64_t frame_len;
  int64_t shift;
  int64_t num_frames;
};

inline Framing framing_for(const Waveform& w) {
  Framing f{};
  f.frame_len = std::llround(0.025 * w.sample_rate);
  f.shift = std::llround(0.010 * w.sample_rate);
  if (w.num_samples() < f.frame_len)
    throw TooShortError("waveform shorter than one frame (" +
                        std::to_string(w.num_samples()) + " samples)");
  f.num_frames = 1 + (w.num_samples() - f.frame_len) / f.shift;
  return f;
}

}  // namespace detail

// Log mel filterbank energies: 25 ms Hann frames at 10 ms shift, magnitude
// spectrum through a triangular mel bank, then log(x + 1e-6).
inline FeatureSequence logmel(const Waveform& w, int n_mels = 40) {
  const auto fr = detail::framing_for(w);
  const int64_t n_fft = next_pow2(fr.frame_len);
  const int64_t n_bins = n_fft / 2 + 1;
  const std::vector<double> window = hann_window(fr.frame_len);
  const Tensor<double> fb = mel_filterbank(n_mels, n_fft, w.sample_rate);

  FeatureSequence out;
  out.data = Tensor<float>({fr.num_frames, n_mels});
  std::vector<std::complex<double>> buf(static_cast<size_t>(n_fft));
  std::vector<double> mag(static_cast<size_t>(n_bins));

  for (int64_t t = 0; t < fr.num_frames; ++t) {
    const int64_t start = t * fr.shift;
    for (int64_t i = 0; i < fr.frame_len; ++i)
      buf[static_cast<size_t>(i)] = {w.samples[static_cast<size_t>(start + i)] *
                                         window[static_cast<size_t>(i)],
                                     0.0};
    for (int64_t i = fr.frame_len; i < n_fft; ++i) buf[static_cast<size_t>(i)] = {0.0, 0.0};
    fft_radix2(buf);
    for (int64_t k = 0; k < n_bins; ++k) mag[static_cast<size_t>(k)] = std::abs(buf[static_cast<size_t>(k)]);
    for (int m = 0; m < n_mels; ++m) {
      double e = 0.0;
      for (int64_t k = 0; k < n_bins; ++k) e += fb.at(m, k) * mag[static_cast<size_t>(k)];
      out.data.at(t, m) = static_cast<float>(std::log(e + kLogMelFloor));
    }
  }
  return out;
}

// MFCCs: DCT-II of the log mel frames, keeping the first n_coeffs.
inline FeatureSequence mfcc(const Waveform& w, int n_coeffs = 13, int n_mels = 40) {
  FeatureSequence lm = logmel(w, n_mels);
  const Tensor<double> dct = dct2_matrix(n_coeffs, n_mels);

  FeatureSequence out;
  out.data = Tensor<float>({lm.num_frames(), static_cast<int64_t>(n_coeffs)});
  for (int64_t t = 0; t < lm.num_frames(); ++t) {
    for (int k = 0; k < n_coeffs; ++k) {
      double acc = 0.0;
      for (int m = 0; m < n_mels; ++m) acc += dct.at(k, m) * lm.data.at(t, m);
      out.data.at(t, k) = static_cast<float>(acc);
    }
  }
  return out;
}

// Stacks frames from several feature sequences into one N x D matrix.
inline Tensor<float> stack_frames(const std::vector<FeatureSequence>& seqs) {
  if (seqs.empty()) throw EmptyInputError("stack_frames: no sequences");
  const int64_t d = seqs.front().dim();
  int64_t total = 0;
  for (const auto& s : seqs) {
    if (s.dim() != d) throw ShapeError("stack_frames: dimension mismatch");
    total += s.num_frames();
  }
  Tensor<float> out({total, d});
  int64_t row = 0;
  for (const auto& s : seqs) {
    std::copy(s.data.v.begin(), s.data.v.end(), out.v.begin() + row * d);
    row += s.num_frames();
  }
  return out;
}

}  // namespace speck
