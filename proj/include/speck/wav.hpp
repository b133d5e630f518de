#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "speck/error.hpp"
#include "speck/rng.hpp"

namespace speck {

// Mono audio, amplitudes in [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int sample_rate = 0;

  int64_t num_samples() const { return static_cast<int64_t>(samples.size()); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

namespace detail {

inline uint32_t read_u32le(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

inline uint16_t read_u16le(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

inline void put_u16le(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
}

inline std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace detail

// Reads a RIFF/WAVE file. Only PCM16 mono is accepted; anything else is
// rejected rather than guessed at.
inline Waveform read_wav(const std::string& path) {
  using namespace detail;
  std::vector<uint8_t> b = read_file_bytes(path);
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 ||
      std::memcmp(b.data() + 8, "WAVE", 4) != 0)
    throw NotWavError("not a RIFF/WAVE file: " + path);

  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  const uint8_t* data_ptr = nullptr;
  uint32_t data_size = 0;

  size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const uint8_t* chunk = b.data() + pos;
    uint32_t chunk_size = read_u32le(chunk + 4);
    size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_size < 16 || body + 16 > b.size())
        throw TruncatedError("fmt chunk truncated: " + path);
      format = read_u16le(b.data() + body);
      channels = read_u16le(b.data() + body + 2);
      sample_rate = read_u32le(b.data() + body + 4);
      bits = read_u16le(b.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (body + chunk_size > b.size())
        throw TruncatedError("data chunk shorter than header claims: " + path);
      data_ptr = b.data() + body;
      data_size = chunk_size;
    }
    // Chunks are word aligned.
    pos = body + chunk_size + (chunk_size & 1);
  }

  if (!have_fmt) throw UnsupportedFormatError("missing fmt chunk: " + path);
  if (format != 1)
    throw UnsupportedFormatError("only PCM is supported: " + path);
  if (channels != 1)
    throw UnsupportedFormatError("only mono is supported: " + path);
  if (bits != 16)
    throw UnsupportedFormatError("only 16-bit samples are supported: " + path);
  if (sample_rate == 0) throw UnsupportedFormatError("zero sample rate: " + path);
  if (data_ptr == nullptr) throw TruncatedError("missing data chunk: " + path);

  Waveform w;
  w.sample_rate = static_cast<int>(sample_rate);
  size_t n = data_size / 2;
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    auto raw = static_cast<int16_t>(read_u16le(data_ptr + 2 * i));
    w.samples[i] = static_cast<float>(raw) / 32768.0f;
  }
  return w;
}

// Encodes PCM16 mono. Values read back through read_wav round-trip exactly.
inline void write_wav(const Waveform& w, const std::string& path) {
  using namespace detail;
  if (w.sample_rate <= 0) throw DataError("write_wav: sample_rate must be positive");
  std::vector<uint8_t> out;
  uint32_t data_size = static_cast<uint32_t>(w.samples.size() * 2);
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32le(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  put_u32le(out, 16);
  put_u16le(out, 1);  // PCM
  put_u16le(out, 1);  // mono
  put_u32le(out, static_cast<uint32_t>(w.sample_rate));
  put_u32le(out, static_cast<uint32_t>(w.sample_rate) * 2);  // byte rate
  put_u16le(out, 2);   // block align
  put_u16le(out, 16);  // bits
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32le(out, data_size);
  for (float s : w.samples) {
    double scaled = std::lround(static_cast<double>(s) * 32768.0);
    if (scaled > 32767.0) scaled = 32767.0;
    if (scaled < -32768.0) scaled = -32768.0;
    put_u16le(out, static_cast<uint16_t>(static_cast<int16_t>(scaled)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short write: " + path);
}

namespace detail {

// Zeroth-order modified Bessel function, power series.
inline double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  double half_x = x / 2.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half_x / k) * (half_x / k);
    sum += term;
    if (term < 1e-16 * sum) break;
  }
  return sum;
}

inline double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  double px = 3.14159265358979323846 * x;
  return std::sin(px) / px;
}

}  // namespace detail

// Band-limited resampling with a Kaiser-windowed sinc kernel: 16 input
// samples of support per side, cutoff at 0.9 of the smaller Nyquist. The
// kernel sum is normalized per output sample so DC gain is exact, including
// at the signal edges.
inline Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw DataError("resample: target rate must be positive");
  if (w.sample_rate <= 0) throw DataError("resample: input rate must be positive");
  if (target_rate == w.sample_rate) return w;

  const int64_t in_len = w.num_samples();
  const int64_t out_len = std::llround(static_cast<double>(in_len) *
                                       target_rate / w.sample_rate);
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.assign(static_cast<size_t>(out_len), 0.0f);
  if (in_len == 0) return out;

  const double rho =
      0.9 * std::min(w.sample_rate, target_rate) / static_cast<double>(w.sample_rate);
  const double half_width = 16.0;  // in input samples
  const double beta = 8.0;
  const double i0_beta = detail::bessel_i0(beta);
  const double step = static_cast<double>(w.sample_rate) / target_rate;

  for (int64_t n = 0; n < out_len; ++n) {
    const double t = n * step;
    const auto j_lo = static_cast<int64_t>(std::ceil(t - half_width));
    const auto j_hi = static_cast<int64_t>(std::floor(t + half_width));
    double acc = 0.0, ksum = 0.0;
    for (int64_t j = std::max<int64_t>(j_lo, 0);
         j <= std::min<int64_t>(j_hi, in_len - 1); ++j) {
      const double u = t - j;
      const double frac = u / half_width;
      const double win =
          detail::bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - frac * frac))) /
          i0_beta;
      const double k = rho * detail::sinc(rho * u) * win;
      acc += k * w.samples[static_cast<size_t>(j)];
      ksum += k;
    }
    out.samples[static_cast<size_t>(n)] =
        ksum != 0.0 ? static_cast<float>(acc / ksum) : 0.0f;
  }
  return out;
}

enum class CropMode { kCenter, kRandom };

// Contiguous slice of the requested duration. Inputs at or below the target
// duration pass through unchanged.
inline Waveform crop_duration(const Waveform& w, double seconds,
                              CropMode mode = CropMode::kCenter,
                              uint64_t seed = 0) {
  if (seconds <= 0.0) throw DataError("crop_duration: seconds must be positive");
  const int64_t want = std::llround(seconds * w.sample_rate);
  const int64_t len = w.num_samples();
  if (len <= want) return w;

  int64_t offset;
  if (mode == CropMode::kCenter) {
    offset = (len - want) / 2;
  } else {
    Rng rng(seed, "crop");
    offset = rng.uniform_int(len - want + 1);
  }
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.samples.begin() + offset, w.samples.begin() + offset + want);
  return out;
}

}  // namespace speck
