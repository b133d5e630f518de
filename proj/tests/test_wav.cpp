#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "speck/rng.hpp"
#include "speck/wav.hpp"

using namespace speck;

namespace {

constexpr double kWavTestPi = 3.14159265358979323846;

std::filesystem::path tmp_dir() {
  auto p = std::filesystem::temp_directory_path() / "speck_wav_tests";
  std::filesystem::create_directories(p);
  return p;
}

Waveform sine(double freq, double amp, double seconds, int sr) {
  Waveform w;
  w.sample_rate = sr;
  auto n = static_cast<int64_t>(std::llround(seconds * sr));
  w.samples.resize(static_cast<size_t>(n));
  for (int64_t t = 0; t < n; ++t)
    w.samples[static_cast<size_t>(t)] =
        static_cast<float>(amp * std::sin(2.0 * kWavTestPi * freq * t / sr));
  return w;
}

void write_bytes(const std::filesystem::path& p, const std::vector<uint8_t>& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

// Hand-built header so tests control every field.
std::vector<uint8_t> raw_wav(uint16_t format, uint16_t channels, uint32_t rate,
                             uint16_t bits, const std::vector<int16_t>& data,
                             int32_t data_size_override = -1) {
  std::vector<uint8_t> b;
  auto u32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
  };
  auto u16 = [&](uint16_t v) {
    for (int i = 0; i < 2; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
  };
  const uint32_t data_size = data_size_override >= 0
                                 ? static_cast<uint32_t>(data_size_override)
                                 : static_cast<uint32_t>(data.size() * 2);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  u32(36 + data_size);
  b.insert(b.end(), {'W', 'A', 'V', 'E'});
  b.insert(b.end(), {'f', 'm', 't', ' '});
  u32(16);
  u16(format);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(static_cast<uint16_t>(channels * bits / 8));
  u16(bits);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  u32(data_size);
  for (int16_t s : data) u16(static_cast<uint16_t>(s));
  return b;
}

}  // namespace

TEST_CASE("read_wav scales PCM16 by 1/32768") {
  auto p = tmp_dir() / "one_sample.wav";
  write_bytes(p, raw_wav(1, 1, 16000, 16, {16384}));
  Waveform w = read_wav(p.string());
  REQUIRE(w.sample_rate == 16000);
  REQUIRE(w.samples.size() == 1);
  REQUIRE(w.samples[0] == Catch::Approx(0.5).margin(0.0));
}

TEST_CASE("read_wav zero data chunk") {
  auto p = tmp_dir() / "zeros.wav";
  write_bytes(p, raw_wav(1, 1, 16000, 16, std::vector<int16_t>(160, 0)));
  Waveform w = read_wav(p.string());
  REQUIRE(w.samples.size() == 160);
  for (float s : w.samples) REQUIRE(s == 0.0f);
}

TEST_CASE("read_wav sine RMS matches the analytic value") {
  auto p = tmp_dir() / "sine440.wav";
  write_wav(sine(440.0, 1.0, 1.0, 16000), p.string());
  Waveform w = read_wav(p.string());
  // Summation oracle for the RMS.
  double acc = 0.0;
  for (float s : w.samples) acc += static_cast<double>(s) * s;
  const double rms = std::sqrt(acc / static_cast<double>(w.samples.size()));
  REQUIRE(rms == Catch::Approx(0.70710678).margin(1e-3));
}

TEST_CASE("read_wav rejects bad magic") {
  auto p = tmp_dir() / "not_a.wav";
  write_bytes(p, {'N', 'O', 'P', 'E', 0, 0, 0, 0, 'W', 'A', 'V', 'E'});
  REQUIRE_THROWS_AS(read_wav(p.string()), NotWavError);
}

TEST_CASE("read_wav rejects unsupported formats") {
  auto stereo = tmp_dir() / "stereo.wav";
  write_bytes(stereo, raw_wav(1, 2, 16000, 16, {0, 0}));
  REQUIRE_THROWS_AS(read_wav(stereo.string()), UnsupportedFormatError);

  auto ieee = tmp_dir() / "float.wav";
  write_bytes(ieee, raw_wav(3, 1, 16000, 16, {0}));
  REQUIRE_THROWS_AS(read_wav(ieee.string()), UnsupportedFormatError);

  auto pcm8 = tmp_dir() / "pcm8.wav";
  write_bytes(pcm8, raw_wav(1, 1, 16000, 8, {0}));
  REQUIRE_THROWS_AS(read_wav(pcm8.string()), UnsupportedFormatError);
}

TEST_CASE("read_wav rejects truncated data") {
  auto p = tmp_dir() / "truncated.wav";
  // Header claims 400 bytes of data but only 4 follow.
  write_bytes(p, raw_wav(1, 1, 16000, 16, {1, 2}, 400));
  REQUIRE_THROWS_AS(read_wav(p.string()), TruncatedError);
}

TEST_CASE("wav round-trip is sample-exact") {
  auto p1 = tmp_dir() / "rt1.wav";
  auto p2 = tmp_dir() / "rt2.wav";
  write_wav(sine(523.3, 0.8, 0.25, 8000), p1.string());
  Waveform a = read_wav(p1.string());
  write_wav(a, p2.string());
  Waveform b = read_wav(p2.string());
  REQUIRE(a.sample_rate == b.sample_rate);
  REQUIRE(a.samples == b.samples);
}

TEST_CASE("resample at the same rate is the identity") {
  Waveform w = sine(440.0, 0.5, 0.1, 16000);
  Waveform out = resample(w, 16000);
  REQUIRE(out.samples == w.samples);
  REQUIRE(out.sample_rate == 16000);
}

TEST_CASE("resample doubles the length for 8k to 16k") {
  Waveform w;
  w.sample_rate = 8000;
  w.samples.assign(8000, 0.25f);
  Waveform out = resample(w, 16000);
  REQUIRE(out.sample_rate == 16000);
  REQUIRE(out.samples.size() == 16000);
}

TEST_CASE("resample length is exact for arbitrary ratios") {
  Rng rng(7, "resample.prop");
  const int rates[] = {8000, 11025, 16000, 22050, 44100};
  for (int trial = 0; trial < 20; ++trial) {
    const int in_rate = rates[rng.uniform_int(5)];
    const int out_rate = rates[rng.uniform_int(5)];
    const auto n = static_cast<int64_t>(rng.uniform_int(5000) + 100);
    Waveform w;
    w.sample_rate = in_rate;
    w.samples.resize(static_cast<size_t>(n));
    for (auto& s : w.samples) s = static_cast<float>(rng.uniform(-0.5, 0.5));
    Waveform out = resample(w, out_rate);
    const double expected = static_cast<double>(n) * out_rate / in_rate;
    REQUIRE(std::abs(static_cast<double>(out.samples.size()) - expected) <= 1.0);
  }
}

TEST_CASE("resample preserves a tone's frequency (DFT peak oracle)") {
  Waveform w = sine(500.0, 0.7, 1.0, 8000);
  Waveform out = resample(w, 16000);
  REQUIRE(out.samples.size() == 16000);

  // Naive DFT over a 4096-sample window, independent of the library FFT.
  const int n = 4096;
  int best_bin = 0;
  double best_mag = -1.0;
  for (int k = 1; k < n / 2; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (int t = 0; t < n; ++t) {
      const double ang = -2.0 * kWavTestPi * k * t / n;
      acc += static_cast<double>(out.samples[static_cast<size_t>(t)]) *
             std::complex<double>(std::cos(ang), std::sin(ang));
    }
    if (std::abs(acc) > best_mag) {
      best_mag = std::abs(acc);
      best_bin = k;
    }
  }
  const double bin_hz = 16000.0 / n;
  REQUIRE(std::abs(best_bin * bin_hz - 500.0) <= bin_hz);
}

TEST_CASE("crop_duration center offset") {
  Waveform w;
  w.sample_rate = 1000;
  w.samples.resize(30000);
  for (size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = static_cast<float>(i % 997) / 1000.0f;
  Waveform out = crop_duration(w, 10.0, CropMode::kCenter);
  REQUIRE(out.samples.size() == 10000);
  for (size_t i = 0; i < out.samples.size(); ++i)
    REQUIRE(out.samples[i] == w.samples[10000 + i]);
}

TEST_CASE("crop_duration passes short inputs through unchanged") {
  Waveform w = sine(200.0, 0.3, 2.0, 4000);
  Waveform out = crop_duration(w, 3.0, CropMode::kCenter);
  REQUIRE(out.samples == w.samples);
}

TEST_CASE("crop_duration random mode is seed-deterministic") {
  Waveform w = sine(200.0, 0.3, 4.0, 4000);
  Waveform a = crop_duration(w, 1.0, CropMode::kRandom, 99);
  Waveform b = crop_duration(w, 1.0, CropMode::kRandom, 99);
  Waveform c = crop_duration(w, 1.0, CropMode::kRandom, 100);
  REQUIRE(a.samples == b.samples);
  REQUIRE(a.samples.size() == 4000);
  // Different seeds may coincide but should usually differ; check offset range
  // stays valid by construction instead.
  REQUIRE(c.samples.size() == 4000);
}

TEST_CASE("crop_duration output never exceeds the requested length") {
  Rng rng(3, "crop.prop");
  for (int trial = 0; trial < 30; ++trial) {
    Waveform w;
    w.sample_rate = 1000 + static_cast<int>(rng.uniform_int(8000));
    w.samples.resize(static_cast<size_t>(rng.uniform_int(20000) + 1));
    const double seconds = rng.uniform(0.01, 3.0);
    Waveform out = crop_duration(w, seconds, CropMode::kRandom, rng.next_u64());
    const auto want = static_cast<int64_t>(std::llround(seconds * w.sample_rate));
    REQUIRE(static_cast<int64_t>(out.samples.size()) <=
            std::max<int64_t>(want, static_cast<int64_t>(w.samples.size())));
    if (static_cast<int64_t>(w.samples.size()) > want)
      REQUIRE(static_cast<int64_t>(out.samples.size()) == want);
  }
}
