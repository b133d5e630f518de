#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "speck/error.hpp"
#include "speck/manifest.hpp"
#include "speck/rng.hpp"
#include "speck/wav.hpp"

namespace speck {

// Deterministic synthetic classification corpus. Classes are distinct
// spectral recipes (a band of harmonics plus a class-specific amplitude
// modulation rate); speakers are nuisance variation (pitch offset, spectral
// tilt, gain, noise floor) deliberately larger than per-utterance jitter.
struct SynthSpec {
  int num_classes = 4;
  int num_speakers = 10;
  int utterances_per_speaker_per_class = 5;
  double duration_s = 2.0;
  int sample_rate = 16000;
  uint64_t seed = 0;
  double noise_floor_min = 0.002;
  double noise_floor_max = 0.05;
};

namespace synth_detail {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kBandLoHz = 300.0;
constexpr double kBandHiHz = 3400.0;

struct SpeakerTraits {
  double pitch_mult;
  double tilt;
  double gain;
  double noise_floor;
};

inline SpeakerTraits speaker_traits(const SynthSpec& spec, int speaker) {
  Rng rng(spec.seed, "synth.speaker/" + std::to_string(speaker));
  SpeakerTraits t{};
  t.pitch_mult = std::exp2(rng.uniform(-0.05, 0.05));
  t.tilt = rng.uniform(-0.35, 0.35);
  t.gain = rng.uniform(0.65, 1.0);
  t.noise_floor = std::exp(rng.uniform(std::log(spec.noise_floor_min),
                                       std::log(spec.noise_floor_max)));
  return t;
}

}  // namespace synth_detail

// One utterance of class `cls` by speaker `speaker`, fully determined by the
// spec seed and the (class, speaker, utterance) coordinates.
inline Waveform synth_utterance(const SynthSpec& spec, int cls, int speaker, int utt) {
  using namespace synth_detail;
  const auto st = speaker_traits(spec, speaker);
  Rng rng(spec.seed, "synth.utt/" + std::to_string(cls) + "/" + std::to_string(speaker) +
                         "/" + std::to_string(utt));

  const double band_width = (kBandHiHz - kBandLoHz) / spec.num_classes;
  const double band_lo = kBandLoHz + cls * band_width;
  const double tone_pos[3] = {0.25, 0.55, 0.85};
  const double tone_amp[3] = {1.0, 0.65, 0.45};
  const double am_rate = 0.7 + 0.9 * cls;
  const double am_depth = 0.35;

  double freq[3], phase[3], amp[3];
  double amp_sum = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double detune = 1.0 + rng.uniform(-0.006, 0.006);
    freq[i] = (band_lo + tone_pos[i] * band_width) * st.pitch_mult * detune;
    phase[i] = rng.uniform(0.0, kTwoPi);
    amp[i] = tone_amp[i] * (1.0 + st.tilt * (i - 1));
    amp_sum += amp[i];
  }
  const double am_phase = rng.uniform(0.0, kTwoPi);
  const double utt_gain = rng.uniform(0.8, 1.25);
  // Tonal part stays within 0.6 by construction; gains keep the total
  // comfortably inside [-1, 1] before the noise floor is added.
  const double scale = 0.6 / (amp_sum * (1.0 + am_depth));

  Waveform w;
  w.sample_rate = spec.sample_rate;
  const auto n = static_cast<int64_t>(std::llround(spec.duration_s * spec.sample_rate));
  w.samples.resize(static_cast<size_t>(n));
  const double dt = 1.0 / spec.sample_rate;
  for (int64_t t = 0; t < n; ++t) {
    const double time = t * dt;
    double tone = 0.0;
    for (int i = 0; i < 3; ++i)
      tone += amp[i] * std::sin(kTwoPi * freq[i] * time + phase[i]);
    const double am = 1.0 + am_depth * std::sin(kTwoPi * am_rate * time + am_phase);
    double x = tone * am * scale * st.gain * utt_gain + st.noise_floor * rng.normal();
    if (x > 0.999) x = 0.999;
    if (x < -0.999) x = -0.999;
    w.samples[static_cast<size_t>(t)] = static_cast<float>(x);
  }
  return w;
}

inline std::string synth_label(int cls) { return "class" + std::to_string(cls); }
inline std::string synth_group(int speaker) { return "spk" + std::to_string(speaker); }

inline std::vector<UtteranceRecord> synth_records(const SynthSpec& spec) {
  std::vector<UtteranceRecord> records;
  for (int c = 0; c < spec.num_classes; ++c)
    for (int s = 0; s < spec.num_speakers; ++s)
      for (int u = 0; u < spec.utterances_per_speaker_per_class; ++u) {
        UtteranceRecord r;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "c%d_s%d_u%03d", c, s, u);
        r.utt_id = buf;
        r.path = "wav/" + r.utt_id + ".wav";
        r.label = synth_label(c);
        r.group_id = synth_group(s);
        r.duration_s = spec.duration_s;
        records.push_back(std::move(r));
      }
  return records;
}

inline Waveform synth_utterance_for(const SynthSpec& spec, const UtteranceRecord& r) {
  int c = 0, s = 0, u = 0;
  if (std::sscanf(r.utt_id.c_str(), "c%d_s%d_u%d", &c, &s, &u) != 3)
    throw DataError("not a synthetic utt_id: " + r.utt_id);
  return synth_utterance(spec, c, s, u);
}

// Writes one WAV per utterance plus a JSON Lines manifest into out_dir.
// Two calls with the same spec produce identical bytes.
inline Manifest generate_corpus(const SynthSpec& spec, const std::string& out_dir) {
  if (spec.num_classes < 1 || spec.num_speakers < 1 ||
      spec.utterances_per_speaker_per_class < 1)
    throw RangeError("generate_corpus: counts must be positive");
  std::error_code ec;
  std::filesystem::create_directories(std::filesystem::path(out_dir) / "wav", ec);
  if (ec) throw IoError("cannot create corpus directory: " + out_dir);

  std::vector<UtteranceRecord> records = synth_records(spec);
  for (const auto& r : records) {
    Waveform w = synth_utterance_for(spec, r);
    write_wav(w, (std::filesystem::path(out_dir) / r.path).string());
  }
  const std::string manifest_path =
      (std::filesystem::path(out_dir) / "manifest.jsonl").string();
  write_manifest(records, manifest_path);

  Manifest m;
  m.records = std::move(records);
  m.base_dir = out_dir;
  return m;
}

}  // namespace speck
