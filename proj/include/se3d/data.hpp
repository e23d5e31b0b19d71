#pragma once

#include <string>
#include <utility>
#include <vector>

#include "se3d/dsp.hpp"
#include "se3d/rng.hpp"

namespace se3d {

/// Recipe for one semi-synthetic spatial scene: per-channel sparse
/// exponential-decay impulse responses plus noise mixed at a target SNR.
struct SceneSpec {
  uint64_t seed = 0;
  int channels = 4;
  int rir_length = 4096;
  double rt60 = 0.4;                 // decay-time surrogate in seconds
  std::vector<int> delays;           // direct-path delay per channel, samples
  double snr_db = 10.0;
  int taps = 48;                     // reflections per channel
  int sample_rate = 16000;

  void validate() const;
  std::vector<int> effective_delays() const;  // defaults to 0,3,5,8,... pattern
};

struct ManifestEntry {
  std::string noisy_path;
  std::string clean_path;
  int64_t samples = 0;
  double snr_db = 0.0;
  uint64_t seed = 0;
};

using Manifest = std::vector<ManifestEntry>;

/// Per channel: a unit direct-path tap at the configured delay followed by
/// sparse random reflections with e^{-6.9 t / rt60} energy decay. Channels
/// share reflection times up to a small jitter.
Tensor synth_rir(const SceneSpec& spec, Rng& rng);

/// noisy_c = clean * rir_c + g * (noise * rir'_c), g chosen so the
/// reverberant-speech to scaled-noise energy ratio equals spec.snr_db.
/// The target is the dry clean signal.
std::pair<AudioSegment, AudioSegment> make_scene(const AudioSegment& clean,
                                                 const AudioSegment& noise,
                                                 const SceneSpec& spec);

AudioSegment read_wav(const std::string& path);
void write_wav(const std::string& path, const AudioSegment& seg, bool pcm16 = false);

/// Amplitude-modulated harmonic complex in the speech band, peak-normalized.
AudioSegment synth_speech_like(int64_t samples, int rate, Rng& rng);
AudioSegment synth_noise(int64_t samples, int rate, Rng& rng);

Manifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const Manifest& m);

/// Pairs *_noisy.wav / *_clean.wav files under dir, shuffles them with the
/// seed and splits train/val by ratio; writes train.tsv and val.tsv.
std::pair<Manifest, Manifest> build_manifest(const std::string& dir, double split_ratio,
                                             uint64_t seed);

}  // namespace se3d
