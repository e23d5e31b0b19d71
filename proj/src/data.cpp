#include "se3d/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace se3d {

namespace fs = std::filesystem;

void SceneSpec::validate() const {
  if (channels < 1) throw std::invalid_argument("scene: channels must be >= 1");
  if (rir_length < 1) throw std::invalid_argument("scene: rir_length must be >= 1");
  if (!std::isfinite(snr_db)) throw std::invalid_argument("scene: snr must be finite");
  if (rt60 < 0.0) throw std::invalid_argument("scene: rt60 must be >= 0");
  if (taps < 0) throw std::invalid_argument("scene: taps must be >= 0");
  const auto d = effective_delays();
  const int maxd = *std::max_element(d.begin(), d.end());
  if (rir_length < maxd + 1)
    throw std::invalid_argument("scene: rir_length must cover the largest direct-path delay");
}

std::vector<int> SceneSpec::effective_delays() const {
  if (!delays.empty()) {
    if (static_cast<int>(delays.size()) != channels)
      throw std::invalid_argument("scene: need one delay per channel");
    return delays;
  }
  // a 20 cm inter-mic spacing is ~9 samples at 16 kHz; stagger within that
  std::vector<int> d(static_cast<size_t>(channels));
  const int base[] = {0, 3, 5, 8};
  for (int c = 0; c < channels; ++c) d[static_cast<size_t>(c)] = base[c % 4] + 9 * (c / 4);
  return d;
}

Tensor synth_rir(const SceneSpec& spec, Rng& rng) {
  spec.validate();
  const auto delays = spec.effective_delays();
  Tensor rir(Shape{spec.channels, spec.rir_length});

  // shared reflection schedule; per-channel jitter stands in for mic spacing
  Rng taps_rng = rng.split("taps");
  std::vector<double> times(static_cast<size_t>(spec.taps));
  std::vector<double> signs(static_cast<size_t>(spec.taps));
  const double tail = std::max(1.0, static_cast<double>(spec.rir_length - 16));
  for (int t = 0; t < spec.taps; ++t) {
    times[static_cast<size_t>(t)] = taps_rng.uniform(16.0, tail);
    signs[static_cast<size_t>(t)] = taps_rng.bernoulli(0.5) ? 1.0 : -1.0;
  }

  for (int c = 0; c < spec.channels; ++c) {
    rir.at({c, delays[static_cast<size_t>(c)]}) = 1.0;  // direct path
    if (spec.rt60 <= 0.0) continue;
    Rng jrng = rng.split("jitter").split(static_cast<uint64_t>(c));
    for (int t = 0; t < spec.taps; ++t) {
      const double jitter = jrng.uniform(-2.0, 2.0);
      int pos = static_cast<int>(std::lround(times[static_cast<size_t>(t)] + jitter)) +
                delays[static_cast<size_t>(c)];
      if (pos <= delays[static_cast<size_t>(c)] || pos >= spec.rir_length) continue;
      const double seconds = static_cast<double>(pos) / spec.sample_rate;
      const double amp = std::exp(-6.9 * seconds / spec.rt60);  // -60 dB at rt60
      rir.at({c, pos}) += signs[static_cast<size_t>(t)] * amp * jrng.uniform(0.5, 1.0);
    }
  }
  return rir;
}

namespace {

// sparse convolution: iterates only nonzero rir taps
std::vector<double> convolve_rir(const double* x, int64_t n, const double* rir, int rir_len) {
  std::vector<double> y(static_cast<size_t>(n), 0.0);
  for (int k = 0; k < rir_len; ++k) {
    const double h = rir[k];
    if (h == 0.0) continue;
    for (int64_t i = k; i < n; ++i) y[static_cast<size_t>(i)] += h * x[i - k];
  }
  return y;
}

double energy(const std::vector<double>& v) {
  double e = 0.0;
  for (double s : v) e += s * s;
  return e;
}

}  // namespace

std::pair<AudioSegment, AudioSegment> make_scene(const AudioSegment& clean,
                                                 const AudioSegment& noise,
                                                 const SceneSpec& spec) {
  spec.validate();
  if (clean.channels() != 1 || noise.channels() != 1)
    throw std::invalid_argument("make_scene: clean and noise must be mono");
  const int64_t n = clean.samples();
  if (noise.samples() != n) throw std::invalid_argument("make_scene: length mismatch");

  Rng rng(spec.seed);
  Rng speech_rng = rng.split("speech_rir");
  Rng noise_rng = rng.split("noise_rir");
  Tensor rir_s = synth_rir(spec, speech_rng);
  Tensor rir_n = synth_rir(spec, noise_rng);

  std::vector<std::vector<double>> rev_s(static_cast<size_t>(spec.channels));
  std::vector<std::vector<double>> rev_n(static_cast<size_t>(spec.channels));
  double es = 0.0, en = 0.0;
  for (int c = 0; c < spec.channels; ++c) {
    rev_s[static_cast<size_t>(c)] =
        convolve_rir(clean.data.data(), n, rir_s.data() + static_cast<int64_t>(c) * spec.rir_length,
                     spec.rir_length);
    rev_n[static_cast<size_t>(c)] =
        convolve_rir(noise.data.data(), n, rir_n.data() + static_cast<int64_t>(c) * spec.rir_length,
                     spec.rir_length);
    es += energy(rev_s[static_cast<size_t>(c)]);
    en += energy(rev_n[static_cast<size_t>(c)]);
  }
  if (es <= 0.0) throw std::invalid_argument("make_scene: clean signal is silent");
  const double gain = en > 0.0 ? std::sqrt(es / en * std::pow(10.0, -spec.snr_db / 10.0)) : 0.0;

  Tensor noisy(Shape{spec.channels, static_cast<int>(n)});
  for (int c = 0; c < spec.channels; ++c) {
    double* row = noisy.data() + static_cast<int64_t>(c) * n;
    for (int64_t i = 0; i < n; ++i)
      row[i] = rev_s[static_cast<size_t>(c)][static_cast<size_t>(i)] +
               gain * rev_n[static_cast<size_t>(c)][static_cast<size_t>(i)];
  }
  return {AudioSegment(clean.rate, std::move(noisy)), clean};
}

// ---------------------------------------------------------------------------
// wav io (RIFF, PCM16 or IEEE float32)

namespace {

struct WavFmt {
  uint16_t format = 0;
  uint16_t channels = 0;
  uint32_t rate = 0;
  uint16_t bits = 0;
};

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("wav: truncated file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  if (!in) throw std::runtime_error("wav: truncated file");
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

}  // namespace

AudioSegment read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path);
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    throw std::runtime_error("wav: not a RIFF file: " + path);
  read_u32(in);  // riff size, unreliable in the wild
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0)
    throw std::runtime_error("wav: not a WAVE file: " + path);

  WavFmt fmt;
  bool have_fmt = false;
  std::vector<char> payload;
  while (in.read(tag, 4)) {
    const uint32_t size = read_u32(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (size < 16) throw std::runtime_error("wav: malformed fmt chunk");
      fmt.format = read_u16(in);
      fmt.channels = read_u16(in);
      fmt.rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      fmt.bits = read_u16(in);
      in.ignore(size - 16 + (size & 1));
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      payload.resize(size);
      in.read(payload.data(), size);
      if (static_cast<uint32_t>(in.gcount()) != size)
        throw std::runtime_error("wav: data chunk shorter than declared: " + path);
      if (size & 1) in.ignore(1);
    } else {
      in.ignore(size + (size & 1));
    }
  }
  if (!have_fmt || payload.empty())
    throw std::runtime_error("wav: missing fmt or data chunk: " + path);
  if (fmt.channels < 1) throw std::runtime_error("wav: zero channels: " + path);

  const int c = fmt.channels;
  int64_t frames = 0;
  Tensor data;
  if (fmt.format == 1 && fmt.bits == 16) {
    frames = static_cast<int64_t>(payload.size()) / (2 * c);
    data = Tensor(Shape{c, static_cast<int>(frames)});
    const unsigned char* p = reinterpret_cast<const unsigned char*>(payload.data());
    for (int64_t i = 0; i < frames; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const size_t off = static_cast<size_t>((i * c + ch) * 2);
        const int16_t s = static_cast<int16_t>(p[off] | (p[off + 1] << 8));
        data[static_cast<int64_t>(ch) * frames + i] = s / 32768.0;
      }
  } else if (fmt.format == 3 && fmt.bits == 32) {
    frames = static_cast<int64_t>(payload.size()) / (4 * c);
    data = Tensor(Shape{c, static_cast<int>(frames)});
    for (int64_t i = 0; i < frames; ++i)
      for (int ch = 0; ch < c; ++ch) {
        float v;
        std::memcpy(&v, payload.data() + (i * c + ch) * 4, 4);
        data[static_cast<int64_t>(ch) * frames + i] = v;
      }
  } else {
    throw std::runtime_error("wav: unsupported codec (want PCM16 or float32): " + path);
  }
  return AudioSegment(static_cast<int>(fmt.rate), std::move(data));
}

void write_wav(const std::string& path, const AudioSegment& seg, bool pcm16) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("wav: cannot create " + path);
  const int c = seg.channels();
  const int64_t frames = seg.samples();
  const uint16_t bytes_per = pcm16 ? 2 : 4;
  const uint32_t data_size = static_cast<uint32_t>(frames * c * bytes_per);
  const uint32_t fmt_size = 16;

  out.write("RIFF", 4);
  write_u32(out, 4 + (8 + fmt_size) + (8 + data_size));
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, fmt_size);
  write_u16(out, pcm16 ? 1 : 3);
  write_u16(out, static_cast<uint16_t>(c));
  write_u32(out, static_cast<uint32_t>(seg.rate));
  write_u32(out, static_cast<uint32_t>(seg.rate * c * bytes_per));
  write_u16(out, static_cast<uint16_t>(c * bytes_per));
  write_u16(out, bytes_per * 8);
  out.write("data", 4);
  write_u32(out, data_size);
  for (int64_t i = 0; i < frames; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const double v = seg.data[static_cast<int64_t>(ch) * frames + i];
      if (pcm16) {
        const long q = std::lround(std::clamp(v, -1.0, 1.0) * 32768.0);
        const int16_t s = static_cast<int16_t>(std::clamp<long>(q, -32768, 32767));
        write_u16(out, static_cast<uint16_t>(s));
      } else {
        const float f = static_cast<float>(v);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        write_u32(out, bits);
      }
    }
  if (!out) throw std::runtime_error("wav: write failed: " + path);
}

// ---------------------------------------------------------------------------
// synthetic sources

AudioSegment synth_speech_like(int64_t samples, int rate, Rng& rng) {
  const double f0 = rng.uniform(100.0, 220.0);
  const double am_rate = rng.uniform(2.0, 8.0);
  const double am_phase = rng.uniform(0.0, 2.0 * M_PI);
  const double drift = rng.uniform(-0.08, 0.08);  // slow pitch drift
  const int harmonics = std::max(1, static_cast<int>(4000.0 / f0));
  std::vector<double> phases(static_cast<size_t>(harmonics));
  for (auto& p : phases) p = rng.uniform(0.0, 2.0 * M_PI);

  Tensor x(Shape{1, static_cast<int>(samples)});
  for (int64_t i = 0; i < samples; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double inst_f0 = f0 * (1.0 + drift * t);
    double v = 0.0;
    for (int h = 1; h <= harmonics; ++h) {
      const double fh = inst_f0 * h;
      if (fh < 100.0 || fh > 4000.0) continue;
      // gentle spectral tilt toward the low formant region
      v += std::sin(2.0 * M_PI * fh * t + phases[static_cast<size_t>(h - 1)]) / h;
    }
    const double am = 0.55 + 0.45 * std::sin(2.0 * M_PI * am_rate * t + am_phase);
    x[i] = v * am;
  }
  const double peak = x.abs_max();
  if (peak > 0.0) scale_inplace(x, 0.7 / peak);
  return AudioSegment(rate, std::move(x));
}

AudioSegment synth_noise(int64_t samples, int rate, Rng& rng) {
  Tensor x(Shape{1, static_cast<int>(samples)});
  for (int64_t i = 0; i < samples; ++i) x[i] = rng.gaussian();
  const double peak = x.abs_max();
  if (peak > 0.0) scale_inplace(x, 0.7 / peak);
  return AudioSegment(rate, std::move(x));
}

// ---------------------------------------------------------------------------
// manifests

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path);
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    ManifestEntry e;
    std::string samples, snr, seed;
    if (!std::getline(ss, e.noisy_path, '\t') || !std::getline(ss, e.clean_path, '\t') ||
        !std::getline(ss, samples, '\t') || !std::getline(ss, snr, '\t') ||
        !std::getline(ss, seed, '\t'))
      throw std::runtime_error("manifest: malformed line: " + line);
    e.samples = std::stoll(samples);
    e.snr_db = std::stod(snr);
    e.seed = std::stoull(seed);
    m.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const std::string& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("manifest: cannot create " + path);
  for (const auto& e : m)
    out << e.noisy_path << '\t' << e.clean_path << '\t' << e.samples << '\t' << e.snr_db << '\t'
        << e.seed << '\n';
}

std::pair<Manifest, Manifest> build_manifest(const std::string& dir, double split_ratio,
                                             uint64_t seed) {
  if (split_ratio < 0.0 || split_ratio > 1.0)
    throw std::invalid_argument("build_manifest: split_ratio must be in [0,1]");
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const std::string suffix = "_noisy.wav";
    if (name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      stems.push_back(name.substr(0, name.size() - suffix.size()));
  }
  std::sort(stems.begin(), stems.end());

  Manifest all;
  for (const auto& stem : stems) {
    const std::string noisy = (fs::path(dir) / (stem + "_noisy.wav")).string();
    const std::string clean = (fs::path(dir) / (stem + "_clean.wav")).string();
    if (!fs::exists(clean)) continue;
    AudioSegment a = read_wav(noisy);
    ManifestEntry e;
    e.noisy_path = noisy;
    e.clean_path = clean;
    e.samples = a.samples();
    e.snr_db = 0.0;
    e.seed = 0;
    all.push_back(std::move(e));
  }

  Rng rng(seed);
  Rng shuffler = rng.split("manifest_split");
  shuffler.shuffle(all);
  const size_t n_train = static_cast<size_t>(std::llround(split_ratio * all.size()));
  Manifest train(all.begin(), all.begin() + n_train);
  Manifest val(all.begin() + n_train, all.end());
  write_manifest((fs::path(dir) / "train.tsv").string(), train);
  write_manifest((fs::path(dir) / "val.tsv").string(), val);
  return {train, val};
}

}  // namespace se3d
