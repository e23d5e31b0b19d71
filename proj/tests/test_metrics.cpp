#include <doctest.h>

#include <cmath>

#include "se3d/data.hpp"
#include "se3d/metrics.hpp"
#include "stoi_reference.hpp"

using namespace se3d;

namespace {

AudioSegment mix_at_snr(const AudioSegment& clean, const AudioSegment& noise, double snr_db) {
  double es = 0.0, en = 0.0;
  for (int64_t i = 0; i < clean.samples(); ++i) {
    es += clean.data[i] * clean.data[i];
    en += noise.data[i] * noise.data[i];
  }
  const double g = std::sqrt(es / en * std::pow(10.0, -snr_db / 10.0));
  Tensor out = clean.data;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += g * noise.data[i];
  return AudioSegment(clean.rate, std::move(out));
}

}  // namespace

TEST_CASE("composite metric reproduces the reported system scores") {
  // (STOI, WER) -> reported composite, rounded to three decimals
  const struct {
    double stoi, wer, reported;
  } rows[] = {
      {0.624, 0.599, 0.513}, {0.679, 0.562, 0.559}, {0.837, 0.167, 0.835},
      {0.859, 0.148, 0.856},                                              // systems table
      {0.802, 0.171, 0.816}, {0.862, 0.161, 0.851}, {0.841, 0.143, 0.849}  // loss table
  };
  for (const auto& row : rows) {
    const double got = composite_metric(row.stoi, row.wer);
    CHECK(std::fabs(got - row.reported) <= 0.0005 + 1e-12);
  }
  CHECK(composite_metric(1.0, 0.0) == doctest::Approx(1.0));
  CHECK_THROWS(composite_metric(1.2, 0.0));
  CHECK_THROWS(composite_metric(0.5, -0.1));
}

TEST_CASE("composite metric monotonicity") {
  CHECK(composite_metric(0.9, 0.2) > composite_metric(0.8, 0.2));
  CHECK(composite_metric(0.9, 0.1) > composite_metric(0.9, 0.2));
}

TEST_CASE("metric report carries the composite only when wer is present") {
  MetricReport with = make_report(0.8, 0.2);
  CHECK(with.composite.has_value());
  CHECK(*with.composite == doctest::Approx(0.8));
  MetricReport without = make_report(0.8, std::nullopt);
  CHECK_FALSE(without.composite.has_value());
}

TEST_CASE("stoi of a signal with itself is essentially one") {
  Rng r(50);
  AudioSegment x = synth_speech_like(16000, 16000, r);
  CHECK(stoi(x, x) >= 0.999);
}

TEST_CASE("stoi decreases as noise grows") {
  Rng r(51);
  AudioSegment x = synth_speech_like(16000, 16000, r);
  Rng rn = r.split("noise");
  AudioSegment n = synth_noise(16000, 16000, rn);
  double prev = 2.0;
  for (double snr : {20.0, 10.0, 0.0, -10.0}) {
    const double s = stoi(x, mix_at_snr(x, n, snr));
    CHECK(s <= prev + 1e-9);
    prev = s;
  }
  CHECK(prev < 0.95);  // at -10 dB the score must have moved well below self-similarity
}

TEST_CASE("stoi matches an independently implemented reference") {
  Rng r(52);
  AudioSegment x = synth_speech_like(12000, 16000, r);
  Rng rn = r.split("noise");
  AudioSegment n = synth_noise(12000, 16000, rn);
  for (double snr : {12.0, 2.0}) {
    AudioSegment y = mix_at_snr(x, n, snr);
    std::vector<double> xv(x.data.data(), x.data.data() + x.samples());
    std::vector<double> yv(y.data.data(), y.data.data() + y.samples());
    const double mine = stoi(x, y);
    const double ref = stoi_ref::stoi(xv, yv);
    INFO("snr ", snr, ": mine=", mine, " ref=", ref);
    CHECK(std::fabs(mine - ref) <= 0.01);
  }
}

TEST_CASE("stoi is invariant to global gain") {
  Rng r(53);
  AudioSegment x = synth_speech_like(12000, 16000, r);
  Rng rn = r.split("noise");
  AudioSegment y = mix_at_snr(x, synth_noise(12000, 16000, rn), 5.0);
  const double base = stoi(x, y);
  for (double gain : {0.1, 1.0, 10.0}) {
    AudioSegment xg(16000, x.data);
    AudioSegment yg(16000, y.data);
    scale_inplace(xg.data, gain);
    scale_inplace(yg.data, 1.0 / gain);
    CHECK(std::fabs(stoi(xg, y) - base) <= 1e-9);
    CHECK(std::fabs(stoi(x, yg) - base) <= 1e-9);
  }
}

TEST_CASE("stoi rejects unusable inputs") {
  Rng r(54);
  AudioSegment x = synth_speech_like(2000, 16000, r);  // 0.125 s, too short
  CHECK_THROWS(stoi(x, x));
  AudioSegment wrong_rate = synth_speech_like(16000, 8000, r);
  CHECK_THROWS(stoi(wrong_rate, wrong_rate));
  AudioSegment a = synth_speech_like(16000, 16000, r);
  AudioSegment b = synth_speech_like(12000, 16000, r);
  CHECK_THROWS(stoi(a, b));
}

TEST_CASE("resampler preserves a low-frequency tone") {
  const int n = 8000;
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = std::sin(2.0 * M_PI * 440.0 * i / 16000.0);
  std::vector<double> y = resample_16k_to_10k(x);
  CHECK(y.size() == static_cast<size_t>((n * 5 + 7) / 8));
  // compare against the analytically resampled tone, away from the edges
  double err = 0.0, den = 0.0;
  for (size_t m = 400; m < y.size() - 400; ++m) {
    const double want = std::sin(2.0 * M_PI * 440.0 * static_cast<double>(m) / 10000.0);
    err += (y[m] - want) * (y[m] - want);
    den += want * want;
  }
  CHECK(std::sqrt(err / den) <= 1e-3);
}
