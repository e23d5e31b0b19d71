#include "se3d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace se3d {

namespace {

constexpr int kStoiRate = 10000;
constexpr int kFrame = 256;
constexpr int kHop = 128;
constexpr int kFft = 512;
constexpr int kBands = 15;
constexpr double kBandStart = 150.0;
constexpr int kSegFrames = 30;      // 384 ms at the 10 kHz frame rate
constexpr double kDynRange = 40.0;  // silent-frame threshold in dB
constexpr double kBeta = -15.0;     // lower SDR clipping bound
constexpr double kTiny = 1e-20;

// MATLAB-style symmetric Hann without zero endpoints.
std::vector<double> hann_inner(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k)
    w[static_cast<size_t>(k)] = 0.5 * (1.0 - std::cos(2.0 * M_PI * (k + 1) / (n + 1)));
  return w;
}

std::vector<int> frame_starts(int64_t len) {
  std::vector<int> starts;
  for (int64_t s = 0; s + kFrame < len; s += kHop) starts.push_back(static_cast<int>(s));
  return starts;
}

void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const std::vector<int> starts = frame_starts(static_cast<int64_t>(x.size()));
  if (starts.empty()) throw std::invalid_argument("stoi: input too short");
  const std::vector<double> w = hann_inner(kFrame);
  std::vector<double> energy(starts.size());
  double emax = -1e300;
  for (size_t j = 0; j < starts.size(); ++j) {
    double e = 0.0;
    for (int k = 0; k < kFrame; ++k) {
      const double v = x[static_cast<size_t>(starts[j] + k)] * w[static_cast<size_t>(k)];
      e += v * v;
    }
    energy[j] = 20.0 * std::log10(std::sqrt(e / kFrame) + kTiny);
    emax = std::max(emax, energy[j]);
  }
  std::vector<double> xs(x.size(), 0.0), ys(y.size(), 0.0);
  int64_t count = 0, last = 0;
  for (size_t j = 0; j < starts.size(); ++j) {
    if (energy[j] <= emax - kDynRange) continue;
    const int64_t out = count * kHop;
    for (int k = 0; k < kFrame; ++k) {
      xs[static_cast<size_t>(out + k)] += x[static_cast<size_t>(starts[j] + k)] * w[static_cast<size_t>(k)];
      ys[static_cast<size_t>(out + k)] += y[static_cast<size_t>(starts[j] + k)] * w[static_cast<size_t>(k)];
    }
    last = out + kFrame;
    ++count;
  }
  xs.resize(static_cast<size_t>(last));
  ys.resize(static_cast<size_t>(last));
  x = std::move(xs);
  y = std::move(ys);
}

// power spectra per frame: frames x (kFft/2+1)
std::vector<std::vector<double>> power_spectrogram(const std::vector<double>& x) {
  const std::vector<int> starts = frame_starts(static_cast<int64_t>(x.size()));
  const std::vector<double> w = hann_inner(kFrame);
  std::vector<std::vector<double>> out;
  out.reserve(starts.size());
  std::vector<double> re(kFft), im(kFft);
  for (int s : starts) {
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    for (int k = 0; k < kFrame; ++k)
      re[static_cast<size_t>(k)] = x[static_cast<size_t>(s + k)] * w[static_cast<size_t>(k)];
    fft_inplace(re, im, false);
    std::vector<double> p(kFft / 2 + 1);
    for (int b = 0; b <= kFft / 2; ++b)
      p[static_cast<size_t>(b)] = re[static_cast<size_t>(b)] * re[static_cast<size_t>(b)] +
                                  im[static_cast<size_t>(b)] * im[static_cast<size_t>(b)];
    out.push_back(std::move(p));
  }
  return out;
}

// one-third octave band bin ranges [lo, hi) snapped to nearest bins
std::vector<std::pair<int, int>> third_octave_bands() {
  const int bins = kFft / 2 + 1;
  std::vector<double> f(static_cast<size_t>(bins));
  for (int b = 0; b < bins; ++b)
    f[static_cast<size_t>(b)] = static_cast<double>(b) * kStoiRate / kFft;
  auto nearest = [&](double target) {
    int best = 0;
    double bd = 1e300;
    for (int b = 0; b < bins; ++b) {
      const double d = (f[static_cast<size_t>(b)] - target) * (f[static_cast<size_t>(b)] - target);
      if (d < bd) {
        bd = d;
        best = b;
      }
    }
    return best;
  };
  std::vector<std::pair<int, int>> bands;
  for (int j = 0; j < kBands; ++j) {
    const double cf = kBandStart * std::pow(2.0, j / 3.0);
    const int lo = nearest(cf * std::pow(2.0, -1.0 / 6.0));
    const int hi = nearest(cf * std::pow(2.0, 1.0 / 6.0));
    if (hi <= lo) throw std::runtime_error("stoi: empty one-third octave band");
    bands.emplace_back(lo, hi);
  }
  return bands;
}

// band envelopes: bands x frames
std::vector<std::vector<double>> band_envelopes(const std::vector<std::vector<double>>& p) {
  const auto bands = third_octave_bands();
  std::vector<std::vector<double>> env(kBands, std::vector<double>(p.size()));
  for (size_t m = 0; m < p.size(); ++m)
    for (int j = 0; j < kBands; ++j) {
      double acc = 0.0;
      for (int b = bands[static_cast<size_t>(j)].first; b < bands[static_cast<size_t>(j)].second;
           ++b)
        acc += p[m][static_cast<size_t>(b)];
      env[static_cast<size_t>(j)][m] = std::sqrt(acc);
    }
  return env;
}

std::vector<double> resample_rational(const std::vector<double>& x, int up, int down) {
  // windowed-sinc lowpass at the upsampled rate, cutoff min(pi/up, pi/down)
  const int half = 256;
  const int taps = 2 * half + 1;
  const double fc = 0.5 / std::max(up, down);  // cycles per upsampled sample
  std::vector<double> h(static_cast<size_t>(taps));
  for (int n = 0; n < taps; ++n) {
    const double t = n - half;
    const double sinc = t == 0.0 ? 2.0 * fc : std::sin(2.0 * M_PI * fc * t) / (M_PI * t);
    const double win = 0.5 * (1.0 - std::cos(2.0 * M_PI * n / (taps - 1)));
    h[static_cast<size_t>(n)] = up * sinc * win;
  }
  const int64_t out_len = (static_cast<int64_t>(x.size()) * up + down - 1) / down;
  std::vector<double> y(static_cast<size_t>(out_len), 0.0);
  for (int64_t m = 0; m < out_len; ++m) {
    const int64_t center = m * down;  // position on the upsampled grid
    double acc = 0.0;
    // only grid positions that are multiples of `up` carry input samples
    int64_t q = center - half;
    int64_t rem = ((q % up) + up) % up;
    int64_t first = q + (rem == 0 ? 0 : up - rem);
    for (int64_t pos = first; pos <= center + half; pos += up) {
      const int64_t src = pos / up;
      if (src < 0 || src >= static_cast<int64_t>(x.size())) continue;
      acc += h[static_cast<size_t>(pos - q)] * x[static_cast<size_t>(src)];
    }
    y[static_cast<size_t>(m)] = acc;
  }
  return y;
}

}  // namespace

std::vector<double> resample_16k_to_10k(const std::vector<double>& x) {
  return resample_rational(x, 5, 8);
}

double stoi(const AudioSegment& clean, const AudioSegment& degraded) {
  if (clean.rate != 16000 || degraded.rate != 16000)
    throw std::invalid_argument("stoi: inputs must be 16 kHz");
  if (clean.channels() != 1 || degraded.channels() != 1)
    throw std::invalid_argument("stoi: inputs must be mono");
  if (clean.samples() != degraded.samples())
    throw std::invalid_argument("stoi: length mismatch");

  std::vector<double> x(clean.data.data(), clean.data.data() + clean.samples());
  std::vector<double> y(degraded.data.data(), degraded.data.data() + degraded.samples());
  x = resample_16k_to_10k(x);
  y = resample_16k_to_10k(y);

  remove_silent_frames(x, y);

  const auto px = power_spectrogram(x);
  const auto py = power_spectrogram(y);
  if (static_cast<int>(px.size()) < kSegFrames)
    throw std::invalid_argument("stoi: fewer than 30 active frames (about 0.4 s of speech)");

  const auto ex = band_envelopes(px);
  const auto ey = band_envelopes(py);
  const int frames = static_cast<int>(px.size());
  const double clip = 1.0 + std::pow(10.0, -kBeta / 20.0);

  double acc = 0.0;
  int64_t terms = 0;
  std::vector<double> xs(kSegFrames), ys(kSegFrames);
  for (int m = kSegFrames; m <= frames; ++m) {
    for (int j = 0; j < kBands; ++j) {
      double nx = 0.0, ny = 0.0;
      for (int k = 0; k < kSegFrames; ++k) {
        xs[static_cast<size_t>(k)] = ex[static_cast<size_t>(j)][static_cast<size_t>(m - kSegFrames + k)];
        ys[static_cast<size_t>(k)] = ey[static_cast<size_t>(j)][static_cast<size_t>(m - kSegFrames + k)];
        nx += xs[static_cast<size_t>(k)] * xs[static_cast<size_t>(k)];
        ny += ys[static_cast<size_t>(k)] * ys[static_cast<size_t>(k)];
      }
      const double alpha = std::sqrt(nx / (ny + kTiny));
      double mx = 0.0, my = 0.0;
      for (int k = 0; k < kSegFrames; ++k) {
        ys[static_cast<size_t>(k)] =
            std::min(ys[static_cast<size_t>(k)] * alpha, xs[static_cast<size_t>(k)] * clip);
        mx += xs[static_cast<size_t>(k)];
        my += ys[static_cast<size_t>(k)];
      }
      mx /= kSegFrames;
      my /= kSegFrames;
      double num = 0.0, dx = 0.0, dy = 0.0;
      for (int k = 0; k < kSegFrames; ++k) {
        const double a = xs[static_cast<size_t>(k)] - mx;
        const double b = ys[static_cast<size_t>(k)] - my;
        num += a * b;
        dx += a * a;
        dy += b * b;
      }
      acc += num / (std::sqrt(dx) * std::sqrt(dy) + kTiny);
      ++terms;
    }
  }
  const double d = acc / static_cast<double>(terms);
  return std::clamp(d, 0.0, 1.0);
}

double composite_metric(double stoi_score, double wer) {
  if (stoi_score < 0.0 || stoi_score > 1.0 || wer < 0.0 || wer > 1.0)
    throw std::invalid_argument("composite_metric: inputs must be in [0,1]");
  return (stoi_score + (1.0 - wer)) / 2.0;
}

MetricReport make_report(double stoi_score, std::optional<double> wer) {
  MetricReport r;
  r.stoi = stoi_score;
  r.wer = wer;
  if (wer) r.composite = composite_metric(stoi_score, *wer);
  return r;
}

}  // namespace se3d
