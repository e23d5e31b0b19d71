#include "se3d/dsp.hpp"

#include <cmath>
#include <stdexcept>

namespace se3d {

AudioSegment::AudioSegment(int rate_, Tensor data_) : rate(rate_), data(std::move(data_)) {
  if (data.rank() != 2) throw std::invalid_argument("audio data must be (C,N)");
  if (rate <= 0) throw std::invalid_argument("audio rate must be positive");
  if (!data.all_finite()) throw std::invalid_argument("audio contains non-finite samples");
}

void fft_inplace(std::vector<double>& re, std::vector<double>& im, bool inverse) {
  const size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft size must be a power of two");
  if (im.size() != n) throw std::invalid_argument("fft plane size mismatch");

  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }

  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (size_t k = 0; k < len / 2; ++k) {
        const size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
  if (inverse) {
    const double s = 1.0 / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) {
      re[i] *= s;
      im[i] *= s;
    }
  }
}

std::vector<double> hann_periodic(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k)
    w[static_cast<size_t>(k)] = 0.5 * (1.0 - std::cos(2.0 * M_PI * k / n));
  return w;
}

int stft_frames(int64_t samples, int window, int hop) {
  if (samples < window) throw std::invalid_argument("stft: signal shorter than one window");
  return static_cast<int>(1 + (samples - window) / hop);
}

namespace {

void check_window(int window, int hop) {
  if (window < 2 || (window & (window - 1)) != 0)
    throw std::invalid_argument("stft window must be a power of two");
  if (hop < 1 || hop > window) throw std::invalid_argument("stft hop must be in [1, window]");
}

// planes (C,L,F) from samples (C,N)
void stft_core(const Tensor& x, int window, int hop, Tensor& re, Tensor& im) {
  const int c = x.dim(0);
  const int64_t n = x.dim(1);
  const int l = stft_frames(n, window, hop);
  const int f = window / 2 + 1;
  re = Tensor(Shape{c, l, f});
  im = Tensor(Shape{c, l, f});
  const std::vector<double> w = hann_periodic(window);
  std::vector<double> bre(static_cast<size_t>(window)), bim(static_cast<size_t>(window));
  for (int ch = 0; ch < c; ++ch) {
    const double* px = x.data() + static_cast<int64_t>(ch) * n;
    for (int fr = 0; fr < l; ++fr) {
      const double* seg = px + static_cast<int64_t>(fr) * hop;
      for (int k = 0; k < window; ++k) {
        bre[static_cast<size_t>(k)] = seg[k] * w[static_cast<size_t>(k)];
        bim[static_cast<size_t>(k)] = 0.0;
      }
      fft_inplace(bre, bim, false);
      double* pre = re.data() + (static_cast<int64_t>(ch) * l + fr) * f;
      double* pim = im.data() + (static_cast<int64_t>(ch) * l + fr) * f;
      for (int b = 0; b < f; ++b) {
        pre[b] = bre[static_cast<size_t>(b)];
        pim[b] = bim[static_cast<size_t>(b)];
      }
    }
  }
}

// samples (C,out_len) from planes (C,L,F)
Tensor istft_core(const Tensor& re, const Tensor& im, int window, int hop, int64_t out_len) {
  const int c = re.dim(0);
  const int l = re.dim(1);
  const int f = re.dim(2);
  if (f != window / 2 + 1) throw std::invalid_argument("istft: bins inconsistent with window");
  const int64_t natural = static_cast<int64_t>(window) + static_cast<int64_t>(l - 1) * hop;
  if (out_len < 0) out_len = natural;

  const std::vector<double> w = hann_periodic(window);
  std::vector<double> den(static_cast<size_t>(out_len), 0.0);
  for (int fr = 0; fr < l; ++fr) {
    const int64_t base = static_cast<int64_t>(fr) * hop;
    for (int k = 0; k < window && base + k < out_len; ++k)
      den[static_cast<size_t>(base + k)] += w[static_cast<size_t>(k)] * w[static_cast<size_t>(k)];
  }

  Tensor out(Shape{c, static_cast<int>(out_len)});
  std::vector<double> bre(static_cast<size_t>(window)), bim(static_cast<size_t>(window));
  for (int ch = 0; ch < c; ++ch) {
    double* py = out.data() + static_cast<int64_t>(ch) * out_len;
    for (int fr = 0; fr < l; ++fr) {
      const double* pre = re.data() + (static_cast<int64_t>(ch) * l + fr) * f;
      const double* pim = im.data() + (static_cast<int64_t>(ch) * l + fr) * f;
      for (int b = 0; b < f; ++b) {
        bre[static_cast<size_t>(b)] = pre[b];
        bim[static_cast<size_t>(b)] = pim[b];
      }
      for (int b = f; b < window; ++b) {  // Hermitian extension
        bre[static_cast<size_t>(b)] = pre[window - b];
        bim[static_cast<size_t>(b)] = -pim[window - b];
      }
      fft_inplace(bre, bim, true);
      const int64_t base = static_cast<int64_t>(fr) * hop;
      for (int k = 0; k < window && base + k < out_len; ++k)
        py[base + k] += w[static_cast<size_t>(k)] * bre[static_cast<size_t>(k)];
    }
    for (int64_t s = 0; s < out_len; ++s)
      py[s] = den[static_cast<size_t>(s)] < 1e-8 ? 0.0 : py[s] / den[static_cast<size_t>(s)];
  }
  return out;
}

// gradient of istft_core w.r.t. the spectrogram planes
void istft_grad(const Tensor& gout, int window, int hop, int l, Tensor& gre, Tensor& gim) {
  const int c = gout.dim(0);
  const int64_t out_len = gout.dim(1);
  const int f = window / 2 + 1;
  const std::vector<double> w = hann_periodic(window);
  std::vector<double> den(static_cast<size_t>(out_len), 0.0);
  for (int fr = 0; fr < l; ++fr) {
    const int64_t base = static_cast<int64_t>(fr) * hop;
    for (int k = 0; k < window && base + k < out_len; ++k)
      den[static_cast<size_t>(base + k)] += w[static_cast<size_t>(k)] * w[static_cast<size_t>(k)];
  }
  gre = Tensor(Shape{c, l, f});
  gim = Tensor(Shape{c, l, f});
  const double invn = 1.0 / static_cast<double>(window);
  std::vector<double> bre(static_cast<size_t>(window)), bim(static_cast<size_t>(window));
  for (int ch = 0; ch < c; ++ch) {
    const double* pg = gout.data() + static_cast<int64_t>(ch) * out_len;
    for (int fr = 0; fr < l; ++fr) {
      const int64_t base = static_cast<int64_t>(fr) * hop;
      for (int k = 0; k < window; ++k) {
        double v = 0.0;
        if (base + k < out_len && den[static_cast<size_t>(base + k)] >= 1e-8)
          v = w[static_cast<size_t>(k)] * pg[base + k] / den[static_cast<size_t>(base + k)];
        bre[static_cast<size_t>(k)] = v;
        bim[static_cast<size_t>(k)] = 0.0;
      }
      fft_inplace(bre, bim, false);
      double* pre = gre.data() + (static_cast<int64_t>(ch) * l + fr) * f;
      double* pim = gim.data() + (static_cast<int64_t>(ch) * l + fr) * f;
      for (int b = 0; b < f; ++b) {
        const double mult = (b == 0 || b == window / 2) ? 1.0 : 2.0;
        pre[b] = mult * invn * bre[static_cast<size_t>(b)];
        pim[b] = mult * invn * bim[static_cast<size_t>(b)];
      }
    }
  }
}

}  // namespace

ComplexSpectrogram stft(const AudioSegment& seg, int window, int hop) {
  check_window(window, hop);
  ComplexSpectrogram spec;
  stft_core(seg.data, window, hop, spec.re, spec.im);
  return spec;
}

AudioSegment istft(const ComplexSpectrogram& spec, int window, int hop, int64_t out_len,
                   int rate) {
  check_window(window, hop);
  return AudioSegment(rate, istft_core(spec.re, spec.im, window, hop, out_len));
}

Tensor magnitude(const ComplexSpectrogram& spec) {
  Tensor out(spec.re.shape());
  const double* pr = spec.re.data();
  const double* pi = spec.im.data();
  double* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = std::hypot(pr[i], pi[i]);
  return out;
}

ComplexSpectrogram complex_mul_real(const ComplexSpectrogram& spec, const Tensor& mask) {
  if (!mask.same_shape(spec.re)) throw std::invalid_argument("mask shape mismatch");
  ComplexSpectrogram out;
  out.re = spec.re;
  out.im = spec.im;
  double* pr = out.re.data();
  double* pi = out.im.data();
  const double* pm = mask.data();
  for (int64_t i = 0; i < mask.numel(); ++i) {
    pr[i] *= pm[i];
    pi[i] *= pm[i];
  }
  return out;
}

std::vector<AudioSegment> segment(const AudioSegment& audio, double seg_seconds) {
  const int64_t seg_len = std::llround(seg_seconds * audio.rate);
  if (seg_len < 1) throw std::invalid_argument("segment: length must be positive");
  const int c = audio.channels();
  const int64_t n = audio.samples();
  const int64_t count = (n + seg_len - 1) / seg_len;
  std::vector<AudioSegment> out;
  out.reserve(static_cast<size_t>(count));
  for (int64_t s = 0; s < count; ++s) {
    Tensor chunk(Shape{c, static_cast<int>(seg_len)});
    const int64_t start = s * seg_len;
    const int64_t avail = std::min(seg_len, n - start);
    for (int ch = 0; ch < c; ++ch)
      std::copy_n(audio.data.data() + static_cast<int64_t>(ch) * n + start, avail,
                  chunk.data() + static_cast<int64_t>(ch) * seg_len);
    out.emplace_back(audio.rate, std::move(chunk));
  }
  return out;
}

Var istft_op(const Var& re, const Var& im, int window, int hop, int64_t out_len) {
  check_window(window, hop);
  if (!re.value().same_shape(im.value()))
    throw std::invalid_argument("istft_op: plane shape mismatch");
  const int l = re.value().dim(1);
  Tensor out = istft_core(re.value(), im.value(), window, hop, out_len);
  return make_node(std::move(out), {re, im},
                   [re, im, window, hop, l](Node& n) {
                     Tensor gre, gim;
                     istft_grad(n.grad, window, hop, l, gre, gim);
                     if (re.requires_grad()) accumulate_grad(*re.node(), gre);
                     if (im.requires_grad()) accumulate_grad(*im.node(), gim);
                   },
                   "istft");
}

}  // namespace se3d
