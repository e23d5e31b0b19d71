#pragma once

#include <vector>

#include "se3d/autodiff.hpp"
#include "se3d/tensor.hpp"

namespace se3d {

/// Multichannel time-domain signal, data laid out (C, N).
struct AudioSegment {
  int rate = 16000;
  Tensor data;

  AudioSegment() = default;
  AudioSegment(int rate_, Tensor data_);
  int channels() const { return data.dim(0); }
  int64_t samples() const { return data.dim(1); }
};

/// One-sided complex spectrogram, planes laid out (C, L, F).
struct ComplexSpectrogram {
  Tensor re, im;

  int channels() const { return re.dim(0); }
  int frames() const { return re.dim(1); }
  int bins() const { return re.dim(2); }
};

// Radix-2 complex FFT, n a power of two. inverse applies conjugation and 1/n.
void fft_inplace(std::vector<double>& re, std::vector<double>& im, bool inverse);

std::vector<double> hann_periodic(int n);

int stft_frames(int64_t samples, int window, int hop);

/// Hann-windowed one-sided STFT without center padding.
/// L = 1 + floor((N - window)/hop), F = window/2 + 1.
ComplexSpectrogram stft(const AudioSegment& seg, int window = 512, int hop = 128);

/// Weighted overlap-add inverse with least-squares synthesis normalization
/// (division by the summed squared analysis window). Samples where the
/// window-energy sum falls below 1e-8 are set to zero.
AudioSegment istft(const ComplexSpectrogram& spec, int window = 512, int hop = 128,
                   int64_t out_len = -1, int rate = 16000);

Tensor magnitude(const ComplexSpectrogram& spec);
ComplexSpectrogram complex_mul_real(const ComplexSpectrogram& spec, const Tensor& mask);

/// Cuts into fixed non-overlapping segments; the final partial segment is
/// zero-padded to full length.
std::vector<AudioSegment> segment(const AudioSegment& audio, double seg_seconds = 4.792);

/// Differentiable inverse STFT over (C, L, F) planes -> (C, out_len).
Var istft_op(const Var& re, const Var& im, int window, int hop, int64_t out_len);

}  // namespace se3d
