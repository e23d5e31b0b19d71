#pragma once

#include <optional>
#include <vector>

#include "se3d/dsp.hpp"

namespace se3d {

struct MetricReport {
  double stoi = 0.0;
  std::optional<double> wer;        // supplied externally when available
  std::optional<double> composite;  // (stoi + (1 - wer)) / 2
};

/// Short-time objective intelligibility of `degraded` against `clean`.
/// Mono 16 kHz inputs; internally resampled to 10 kHz and evaluated with
/// the standard parameterization (40 dB silent-frame range, 15 one-third
/// octave bands from 150 Hz, 384 ms envelope segments, clipped normalized
/// correlation). Result clamped to [0, 1].
double stoi(const AudioSegment& clean, const AudioSegment& degraded);

/// Challenge composite: (stoi + (1 - wer)) / 2. Both inputs in [0, 1].
double composite_metric(double stoi_score, double wer);

MetricReport make_report(double stoi_score, std::optional<double> wer);

/// Rational 5/8 resampler (windowed-sinc polyphase), used by stoi.
std::vector<double> resample_16k_to_10k(const std::vector<double>& x);

}  // namespace se3d
