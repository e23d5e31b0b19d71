#pragma once

#include "se3d/autodiff.hpp"
#include "se3d/tensor.hpp"

namespace se3d {

enum class LossVariant { kMae, kCombined };

struct LossConfig {
  double gamma = 0.5;    // T-F weight; time-domain weight is 1 - gamma
  double epsilon = 1e-8; // denominator guard for the relative errors
  LossVariant variant = LossVariant::kCombined;

  void validate() const;
};

/// Mean absolute error over samples; clean (1,T) constant, est differentiable.
Var mae_loss(const Tensor& clean, const Var& est);

/// gamma-weighted sum of the normalized relative error in the T-F domain
/// (clean magnitude spectrogram vs estimated magnitude) and the time domain.
Var combined_loss(const Tensor& clean_mag, const Var& est_mag, const Tensor& clean,
                  const Var& est, const LossConfig& cfg);

}  // namespace se3d
