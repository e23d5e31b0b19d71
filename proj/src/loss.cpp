#include "se3d/loss.hpp"

#include <cmath>
#include <stdexcept>

#include "se3d/ops.hpp"

namespace se3d {

void LossConfig::validate() const {
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("loss: gamma must be in [0,1]");
  if (epsilon <= 0.0) throw std::invalid_argument("loss: epsilon must be positive");
}

Var mae_loss(const Tensor& clean, const Var& est) {
  if (!clean.same_shape(est.value()))
    throw std::invalid_argument("mae_loss: length mismatch " + shape_str(clean.shape()) +
                                " vs " + shape_str(est.shape()));
  return mean_all(abs_v(sub(Var::constant(clean), est)));
}

namespace {

// mean of |ref - est| / (|ref| + eps) with the reference held constant
Var relative_term(const Tensor& ref, const Var& est, double eps) {
  if (!ref.same_shape(est.value()))
    throw std::invalid_argument("combined_loss: shape mismatch " + shape_str(ref.shape()) +
                                " vs " + shape_str(est.shape()));
  Tensor inv_den(ref.shape());
  for (int64_t i = 0; i < ref.numel(); ++i)
    inv_den[i] = 1.0 / (std::fabs(ref[i]) + eps);
  Var diff = abs_v(sub(Var::constant(ref), est));
  return mean_all(mul(diff, Var::constant(std::move(inv_den))));
}

}  // namespace

Var combined_loss(const Tensor& clean_mag, const Var& est_mag, const Tensor& clean,
                  const Var& est, const LossConfig& cfg) {
  cfg.validate();
  if (cfg.variant == LossVariant::kMae) return mae_loss(clean, est);
  Var tf = relative_term(clean_mag, est_mag, cfg.epsilon);
  Var td = relative_term(clean, est, cfg.epsilon);
  return add(mul_scalar(tf, cfg.gamma), mul_scalar(td, 1.0 - cfg.gamma));
}

}  // namespace se3d
