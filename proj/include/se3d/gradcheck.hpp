#pragma once

#include <functional>
#include <string>
#include <vector>

#include "se3d/parameter.hpp"

namespace se3d {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // "param[flat_index]"
};

/// Compares reverse-mode gradients of a scalar-valued closure against
/// central finite differences over every element of `params`. The closure
/// must be deterministic (re-running it with the same parameter values must
/// give the same loss).
GradCheckReport grad_check(const std::function<Var()>& make_loss,
                           const std::vector<Parameter*>& params, double eps = 1e-4);

}  // namespace se3d
