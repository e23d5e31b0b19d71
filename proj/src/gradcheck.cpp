#include "se3d/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace se3d {

GradCheckReport grad_check(const std::function<Var()>& make_loss,
                           const std::vector<Parameter*>& params, double eps) {
  for (Parameter* p : params) p->zero_grad();
  Var loss = make_loss();
  if (loss.numel() != 1) throw std::invalid_argument("grad_check: loss must be scalar");
  backward(loss);

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad());

  auto eval = [&]() {
    NoGradGuard ng;
    return make_loss().value()[0];
  };

  GradCheckReport rep;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    for (int64_t i = 0; i < p.value().numel(); ++i) {
      const double orig = p.value()[i];
      p.value()[i] = orig + eps;
      const double lp = eval();
      p.value()[i] = orig - eps;
      const double lm = eval();
      p.value()[i] = orig;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
      const double rel = std::fabs(a - numeric) / denom;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst = p.name() + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

}  // namespace se3d
