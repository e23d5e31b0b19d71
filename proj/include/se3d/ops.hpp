#pragma once

#include <vector>

#include "se3d/autodiff.hpp"

namespace se3d {

// Elementwise binary ops require identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var add_scalar(const Var& a, double c);
Var mul_scalar(const Var& a, double c);
Var neg(const Var& a);

Var abs_v(const Var& a);  // subgradient 0 at 0
Var sigmoid(const Var& a);
Var tanh_v(const Var& a);
Var leaky_relu(const Var& a, double slope = 0.01);
Var hypot_v(const Var& re, const Var& im);  // sqrt(re^2 + im^2)

Var sum_all(const Var& a);   // -> shape {1}
Var mean_all(const Var& a);  // -> shape {1}

Var reshape(const Var& a, Shape s);
Var permute(const Var& a, const std::vector<int>& perm);
Var narrow(const Var& a, int axis, int start, int len);
Var concat(const std::vector<Var>& xs, int axis);

/// Softmax over axis 0 of a 2-D tensor (independently per column).
Var softmax_axis0(const Var& a);

/// x has shape (C, ...); w has shape (C). Scales every channel slice.
Var channel_scale(const Var& x, const Var& w);

}  // namespace se3d
