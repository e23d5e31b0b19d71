#pragma once

#include <string>

#include "se3d/autodiff.hpp"
#include "se3d/ops.hpp"
#include "se3d/parameter.hpp"
#include "se3d/rng.hpp"

namespace se3d {

enum class LayerKind {
  kConv2d,
  kConvTranspose2d,
  kBatchNorm,
  kGroupNorm,
  kLinear,
  kBiLstm,
  kActivation,
  kDropout,
};

/// Hyperparameters of one layer. Only the fields relevant to `kind` are
/// meaningful; extents default to 1 so specs stay valid when unused.
struct LayerSpec {
  LayerKind kind = LayerKind::kConv2d;
  int in_channels = 1;
  int out_channels = 1;
  int kernel_h = 1, kernel_w = 1;
  int stride_h = 1, stride_w = 1;
  double slope = 0.01;    // leaky_relu negative slope
  int groups = 1;         // groupnorm
  int hidden = 1;         // bilstm
  double rate = 0.0;      // dropout

  void validate() const;
};

LayerSpec conv_spec(int cin, int cout, int kh, int kw, int sh, int sw);

/// Output geometry of a "same"-padded strided convolution: H' = ceil(H/s),
/// padding split evenly with the extra row/column on the trailing side.
struct ConvGeom {
  int cin, h, w;
  int cout, oh, ow;
  int kh, kw, sh, sw;
  int pad_top, pad_left;
};
ConvGeom conv_geometry(const LayerSpec& spec, int h, int w);

// weight (C_out, C_in, kh, kw), bias (C_out); input (C_in, H, W)
Var conv2d(const Var& x, const LayerSpec& spec, const Var& weight, const Var& bias);

// Exact adjoint of conv2d under the same spec. `target_h/w` fix the output
// geometry and must satisfy conv_out(target) == input spatial dims.
// weight (C_out, C_in, kh, kw), bias (C_in); input (C_out, H', W')
Var conv_transpose2d(const Var& y, const LayerSpec& spec, const Var& weight, const Var& bias,
                     int target_h, int target_w);

// Per-channel affine normalization over the spatial extent of (C, H, W).
// Training mode uses batch statistics and updates the running buffers.
Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
                Tensor& running_var, bool training, double momentum = 0.1, double eps = 1e-5);

Var groupnorm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps = 1e-5);

// slope: one learnable value per channel of x
Var prelu(const Var& x, const Var& slope);

// x (..., D_in), weight (D_out, D_in), bias (D_out) or undefined Var
Var linear(const Var& x, const Var& weight, const Var& bias);

// Inverted dropout; identity in eval mode or at rate 0.
Var dropout(const Var& x, double rate, bool training, Rng& stream);

struct LstmDirParams {
  Var w_ih;  // (4H, D) gate order: input, forget, cell, output
  Var w_hh;  // (4H, H)
  Var b_ih;  // (4H)
  Var b_hh;  // (4H)
};

// x (B, T, D) -> (B, T, H); runs the recurrence right-to-left when reverse.
Var lstm_direction(const Var& x, const LstmDirParams& p, int hidden, bool reverse);

// x (B, T, D) -> (B, T, 2H), forward direction in the first H features.
Var bilstm(const Var& x, const LstmDirParams& fw, const LstmDirParams& bw, int hidden);

}  // namespace se3d
