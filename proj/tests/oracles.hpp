#pragma once

// Independent brute-force references used to freeze expected values.
// These deliberately share no code with the library kernels.

#include <cmath>
#include <complex>
#include <vector>

#include "se3d/nn.hpp"
#include "se3d/tensor.hpp"

namespace oracles {

// Quadruple-loop cross-correlation with ceil-mode "same" padding,
// extra padding on the trailing side.
inline se3d::Tensor naive_conv2d(const se3d::Tensor& x, const se3d::Tensor& k,
                                 const se3d::Tensor& bias, int sh, int sw) {
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const int oh = (h + sh - 1) / sh;
  const int ow = (w + sw - 1) / sw;
  const int pad_h = std::max((oh - 1) * sh + kh - h, 0);
  const int pad_w = std::max((ow - 1) * sw + kw - w, 0);
  const int pt = pad_h / 2;
  const int pl = pad_w / 2;
  se3d::Tensor y(se3d::Shape{cout, oh, ow});
  for (int co = 0; co < cout; ++co)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bias.defined() ? bias[co] : 0.0;
        for (int ci = 0; ci < cin; ++ci)
          for (int dy = 0; dy < kh; ++dy)
            for (int dx = 0; dx < kw; ++dx) {
              const int iy = oy * sh + dy - pt;
              const int ix = ox * sw + dx - pl;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += k.at({co, ci, dy, dx}) * x.at({ci, iy, ix});
            }
        y.at({co, oy, ox}) = acc;
      }
  return y;
}

// Direct O(n^2) DFT of a real frame; returns one-sided bins.
inline void naive_rdft(const std::vector<double>& x, std::vector<double>& re,
                       std::vector<double>& im) {
  const size_t n = x.size();
  const size_t bins = n / 2 + 1;
  re.assign(bins, 0.0);
  im.assign(bins, 0.0);
  for (size_t f = 0; f < bins; ++f) {
    double sr = 0.0, si = 0.0;
    for (size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * M_PI * static_cast<double>(f) * static_cast<double>(t) /
                         static_cast<double>(n);
      sr += x[t] * std::cos(ang);
      si += x[t] * std::sin(ang);
    }
    re[f] = sr;
    im[f] = si;
  }
}

// Direct time-domain convolution y[n] = sum_k h[k] x[n-k].
inline std::vector<double> naive_convolve(const std::vector<double>& x,
                                          const std::vector<double>& h) {
  std::vector<double> y(x.size() + h.size() - 1, 0.0);
  for (size_t i = 0; i < x.size(); ++i)
    for (size_t j = 0; j < h.size(); ++j) y[i + j] += x[i] * h[j];
  return y;
}

}  // namespace oracles
