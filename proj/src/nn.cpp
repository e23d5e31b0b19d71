#include "se3d/nn.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace se3d {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void LayerSpec::validate() const {
  if (in_channels < 1 || out_channels < 1)
    throw std::invalid_argument("layer spec: channels must be >= 1");
  if (kernel_h < 1 || kernel_w < 1 || stride_h < 1 || stride_w < 1)
    throw std::invalid_argument("layer spec: kernel and stride extents must be >= 1");
}

LayerSpec conv_spec(int cin, int cout, int kh, int kw, int sh, int sw) {
  LayerSpec s;
  s.kind = LayerKind::kConv2d;
  s.in_channels = cin;
  s.out_channels = cout;
  s.kernel_h = kh;
  s.kernel_w = kw;
  s.stride_h = sh;
  s.stride_w = sw;
  s.validate();
  return s;
}

ConvGeom conv_geometry(const LayerSpec& spec, int h, int w) {
  spec.validate();
  ConvGeom g;
  g.cin = spec.in_channels;
  g.cout = spec.out_channels;
  g.h = h;
  g.w = w;
  g.kh = spec.kernel_h;
  g.kw = spec.kernel_w;
  g.sh = spec.stride_h;
  g.sw = spec.stride_w;
  g.oh = (h + g.sh - 1) / g.sh;
  g.ow = (w + g.sw - 1) / g.sw;
  int pad_h = std::max((g.oh - 1) * g.sh + g.kh - h, 0);
  int pad_w = std::max((g.ow - 1) * g.sw + g.kw - w, 0);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

namespace {

inline int div_ceil_nonneg(int a, int s) { return a <= 0 ? 0 : (a + s - 1) / s; }

struct TapRange {
  int out_lo, out_hi;  // inclusive output index range with in-bounds taps
};

inline TapRange tap_range(int pad, int d, int stride, int in_len, int out_len) {
  TapRange r;
  r.out_lo = div_ceil_nonneg(pad - d, stride);
  int num = in_len - 1 + pad - d;
  r.out_hi = num < 0 ? -1 : std::min(out_len - 1, num / stride);
  return r;
}

// y[co,oy,ox] += sum_{ci,dy,dx} k[co,ci,dy,dx] * x[ci, oy*sh+dy-pt, ox*sw+dx-pl]
void conv_fwd_core(const double* x, const double* k, double* y, const ConvGeom& g) {
  const int64_t in_plane = static_cast<int64_t>(g.h) * g.w;
  const int64_t out_plane = static_cast<int64_t>(g.oh) * g.ow;
  for (int co = 0; co < g.cout; ++co) {
    double* yc = y + co * out_plane;
    for (int ci = 0; ci < g.cin; ++ci) {
      const double* xc = x + ci * in_plane;
      const double* kc = k + (static_cast<int64_t>(co) * g.cin + ci) * g.kh * g.kw;
      for (int dy = 0; dy < g.kh; ++dy) {
        TapRange ry = tap_range(g.pad_top, dy, g.sh, g.h, g.oh);
        for (int dx = 0; dx < g.kw; ++dx) {
          const double wv = kc[dy * g.kw + dx];
          if (wv == 0.0) continue;
          TapRange rx = tap_range(g.pad_left, dx, g.sw, g.w, g.ow);
          if (rx.out_hi < rx.out_lo) continue;
          for (int oy = ry.out_lo; oy <= ry.out_hi; ++oy) {
            const int iy = oy * g.sh + dy - g.pad_top;
            double* yrow = yc + static_cast<int64_t>(oy) * g.ow;
            const double* xrow = xc + static_cast<int64_t>(iy) * g.w + (dx - g.pad_left);
            if (g.sw == 1) {
              for (int ox = rx.out_lo; ox <= rx.out_hi; ++ox) yrow[ox] += wv * xrow[ox];
            } else {
              for (int ox = rx.out_lo; ox <= rx.out_hi; ++ox)
                yrow[ox] += wv * xrow[static_cast<int64_t>(ox) * g.sw];
            }
          }
        }
      }
    }
  }
}

// gx[ci, oy*sh+dy-pt, ox*sw+dx-pl] += k[co,ci,dy,dx] * gy[co,oy,ox]
void conv_input_grad_core(const double* gy, const double* k, double* gx, const ConvGeom& g) {
  const int64_t in_plane = static_cast<int64_t>(g.h) * g.w;
  const int64_t out_plane = static_cast<int64_t>(g.oh) * g.ow;
  for (int co = 0; co < g.cout; ++co) {
    const double* gyc = gy + co * out_plane;
    for (int ci = 0; ci < g.cin; ++ci) {
      double* gxc = gx + ci * in_plane;
      const double* kc = k + (static_cast<int64_t>(co) * g.cin + ci) * g.kh * g.kw;
      for (int dy = 0; dy < g.kh; ++dy) {
        TapRange ry = tap_range(g.pad_top, dy, g.sh, g.h, g.oh);
        for (int dx = 0; dx < g.kw; ++dx) {
          const double wv = kc[dy * g.kw + dx];
          if (wv == 0.0) continue;
          TapRange rx = tap_range(g.pad_left, dx, g.sw, g.w, g.ow);
          if (rx.out_hi < rx.out_lo) continue;
          for (int oy = ry.out_lo; oy <= ry.out_hi; ++oy) {
            const int iy = oy * g.sh + dy - g.pad_top;
            const double* gyrow = gyc + static_cast<int64_t>(oy) * g.ow;
            double* gxrow = gxc + static_cast<int64_t>(iy) * g.w + (dx - g.pad_left);
            if (g.sw == 1) {
              for (int ox = rx.out_lo; ox <= rx.out_hi; ++ox) gxrow[ox] += wv * gyrow[ox];
            } else {
              for (int ox = rx.out_lo; ox <= rx.out_hi; ++ox)
                gxrow[static_cast<int64_t>(ox) * g.sw] += wv * gyrow[ox];
            }
          }
        }
      }
    }
  }
}

// gk[co,ci,dy,dx] += sum_{oy,ox} x[ci,iy,ix] * gy[co,oy,ox]
void conv_weight_grad_core(const double* x, const double* gy, double* gk, const ConvGeom& g) {
  const int64_t in_plane = static_cast<int64_t>(g.h) * g.w;
  const int64_t out_plane = static_cast<int64_t>(g.oh) * g.ow;
  for (int co = 0; co < g.cout; ++co) {
    const double* gyc = gy + co * out_plane;
    for (int ci = 0; ci < g.cin; ++ci) {
      const double* xc = x + ci * in_plane;
      double* kc = gk + (static_cast<int64_t>(co) * g.cin + ci) * g.kh * g.kw;
      for (int dy = 0; dy < g.kh; ++dy) {
        TapRange ry = tap_range(g.pad_top, dy, g.sh, g.h, g.oh);
        for (int dx = 0; dx < g.kw; ++dx) {
          TapRange rx = tap_range(g.pad_left, dx, g.sw, g.w, g.ow);
          if (rx.out_hi < rx.out_lo || ry.out_hi < ry.out_lo) continue;
          double acc = 0.0;
          for (int oy = ry.out_lo; oy <= ry.out_hi; ++oy) {
            const int iy = oy * g.sh + dy - g.pad_top;
            const double* gyrow = gyc + static_cast<int64_t>(oy) * g.ow;
            const double* xrow = xc + static_cast<int64_t>(iy) * g.w + (dx - g.pad_left);
            if (g.sw == 1) {
              for (int ox = rx.out_lo; ox <= rx.out_hi; ++ox) acc += gyrow[ox] * xrow[ox];
            } else {
              for (int ox = rx.out_lo; ox <= rx.out_hi; ++ox)
                acc += gyrow[ox] * xrow[static_cast<int64_t>(ox) * g.sw];
            }
          }
          kc[dy * g.kw + dx] += acc;
        }
      }
    }
  }
}

void check_conv_params(const LayerSpec& spec, const Var& weight, const Var& bias, int bias_ch) {
  Shape ws{spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w};
  if (weight.shape() != ws)
    throw std::invalid_argument("conv weight shape " + shape_str(weight.shape()) +
                                " does not match spec " + shape_str(ws));
  if (bias.defined() && bias.shape() != Shape{bias_ch})
    throw std::invalid_argument("conv bias shape mismatch");
}

}  // namespace

Var conv2d(const Var& x, const LayerSpec& spec, const Var& weight, const Var& bias) {
  if (spec.kind != LayerKind::kConv2d) throw std::invalid_argument("conv2d: wrong spec kind");
  check_conv_params(spec, weight, bias, spec.out_channels);
  if (x.value().rank() != 3 || x.value().dim(0) != spec.in_channels)
    throw std::invalid_argument("conv2d: input must be (C_in,H,W), got " + shape_str(x.shape()));
  ConvGeom g = conv_geometry(spec, x.value().dim(1), x.value().dim(2));
  Tensor out(Shape{g.cout, g.oh, g.ow});
  if (bias.defined()) {
    double* po = out.data();
    const double* pb = bias.value().data();
    const int64_t plane = static_cast<int64_t>(g.oh) * g.ow;
    for (int co = 0; co < g.cout; ++co)
      for (int64_t i = 0; i < plane; ++i) po[co * plane + i] = pb[co];
  }
  conv_fwd_core(x.value().data(), weight.value().data(), out.data(), g);
  return make_node(std::move(out), {x, weight, bias},
                   [x, weight, bias, g](Node& n) {
                     const double* pg = n.grad.data();
                     if (x.requires_grad()) {
                       Tensor gx(x.shape());
                       conv_input_grad_core(pg, weight.value().data(), gx.data(), g);
                       accumulate_grad(*x.node(), gx);
                     }
                     if (weight.requires_grad()) {
                       Tensor gw(weight.shape());
                       conv_weight_grad_core(x.value().data(), pg, gw.data(), g);
                       accumulate_grad(*weight.node(), gw);
                     }
                     if (bias.defined() && bias.requires_grad()) {
                       Tensor gb(bias.shape());
                       const int64_t plane = static_cast<int64_t>(g.oh) * g.ow;
                       for (int co = 0; co < g.cout; ++co) {
                         double acc = 0.0;
                         for (int64_t i = 0; i < plane; ++i) acc += pg[co * plane + i];
                         gb[co] = acc;
                       }
                       accumulate_grad(*bias.node(), gb);
                     }
                   },
                   "conv2d");
}

Var conv_transpose2d(const Var& y, const LayerSpec& spec, const Var& weight, const Var& bias,
                     int target_h, int target_w) {
  if (spec.kind != LayerKind::kConvTranspose2d && spec.kind != LayerKind::kConv2d)
    throw std::invalid_argument("conv_transpose2d: wrong spec kind");
  check_conv_params(spec, weight, bias, spec.in_channels);
  if (y.value().rank() != 3 || y.value().dim(0) != spec.out_channels)
    throw std::invalid_argument("conv_transpose2d: input must be (C_out,H',W')");
  if (target_h < 1 || target_w < 1)
    throw std::invalid_argument("conv_transpose2d: target extents must be >= 1");
  ConvGeom g = conv_geometry(spec, target_h, target_w);
  if (g.oh != y.value().dim(1) || g.ow != y.value().dim(2))
    throw std::invalid_argument(
        "conv_transpose2d: target " + shape_str({target_h, target_w}) +
        " is inconsistent with input " + shape_str(y.shape()) + " under this spec");
  Tensor out(Shape{g.cin, target_h, target_w});
  if (bias.defined()) {
    double* po = out.data();
    const double* pb = bias.value().data();
    const int64_t plane = static_cast<int64_t>(target_h) * target_w;
    for (int ci = 0; ci < g.cin; ++ci)
      for (int64_t i = 0; i < plane; ++i) po[ci * plane + i] = pb[ci];
  }
  conv_input_grad_core(y.value().data(), weight.value().data(), out.data(), g);
  return make_node(std::move(out), {y, weight, bias},
                   [y, weight, bias, g](Node& n) {
                     const double* pg = n.grad.data();
                     if (y.requires_grad()) {
                       Tensor gy(y.shape());
                       conv_fwd_core(pg, weight.value().data(), gy.data(), g);
                       accumulate_grad(*y.node(), gy);
                     }
                     if (weight.requires_grad()) {
                       Tensor gw(weight.shape());
                       conv_weight_grad_core(pg, y.value().data(), gw.data(), g);
                       accumulate_grad(*weight.node(), gw);
                     }
                     if (bias.defined() && bias.requires_grad()) {
                       Tensor gb(bias.shape());
                       const int64_t plane = static_cast<int64_t>(g.h) * g.w;
                       for (int ci = 0; ci < g.cin; ++ci) {
                         double acc = 0.0;
                         for (int64_t i = 0; i < plane; ++i) acc += pg[ci * plane + i];
                         gb[ci] = acc;
                       }
                       accumulate_grad(*bias.node(), gb);
                     }
                   },
                   "conv_transpose2d");
}

namespace {

struct NormStats {
  std::vector<double> mean, inv_std;
};

}  // namespace

Var batchnorm2d(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
                Tensor& running_var, bool training, double momentum, double eps) {
  if (x.value().rank() != 3) throw std::invalid_argument("batchnorm2d: input must be (C,H,W)");
  const int c = x.value().dim(0);
  const int64_t plane = x.numel() / c;
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
    throw std::invalid_argument("batchnorm2d: affine params must be (C)");
  if (running_mean.shape() != Shape{c} || running_var.shape() != Shape{c})
    throw std::invalid_argument("batchnorm2d: running stats must be (C)");

  NormStats st;
  st.mean.resize(static_cast<size_t>(c));
  st.inv_std.resize(static_cast<size_t>(c));
  const double* px = x.value().data();
  if (training) {
    for (int ch = 0; ch < c; ++ch) {
      const double* row = px + ch * plane;
      double m = 0.0;
      for (int64_t i = 0; i < plane; ++i) m += row[i];
      m /= static_cast<double>(plane);
      double v = 0.0;
      for (int64_t i = 0; i < plane; ++i) {
        double d = row[i] - m;
        v += d * d;
      }
      v /= static_cast<double>(plane);  // biased, used for normalization
      st.mean[static_cast<size_t>(ch)] = m;
      st.inv_std[static_cast<size_t>(ch)] = 1.0 / std::sqrt(v + eps);
      double unbiased = plane > 1 ? v * static_cast<double>(plane) / (plane - 1.0) : v;
      running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * m;
      running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * unbiased;
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      st.mean[static_cast<size_t>(ch)] = running_mean[ch];
      st.inv_std[static_cast<size_t>(ch)] = 1.0 / std::sqrt(running_var[ch] + eps);
    }
  }

  Tensor out(x.shape());
  {
    double* po = out.data();
    const double* pgm = gamma.value().data();
    const double* pbt = beta.value().data();
    for (int ch = 0; ch < c; ++ch) {
      const double m = st.mean[static_cast<size_t>(ch)];
      const double is = st.inv_std[static_cast<size_t>(ch)];
      const double gm = pgm[ch], bt = pbt[ch];
      const double* xin = px + ch * plane;
      double* xo = po + ch * plane;
      for (int64_t i = 0; i < plane; ++i) xo[i] = gm * (xin[i] - m) * is + bt;
    }
  }

  return make_node(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, st = std::move(st), c, plane, training](Node& n) {
        const double* pg = n.grad.data();
        const double* px = x.value().data();
        const double* pgm = gamma.value().data();
        Tensor gx(x.shape());
        Tensor ggm(Shape{c});
        Tensor gbt(Shape{c});
        for (int ch = 0; ch < c; ++ch) {
          const double m = st.mean[static_cast<size_t>(ch)];
          const double is = st.inv_std[static_cast<size_t>(ch)];
          const double gm = pgm[ch];
          const double* grow = pg + ch * plane;
          const double* xrow = px + ch * plane;
          double sum_g = 0.0, sum_gxh = 0.0;
          for (int64_t i = 0; i < plane; ++i) {
            const double xh = (xrow[i] - m) * is;
            sum_g += grow[i];
            sum_gxh += grow[i] * xh;
          }
          ggm[ch] = sum_gxh;
          gbt[ch] = sum_g;
          double* gxrow = gx.data() + ch * plane;
          if (training) {
            const double inv_n = 1.0 / static_cast<double>(plane);
            for (int64_t i = 0; i < plane; ++i) {
              const double xh = (xrow[i] - m) * is;
              gxrow[i] = gm * is * (grow[i] - inv_n * sum_g - xh * inv_n * sum_gxh);
            }
          } else {
            for (int64_t i = 0; i < plane; ++i) gxrow[i] = gm * is * grow[i];
          }
        }
        if (x.requires_grad()) accumulate_grad(*x.node(), gx);
        if (gamma.requires_grad()) accumulate_grad(*gamma.node(), ggm);
        if (beta.requires_grad()) accumulate_grad(*beta.node(), gbt);
      },
      "batchnorm2d");
}

Var groupnorm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
  if (x.value().rank() != 3) throw std::invalid_argument("groupnorm: input must be (C,H,W)");
  const int c = x.value().dim(0);
  if (groups < 1 || c % groups != 0)
    throw std::invalid_argument("groupnorm: channels (" + std::to_string(c) +
                                ") not divisible by groups (" + std::to_string(groups) + ")");
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
    throw std::invalid_argument("groupnorm: affine params must be (C)");
  const int64_t plane = x.numel() / c;
  const int cg = c / groups;
  const int64_t gsize = cg * plane;

  std::vector<double> mean(static_cast<size_t>(groups)), inv_std(static_cast<size_t>(groups));
  const double* px = x.value().data();
  for (int gi = 0; gi < groups; ++gi) {
    const double* base = px + static_cast<int64_t>(gi) * gsize;
    double m = 0.0;
    for (int64_t i = 0; i < gsize; ++i) m += base[i];
    m /= static_cast<double>(gsize);
    double v = 0.0;
    for (int64_t i = 0; i < gsize; ++i) {
      double d = base[i] - m;
      v += d * d;
    }
    v /= static_cast<double>(gsize);
    mean[static_cast<size_t>(gi)] = m;
    inv_std[static_cast<size_t>(gi)] = 1.0 / std::sqrt(v + eps);
  }

  Tensor out(x.shape());
  {
    double* po = out.data();
    const double* pgm = gamma.value().data();
    const double* pbt = beta.value().data();
    for (int ch = 0; ch < c; ++ch) {
      const int gi = ch / cg;
      const double m = mean[static_cast<size_t>(gi)];
      const double is = inv_std[static_cast<size_t>(gi)];
      const double* xin = px + ch * plane;
      double* xo = po + ch * plane;
      for (int64_t i = 0; i < plane; ++i) xo[i] = pgm[ch] * (xin[i] - m) * is + pbt[ch];
    }
  }

  return make_node(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, mean = std::move(mean), inv_std = std::move(inv_std), c, cg, plane,
       gsize, groups](Node& n) {
        const double* pg = n.grad.data();
        const double* px = x.value().data();
        const double* pgm = gamma.value().data();
        Tensor gx(x.shape());
        Tensor ggm(Shape{c});
        Tensor gbt(Shape{c});
        for (int gi = 0; gi < groups; ++gi) {
          const double m = mean[static_cast<size_t>(gi)];
          const double is = inv_std[static_cast<size_t>(gi)];
          // dxh = g * gamma_c; reduce over the whole group
          double sum_d = 0.0, sum_dxh = 0.0;
          for (int lc = 0; lc < cg; ++lc) {
            const int ch = gi * cg + lc;
            const double* grow = pg + ch * plane;
            const double* xrow = px + ch * plane;
            double sg = 0.0, sgxh = 0.0;
            for (int64_t i = 0; i < plane; ++i) {
              const double xh = (xrow[i] - m) * is;
              const double d = grow[i] * pgm[ch];
              sum_d += d;
              sum_dxh += d * xh;
              sg += grow[i];
              sgxh += grow[i] * xh;
            }
            ggm[ch] = sgxh;
            gbt[ch] = sg;
          }
          const double inv_gs = 1.0 / static_cast<double>(gsize);
          for (int lc = 0; lc < cg; ++lc) {
            const int ch = gi * cg + lc;
            const double* grow = pg + ch * plane;
            const double* xrow = px + ch * plane;
            double* gxrow = gx.data() + ch * plane;
            for (int64_t i = 0; i < plane; ++i) {
              const double xh = (xrow[i] - m) * is;
              const double d = grow[i] * pgm[ch];
              gxrow[i] = is * (d - inv_gs * sum_d - xh * inv_gs * sum_dxh);
            }
          }
        }
        if (x.requires_grad()) accumulate_grad(*x.node(), gx);
        if (gamma.requires_grad()) accumulate_grad(*gamma.node(), ggm);
        if (beta.requires_grad()) accumulate_grad(*beta.node(), gbt);
      },
      "groupnorm");
}

Var prelu(const Var& x, const Var& slope) {
  const int c = x.value().dim(0);
  if (slope.shape() != Shape{c})
    throw std::invalid_argument("prelu: slope must have one value per channel");
  const int64_t plane = x.numel() / c;
  Tensor out = x.value();
  {
    double* po = out.data();
    const double* ps = slope.value().data();
    for (int ch = 0; ch < c; ++ch) {
      const double a = ps[ch];
      double* row = po + ch * plane;
      for (int64_t i = 0; i < plane; ++i)
        if (row[i] < 0.0) row[i] *= a;
    }
  }
  return make_node(std::move(out), {x, slope},
                   [x, slope, c, plane](Node& n) {
                     const double* pg = n.grad.data();
                     const double* px = x.value().data();
                     const double* ps = slope.value().data();
                     if (x.requires_grad()) {
                       Tensor gx(x.shape());
                       double* pgx = gx.data();
                       for (int ch = 0; ch < c; ++ch) {
                         const double a = ps[ch];
                         for (int64_t i = ch * plane; i < (ch + 1) * plane; ++i)
                           pgx[i] = pg[i] * (px[i] >= 0.0 ? 1.0 : a);
                       }
                       accumulate_grad(*x.node(), gx);
                     }
                     if (slope.requires_grad()) {
                       Tensor gs(Shape{c});
                       for (int ch = 0; ch < c; ++ch) {
                         double acc = 0.0;
                         for (int64_t i = ch * plane; i < (ch + 1) * plane; ++i)
                           if (px[i] < 0.0) acc += pg[i] * px[i];
                         gs[ch] = acc;
                       }
                       accumulate_grad(*slope.node(), gs);
                     }
                   },
                   "prelu");
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (weight.value().rank() != 2) throw std::invalid_argument("linear: weight must be 2-D");
  const int dout = weight.value().dim(0);
  const int din = weight.value().dim(1);
  const Shape& xs = x.shape();
  if (xs.back() != din)
    throw std::invalid_argument("linear: trailing dim " + std::to_string(xs.back()) +
                                " != D_in " + std::to_string(din));
  if (bias.defined() && bias.shape() != Shape{dout})
    throw std::invalid_argument("linear: bias must be (D_out)");
  const int64_t rows = x.numel() / din;
  Shape out_shape = xs;
  out_shape.back() = dout;
  Tensor out(out_shape);
  {
    CMapMat X(x.value().data(), rows, din);
    CMapMat W(weight.value().data(), dout, din);
    MapMat Y(out.data(), rows, dout);
    Y.noalias() = X * W.transpose();
    if (bias.defined()) {
      Eigen::Map<const Eigen::VectorXd> b(bias.value().data(), dout);
      Y.rowwise() += b.transpose();
    }
  }
  return make_node(std::move(out), {x, weight, bias},
                   [x, weight, bias, rows, din, dout](Node& n) {
                     CMapMat G(n.grad.data(), rows, dout);
                     if (x.requires_grad()) {
                       Tensor gx(x.shape());
                       MapMat GX(gx.data(), rows, din);
                       CMapMat W(weight.value().data(), dout, din);
                       GX.noalias() = G * W;
                       accumulate_grad(*x.node(), gx);
                     }
                     if (weight.requires_grad()) {
                       Tensor gw(weight.shape());
                       MapMat GW(gw.data(), dout, din);
                       CMapMat X(x.value().data(), rows, din);
                       GW.noalias() = G.transpose() * X;
                       accumulate_grad(*weight.node(), gw);
                     }
                     if (bias.defined() && bias.requires_grad()) {
                       Tensor gb(Shape{dout});
                       Eigen::Map<Eigen::VectorXd> GB(gb.data(), dout);
                       GB = G.colwise().sum();
                       accumulate_grad(*bias.node(), gb);
                     }
                   },
                   "linear");
}

Var dropout(const Var& x, double rate, bool training, Rng& stream) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<float>>(static_cast<size_t>(x.numel()));
  Tensor out = x.value();
  {
    double* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) {
      const bool on = stream.uniform() >= rate;
      (*mask)[static_cast<size_t>(i)] = on ? static_cast<float>(1.0 / keep) : 0.0f;
      po[i] *= (*mask)[static_cast<size_t>(i)];
    }
  }
  return make_node(std::move(out), {x},
                   [x, mask](Node& n) {
                     if (!x.requires_grad()) return;
                     Tensor g = n.grad;
                     double* pg = g.data();
                     for (int64_t i = 0; i < g.numel(); ++i)
                       pg[i] *= (*mask)[static_cast<size_t>(i)];
                     accumulate_grad(*x.node(), g);
                   },
                   "dropout");
}

Var lstm_direction(const Var& x, const LstmDirParams& p, int hidden, bool reverse) {
  if (x.value().rank() != 3) throw std::invalid_argument("lstm: input must be (B,T,D)");
  const int b = x.value().dim(0);
  const int t_len = x.value().dim(1);
  const int h = hidden;
  if (p.w_ih.value().dim(0) != 4 * h || p.w_hh.shape() != Shape{4 * h, h})
    throw std::invalid_argument("lstm: gate weights must be (4H,D) and (4H,H)");

  Var xt_first = permute(x, {1, 0, 2});  // (T,B,D)
  Var hprev = Var::constant(Tensor(Shape{b, h}));
  Var cprev = Var::constant(Tensor(Shape{b, h}));
  std::vector<Var> outs(static_cast<size_t>(t_len));
  for (int step = 0; step < t_len; ++step) {
    const int tt = reverse ? t_len - 1 - step : step;
    Var xt = reshape(narrow(xt_first, 0, tt, 1), {b, x.value().dim(2)});
    Var gates = add(linear(xt, p.w_ih, p.b_ih), linear(hprev, p.w_hh, p.b_hh));  // (B,4H)
    Var ig = sigmoid(narrow(gates, 1, 0, h));
    Var fg = sigmoid(narrow(gates, 1, h, h));
    Var gg = tanh_v(narrow(gates, 1, 2 * h, h));
    Var og = sigmoid(narrow(gates, 1, 3 * h, h));
    Var c = add(mul(fg, cprev), mul(ig, gg));
    Var hh = mul(og, tanh_v(c));
    outs[static_cast<size_t>(tt)] = reshape(hh, {1, b, h});
    hprev = hh;
    cprev = c;
  }
  Var seq = concat(outs, 0);        // (T,B,H)
  return permute(seq, {1, 0, 2});   // (B,T,H)
}

Var bilstm(const Var& x, const LstmDirParams& fw, const LstmDirParams& bw, int hidden) {
  Var f = lstm_direction(x, fw, hidden, false);
  Var b = lstm_direction(x, bw, hidden, true);
  return concat({f, b}, 2);
}

}  // namespace se3d
