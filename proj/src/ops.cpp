#include "se3d/ops.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace se3d {

namespace {

void require_same(const Var& a, const Var& b, const char* what) {
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Shape drop_axis_strides(const Shape& s, std::vector<int64_t>& strides) {
  strides.assign(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    strides[static_cast<size_t>(i)] =
        strides[static_cast<size_t>(i + 1)] * s[static_cast<size_t>(i + 1)];
  return s;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out = a.value();
  add_inplace(out, b.value());
  return make_node(std::move(out), {a, b},
                   [a, b](Node& n) {
                     accumulate_grad(*a.node(), n.grad);
                     accumulate_grad(*b.node(), n.grad);
                   },
                   "add");
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out = a.value();
  axpy_inplace(out, -1.0, b.value());
  return make_node(std::move(out), {a, b},
                   [a, b](Node& n) {
                     accumulate_grad(*a.node(), n.grad);
                     if (b.requires_grad()) {
                       Tensor g = n.grad;
                       scale_inplace(g, -1.0);
                       accumulate_grad(*b.node(), g);
                     }
                   },
                   "sub");
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out = a.value();
  {
    double* po = out.data();
    const double* pb = b.value().data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] *= pb[i];
  }
  return make_node(std::move(out), {a, b},
                   [a, b](Node& n) {
                     if (a.requires_grad()) {
                       Tensor g = n.grad;
                       double* pg = g.data();
                       const double* pb = b.value().data();
                       for (int64_t i = 0; i < g.numel(); ++i) pg[i] *= pb[i];
                       accumulate_grad(*a.node(), g);
                     }
                     if (b.requires_grad()) {
                       Tensor g = n.grad;
                       double* pg = g.data();
                       const double* pa = a.value().data();
                       for (int64_t i = 0; i < g.numel(); ++i) pg[i] *= pa[i];
                       accumulate_grad(*b.node(), g);
                     }
                   },
                   "mul");
}

Var div(const Var& a, const Var& b) {
  require_same(a, b, "div");
  Tensor out = a.value();
  {
    double* po = out.data();
    const double* pb = b.value().data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] /= pb[i];
  }
  return make_node(std::move(out), {a, b},
                   [a, b](Node& n) {
                     const double* pa = a.value().data();
                     const double* pb = b.value().data();
                     if (a.requires_grad()) {
                       Tensor g = n.grad;
                       double* pg = g.data();
                       for (int64_t i = 0; i < g.numel(); ++i) pg[i] /= pb[i];
                       accumulate_grad(*a.node(), g);
                     }
                     if (b.requires_grad()) {
                       Tensor g = n.grad;
                       double* pg = g.data();
                       for (int64_t i = 0; i < g.numel(); ++i)
                         pg[i] *= -pa[i] / (pb[i] * pb[i]);
                       accumulate_grad(*b.node(), g);
                     }
                   },
                   "div");
}

namespace {

template <typename F, typename DF>
Var unary_op(const Var& a, F f, DF df, const char* label) {
  Tensor out = a.value();
  double* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = f(po[i]);
  return make_node(std::move(out), {a},
                   [a, df](Node& n) {
                     if (!a.requires_grad()) return;
                     Tensor g = n.grad;
                     double* pg = g.data();
                     const double* px = a.value().data();
                     const double* py = n.value.data();
                     for (int64_t i = 0; i < g.numel(); ++i) pg[i] *= df(px[i], py[i]);
                     accumulate_grad(*a.node(), g);
                   },
                   label);
}

}  // namespace

Var add_scalar(const Var& a, double c) {
  Tensor out = a.value();
  double* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] += c;
  return make_node(std::move(out), {a},
                   [a](Node& n) { accumulate_grad(*a.node(), n.grad); }, "add_scalar");
}

Var mul_scalar(const Var& a, double c) {
  Tensor out = a.value();
  scale_inplace(out, c);
  return make_node(std::move(out), {a},
                   [a, c](Node& n) {
                     if (!a.requires_grad()) return;
                     Tensor g = n.grad;
                     scale_inplace(g, c);
                     accumulate_grad(*a.node(), g);
                   },
                   "mul_scalar");
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var abs_v(const Var& a) {
  return unary_op(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }, "abs");
}

Var sigmoid(const Var& a) {
  return unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Var tanh_v(const Var& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Var leaky_relu(const Var& a, double slope) {
  return unary_op(
      a, [slope](double x) { return x >= 0.0 ? x : slope * x; },
      [slope](double x, double) { return x >= 0.0 ? 1.0 : slope; }, "leaky_relu");
}

Var hypot_v(const Var& re, const Var& im) {
  require_same(re, im, "hypot");
  Tensor out(re.shape());
  {
    double* po = out.data();
    const double* pr = re.value().data();
    const double* pi = im.value().data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = std::hypot(pr[i], pi[i]);
  }
  return make_node(std::move(out), {re, im},
                   [re, im](Node& n) {
                     const double* pm = n.value.data();
                     const double* pg = n.grad.data();
                     auto pull = [&](const Var& part) {
                       if (!part.requires_grad()) return;
                       Tensor g(part.shape());
                       double* pgo = g.data();
                       const double* pp = part.value().data();
                       for (int64_t i = 0; i < g.numel(); ++i)
                         pgo[i] = pm[i] > 0.0 ? pg[i] * pp[i] / pm[i] : 0.0;
                       accumulate_grad(*part.node(), g);
                     };
                     pull(re);
                     pull(im);
                   },
                   "magnitude");
}

Var sum_all(const Var& a) {
  double s = std::accumulate(a.value().data(), a.value().data() + a.numel(), 0.0);
  return make_node(Tensor::scalar(s), {a},
                   [a](Node& n) {
                     if (!a.requires_grad()) return;
                     Tensor g = Tensor::full(a.shape(), n.grad[0]);
                     accumulate_grad(*a.node(), g);
                   },
                   "sum");
}

Var mean_all(const Var& a) { return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.numel())); }

Var reshape(const Var& a, Shape s) {
  Tensor out = a.value().reshaped(s);
  return make_node(std::move(out), {a},
                   [a](Node& n) {
                     if (!a.requires_grad()) return;
                     accumulate_grad(*a.node(), n.grad.reshaped(a.shape()));
                   },
                   "reshape");
}

namespace {

void permute_copy(const Tensor& in, const std::vector<int>& perm, Tensor& out, bool invert) {
  const int r = in.rank();
  std::vector<int64_t> in_strides, out_strides;
  drop_axis_strides(in.shape(), in_strides);
  drop_axis_strides(out.shape(), out_strides);
  std::vector<int> idx(static_cast<size_t>(r), 0);
  const double* pi = in.data();
  double* po = out.data();
  const int64_t n = in.numel();
  for (int64_t flat = 0; flat < n; ++flat) {
    int64_t dst = 0;
    for (int d = 0; d < r; ++d) {
      // out axis d corresponds to in axis perm[d] (or inverse when scattering)
      int src_axis = perm[static_cast<size_t>(d)];
      if (!invert)
        dst += out_strides[static_cast<size_t>(d)] * idx[static_cast<size_t>(src_axis)];
      else
        dst += out_strides[static_cast<size_t>(src_axis)] * idx[static_cast<size_t>(d)];
    }
    po[dst] = pi[flat];
    for (int d = r - 1; d >= 0; --d) {
      if (++idx[static_cast<size_t>(d)] < in.dim(d)) break;
      idx[static_cast<size_t>(d)] = 0;
    }
  }
}

}  // namespace

Var permute(const Var& a, const std::vector<int>& perm) {
  const int r = a.value().rank();
  if (static_cast<int>(perm.size()) != r) throw std::invalid_argument("permute: rank mismatch");
  Shape out_shape(static_cast<size_t>(r));
  for (int d = 0; d < r; ++d) out_shape[static_cast<size_t>(d)] = a.value().dim(perm[static_cast<size_t>(d)]);
  Tensor out(out_shape);
  permute_copy(a.value(), perm, out, false);
  return make_node(std::move(out), {a},
                   [a, perm](Node& n) {
                     if (!a.requires_grad()) return;
                     Tensor g(a.shape());
                     permute_copy(n.grad, perm, g, true);
                     accumulate_grad(*a.node(), g);
                   },
                   "permute");
}

namespace {

// Treats the tensor as (outer, axis_len, inner) around `axis`.
void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& alen, int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[static_cast<size_t>(d)];
  alen = s[static_cast<size_t>(axis)];
  for (size_t d = static_cast<size_t>(axis) + 1; d < s.size(); ++d) inner *= s[d];
}

}  // namespace

Var narrow(const Var& a, int axis, int start, int len) {
  const Shape& s = a.shape();
  if (axis < 0 || axis >= a.value().rank()) throw std::invalid_argument("narrow: bad axis");
  if (start < 0 || len < 1 || start + len > s[static_cast<size_t>(axis)])
    throw std::invalid_argument("narrow: range out of bounds");
  int64_t outer = 0, alen = 0, inner = 0;
  axis_split(s, axis, outer, alen, inner);
  Shape out_shape = s;
  out_shape[static_cast<size_t>(axis)] = len;
  Tensor out(out_shape);
  const double* pi = a.value().data();
  double* po = out.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t j = 0; j < len; ++j)
      std::copy_n(pi + (o * alen + start + j) * inner, inner, po + (o * len + j) * inner);
  return make_node(std::move(out), {a},
                   [a, axis, start, len, outer, alen, inner](Node& n) {
                     if (!a.requires_grad()) return;
                     Tensor& g = a.node()->ensure_grad();
                     double* pg = g.data();
                     const double* pn = n.grad.data();
                     for (int64_t o = 0; o < outer; ++o)
                       for (int64_t j = 0; j < len; ++j) {
                         double* dst = pg + ((o * alen + start + j) * inner);
                         const double* src = pn + ((o * len + j) * inner);
                         for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
                       }
                   },
                   "narrow");
}

Var concat(const std::vector<Var>& xs, int axis) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  int total = 0;
  for (const Var& x : xs) {
    if (x.value().rank() != xs[0].value().rank())
      throw std::invalid_argument("concat: rank mismatch");
    for (int d = 0; d < x.value().rank(); ++d)
      if (d != axis && x.value().dim(d) != s0[static_cast<size_t>(d)])
        throw std::invalid_argument("concat: shape mismatch off-axis");
    total += x.value().dim(axis);
  }
  Shape out_shape = s0;
  out_shape[static_cast<size_t>(axis)] = total;
  Tensor out(out_shape);
  int64_t outer = 0, alen = 0, inner = 0;
  axis_split(out_shape, axis, outer, alen, inner);
  double* po = out.data();
  int64_t off = 0;
  for (const Var& x : xs) {
    int64_t xl = x.value().dim(axis);
    const double* pi = x.value().data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(pi + o * xl * inner, xl * inner, po + (o * alen + off) * inner);
    off += xl;
  }
  std::vector<Var> parents = xs;
  return make_node(std::move(out), parents,
                   [xs, axis, outer, alen, inner](Node& n) {
                     const double* pn = n.grad.data();
                     int64_t off = 0;
                     for (const Var& x : xs) {
                       int64_t xl = x.value().dim(axis);
                       if (x.requires_grad()) {
                         Tensor g(x.shape());
                         double* pg = g.data();
                         for (int64_t o = 0; o < outer; ++o)
                           std::copy_n(pn + (o * alen + off) * inner, xl * inner,
                                       pg + o * xl * inner);
                         accumulate_grad(*x.node(), g);
                       }
                       off += xl;
                     }
                   },
                   "concat");
}

Var softmax_axis0(const Var& a) {
  if (a.value().rank() != 2) throw std::invalid_argument("softmax_axis0: expects 2-D input");
  const int n = a.value().dim(0);
  const int c = a.value().dim(1);
  Tensor out(a.shape());
  const double* pi = a.value().data();
  double* po = out.data();
  for (int col = 0; col < c; ++col) {
    double mx = -1e300;
    for (int i = 0; i < n; ++i) mx = std::max(mx, pi[i * c + col]);
    double z = 0.0;
    for (int i = 0; i < n; ++i) z += std::exp(pi[i * c + col] - mx);
    for (int i = 0; i < n; ++i) po[i * c + col] = std::exp(pi[i * c + col] - mx) / z;
  }
  return make_node(std::move(out), {a},
                   [a, n, c](Node& node) {
                     if (!a.requires_grad()) return;
                     Tensor g(a.shape());
                     const double* pg = node.grad.data();
                     const double* py = node.value.data();
                     double* po = g.data();
                     for (int col = 0; col < c; ++col) {
                       double dotgy = 0.0;
                       for (int i = 0; i < n; ++i) dotgy += pg[i * c + col] * py[i * c + col];
                       for (int i = 0; i < n; ++i)
                         po[i * c + col] = py[i * c + col] * (pg[i * c + col] - dotgy);
                     }
                     accumulate_grad(*a.node(), g);
                   },
                   "softmax0");
}

Var channel_scale(const Var& x, const Var& w) {
  const Shape& s = x.shape();
  if (w.value().rank() != 1 || w.value().dim(0) != s[0])
    throw std::invalid_argument("channel_scale: weight must be (C)");
  const int c = s[0];
  const int64_t inner = x.numel() / c;
  Tensor out = x.value();
  {
    double* po = out.data();
    const double* pw = w.value().data();
    for (int ch = 0; ch < c; ++ch) {
      const double wv = pw[ch];
      double* row = po + ch * inner;
      for (int64_t i = 0; i < inner; ++i) row[i] *= wv;
    }
  }
  return make_node(std::move(out), {x, w},
                   [x, w, c, inner](Node& n) {
                     const double* pg = n.grad.data();
                     if (x.requires_grad()) {
                       Tensor g(x.shape());
                       double* po = g.data();
                       const double* pw = w.value().data();
                       for (int ch = 0; ch < c; ++ch) {
                         const double wv = pw[ch];
                         const double* grow = pg + ch * inner;
                         double* orow = po + ch * inner;
                         for (int64_t i = 0; i < inner; ++i) orow[i] = grow[i] * wv;
                       }
                       accumulate_grad(*x.node(), g);
                     }
                     if (w.requires_grad()) {
                       Tensor g(w.shape());
                       double* po = g.data();
                       const double* px = x.value().data();
                       for (int ch = 0; ch < c; ++ch) {
                         double acc = 0.0;
                         const double* grow = pg + ch * inner;
                         const double* xrow = px + ch * inner;
                         for (int64_t i = 0; i < inner; ++i) acc += grow[i] * xrow[i];
                         po[ch] = acc;
                       }
                       accumulate_grad(*w.node(), g);
                     }
                   },
                   "channel_scale");
}

}  // namespace se3d
