#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "se3d/gradcheck.hpp"
#include "se3d/nn.hpp"

using namespace se3d;

namespace {

Tensor random_tensor(Shape s, Rng& r, double scale = 1.0) {
  Tensor t(std::move(s));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = scale * r.gaussian();
  return t;
}

}  // namespace

TEST_CASE("conv2d with a 1x1 identity kernel is the identity") {
  Rng r(1);
  Tensor x = random_tensor({3, 5, 7}, r);
  LayerSpec spec = conv_spec(3, 3, 1, 1, 1, 1);
  Tensor k(Shape{3, 3, 1, 1});
  for (int i = 0; i < 3; ++i) k.at({i, i, 0, 0}) = 1.0;
  Var y = conv2d(Var::constant(x), spec, Var::constant(k), Var::constant(Tensor(Shape{3})));
  REQUIRE(y.shape() == x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.value()[i] == doctest::Approx(x[i]));
}

TEST_CASE("conv2d ceil-mode output shape") {
  // stride (2,2), kernel (8,6) on a (32,596,257) input halves both spatial dims
  LayerSpec spec = conv_spec(32, 2, 8, 6, 2, 2);
  ConvGeom g = conv_geometry(spec, 596, 257);
  CHECK(g.oh == 298);
  CHECK(g.ow == 129);

  Rng r(2);
  Tensor x = random_tensor({32, 596, 257}, r, 0.1);
  Tensor k = random_tensor({2, 32, 8, 6}, r, 0.1);
  Var y = conv2d(Var::constant(x), spec, Var::constant(k), Var());
  CHECK(y.shape() == Shape{2, 298, 129});
}

TEST_CASE("conv2d matches a naive quadruple-loop oracle") {
  Rng r(3);
  Tensor x = random_tensor({1, 4, 4}, r);
  Tensor k = random_tensor({1, 1, 2, 2}, r);
  Tensor b = random_tensor({1}, r);
  LayerSpec spec = conv_spec(1, 1, 2, 2, 1, 1);
  Var y = conv2d(Var::constant(x), spec, Var::constant(k), Var::constant(b));
  Tensor want = oracles::naive_conv2d(x, k, b, 1, 1);
  REQUIRE(y.shape() == want.shape());
  for (int64_t i = 0; i < want.numel(); ++i)
    CHECK(y.value()[i] == doctest::Approx(want[i]).epsilon(1e-12));

  // a couple of strided cases against the oracle as well
  for (auto [sh, sw] : {std::pair{2, 2}, std::pair{2, 1}}) {
    LayerSpec s2 = conv_spec(2, 3, 3, 2, sh, sw);
    Tensor x2 = random_tensor({2, 7, 5}, r);
    Tensor k2 = random_tensor({3, 2, 3, 2}, r);
    Tensor b2 = random_tensor({3}, r);
    Var y2 = conv2d(Var::constant(x2), s2, Var::constant(k2), Var::constant(b2));
    Tensor w2 = oracles::naive_conv2d(x2, k2, b2, sh, sw);
    REQUIRE(y2.shape() == w2.shape());
    for (int64_t i = 0; i < w2.numel(); ++i)
      CHECK(y2.value()[i] == doctest::Approx(w2[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv_transpose2d is the exact adjoint of conv2d") {
  Rng r(4);
  // every conv spec from the canonical encoder, at reduced spatial size
  const std::vector<LayerSpec> specs = {
      conv_spec(4, 32, 7, 1, 1, 1),   conv_spec(32, 32, 1, 7, 1, 1),
      conv_spec(32, 32, 8, 6, 2, 2),  conv_spec(32, 64, 7, 6, 1, 1),
      conv_spec(64, 64, 6, 5, 2, 2),  conv_spec(64, 96, 5, 5, 1, 1),
      conv_spec(96, 96, 6, 3, 2, 2),  conv_spec(96, 96, 5, 3, 1, 1),
      conv_spec(96, 128, 6, 3, 2, 1), conv_spec(128, 256, 5, 3, 1, 1)};
  for (const auto& spec : specs) {
    const int h = 21, w = 17;
    ConvGeom g = conv_geometry(spec, h, w);
    Tensor x = random_tensor({spec.in_channels, h, w}, r);
    Tensor y = random_tensor({spec.out_channels, g.oh, g.ow}, r);
    Tensor k = random_tensor({spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w},
                             r, 0.3);
    Var cx = conv2d(Var::constant(x), spec, Var::constant(k), Var());
    Var ty = conv_transpose2d(Var::constant(y), spec, Var::constant(k), Var(), h, w);
    const double lhs = dot(cx.value(), y);
    const double rhs = dot(x, ty.value());
    CHECK(std::fabs(lhs - rhs) / std::max({1.0, std::fabs(lhs), std::fabs(rhs)}) <= 1e-10);
  }
}

TEST_CASE("conv_transpose2d identity and shape mirror") {
  Rng r(5);
  Tensor x = random_tensor({2, 6, 6}, r);
  LayerSpec spec = conv_spec(2, 2, 1, 1, 1, 1);
  Tensor k(Shape{2, 2, 1, 1});
  k.at({0, 0, 0, 0}) = 1.0;
  k.at({1, 1, 0, 0}) = 1.0;
  Var y = conv_transpose2d(Var::constant(x), spec, Var::constant(k),
                           Var::constant(Tensor(Shape{2})), 6, 6);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.value()[i] == doctest::Approx(x[i]));

  LayerSpec l3 = conv_spec(32, 32, 8, 6, 2, 2);
  Tensor z = random_tensor({32, 298, 129}, r, 0.1);
  Tensor k3 = random_tensor({32, 32, 8, 6}, r, 0.05);
  Var up = conv_transpose2d(Var::constant(z), l3, Var::constant(k3), Var(), 596, 257);
  CHECK(up.shape() == Shape{32, 596, 257});

  // inconsistent target is rejected
  CHECK_THROWS(conv_transpose2d(Var::constant(z), l3, Var::constant(k3), Var(), 100, 100));
}

TEST_CASE("batchnorm2d examples") {
  Rng r(6);
  const int c = 3, h = 8, w = 9;
  Var gamma = Var::constant(Tensor(Shape{c}, 1.0));
  Var beta = Var::constant(Tensor(Shape{c}));
  Tensor rmean(Shape{c});
  Tensor rvar(Shape{c}, 1.0);

  SUBCASE("already normalized input passes through") {
    Tensor x(Shape{c, h, w});
    // exact zero-mean unit-variance channel: alternate +1/-1
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = (i % 2 == 0) ? 1.0 : -1.0;
    Var y = batchnorm2d(Var::constant(x), gamma, beta, rmean, rvar, true);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(std::fabs(y.value()[i] - x[i]) <= 1e-5);
  }

  SUBCASE("constant channel collapses to the shift") {
    Tensor x = Tensor::full(Shape{c, h, w}, 7.5);
    Var b2 = Var::constant(Tensor(Shape{c}, std::vector<double>{0.25, -1.0, 2.0}));
    Var y = batchnorm2d(Var::constant(x), gamma, b2, rmean, rvar, true);
    CHECK(y.value().at({0, 0, 0}) == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(y.value().at({1, 3, 3}) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(y.value().at({2, 7, 8}) == doctest::Approx(2.0).epsilon(1e-6));
  }

  SUBCASE("training mode re-standardizes each channel") {
    Tensor x = random_tensor({c, h, w}, r, 3.0);
    Var y = batchnorm2d(Var::constant(x), gamma, beta, rmean, rvar, true);
    const int64_t plane = h * w;
    for (int ch = 0; ch < c; ++ch) {
      double m = 0.0, v = 0.0;
      for (int64_t i = 0; i < plane; ++i) m += y.value()[ch * plane + i];
      m /= static_cast<double>(plane);
      for (int64_t i = 0; i < plane; ++i) {
        double d = y.value()[ch * plane + i] - m;
        v += d * d;
      }
      v /= static_cast<double>(plane);
      CHECK(std::fabs(m) <= 1e-6);
      CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
    }
  }

  SUBCASE("eval mode uses running statistics") {
    Tensor x = random_tensor({c, h, w}, r);
    fill_inplace(rmean, 0.5);
    fill_inplace(rvar, 4.0);
    Var y = batchnorm2d(Var::constant(x), gamma, beta, rmean, rvar, false);
    CHECK(y.value()[0] ==
          doctest::Approx((x[0] - 0.5) / std::sqrt(4.0 + 1e-5)).epsilon(1e-12));
  }
}

TEST_CASE("groupnorm limiting cases and statistics") {
  Rng r(7);
  const int c = 4, h = 3, w = 5;
  Tensor x = random_tensor({c, h, w}, r, 2.0);
  Var gamma = Var::constant(Tensor(Shape{c}, 1.0));
  Var beta = Var::constant(Tensor(Shape{c}));

  CHECK_THROWS(groupnorm(Var::constant(x), gamma, beta, 3));  // 4 % 3 != 0

  // groups == 1: one statistic over everything (layer norm)
  Var y1 = groupnorm(Var::constant(x), gamma, beta, 1);
  double m = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) m += y1.value()[i];
  CHECK(std::fabs(m / static_cast<double>(x.numel())) <= 1e-10);

  // groups == C: per-channel statistics (instance norm)
  Var yc = groupnorm(Var::constant(x), gamma, beta, c);
  const int64_t plane = h * w;
  for (int ch = 0; ch < c; ++ch) {
    double cm = 0.0, cv = 0.0;
    for (int64_t i = 0; i < plane; ++i) cm += yc.value()[ch * plane + i];
    cm /= static_cast<double>(plane);
    for (int64_t i = 0; i < plane; ++i) {
      double d = yc.value()[ch * plane + i] - cm;
      cv += d * d;
    }
    cv /= static_cast<double>(plane);
    CHECK(std::fabs(cm) <= 1e-6);
    CHECK(cv == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("activations: prelu slope one is identity") {
  Rng r(8);
  Tensor x = random_tensor({3, 4, 4}, r);
  Var y = prelu(Var::constant(x), Var::constant(Tensor(Shape{3}, 1.0)));
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.value()[i] == x[i]);
}

TEST_CASE("linear layer values and gradient") {
  SUBCASE("identity weight, zero bias") {
    Rng r(9);
    Tensor x = random_tensor({5, 3}, r);
    Tensor w(Shape{3, 3});
    for (int i = 0; i < 3; ++i) w.at({i, i}) = 1.0;
    Var y = linear(Var::constant(x), Var::constant(w), Var::constant(Tensor(Shape{3})));
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(y.value()[i] == doctest::Approx(x[i]));
  }
  SUBCASE("2x2 hand case") {
    Tensor x(Shape{1, 2}, std::vector<double>{1.0, 2.0});
    Tensor w(Shape{2, 2}, std::vector<double>{3.0, 4.0, 5.0, 6.0});
    Tensor b(Shape{2}, std::vector<double>{0.5, -0.5});
    Var y = linear(Var::constant(x), Var::constant(w), Var::constant(b));
    CHECK(y.value()[0] == doctest::Approx(3.0 + 8.0 + 0.5));
    CHECK(y.value()[1] == doctest::Approx(5.0 + 12.0 - 0.5));
  }
  SUBCASE("gradient check") {
    Rng r(10);
    Parameter x("x", random_tensor({2, 3, 4}, r));
    Parameter w("w", random_tensor({5, 4}, r, 0.5));
    Parameter b("b", random_tensor({5}, r, 0.1));
    auto rep = grad_check(
        [&] {
          Var y = linear(x.var(), w.var(), b.var());
          return sum_all(mul(y, y));
        },
        {&x, &w, &b});
    CHECK(rep.max_rel_error <= 1e-4);
  }
}

TEST_CASE("dropout semantics") {
  Rng r(12);
  Tensor x = Tensor::full(Shape{100}, 1.0);
  SUBCASE("rate 0 and eval mode are identities") {
    Rng s1 = r.split("a");
    Var y0 = dropout(Var::constant(x), 0.0, true, s1);
    Var ye = dropout(Var::constant(x), 0.5, false, s1);
    for (int64_t i = 0; i < x.numel(); ++i) {
      CHECK(y0.value()[i] == 1.0);
      CHECK(ye.value()[i] == 1.0);
    }
  }
  SUBCASE("inverted scaling preserves the mean at rate 0.1") {
    Tensor big = Tensor::full(Shape{100000}, 1.0);
    Rng s = r.split("mc");
    Var y = dropout(Var::constant(big), 0.1, true, s);
    double mean = 0.0;
    for (int64_t i = 0; i < big.numel(); ++i) mean += y.value()[i];
    mean /= static_cast<double>(big.numel());
    CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
  }
  SUBCASE("identical streams give identical masks") {
    Rng s1 = r.split("m");
    Rng s2 = r.split("m");
    Var y1 = dropout(Var::constant(x), 0.3, true, s1);
    Var y2 = dropout(Var::constant(x), 0.3, true, s2);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(y1.value()[i] == y2.value()[i]);
  }
}

namespace {

LstmDirParams zero_lstm(int hidden, int din) {
  LstmDirParams p;
  p.w_ih = Var::constant(Tensor(Shape{4 * hidden, din}));
  p.w_hh = Var::constant(Tensor(Shape{4 * hidden, hidden}));
  p.b_ih = Var::constant(Tensor(Shape{4 * hidden}));
  p.b_hh = Var::constant(Tensor(Shape{4 * hidden}));
  return p;
}

LstmDirParams random_lstm(int hidden, int din, Rng& r, std::vector<Parameter>& keep,
                          const std::string& prefix) {
  auto mk = [&](const std::string& nm, Shape s) {
    Tensor t(std::move(s));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = r.gaussian() / std::sqrt(hidden);
    keep.emplace_back(prefix + nm, std::move(t));
    return keep.back().var();
  };
  LstmDirParams p;
  p.w_ih = mk("w_ih", {4 * hidden, din});
  p.w_hh = mk("w_hh", {4 * hidden, hidden});
  p.b_ih = mk("b_ih", {4 * hidden});
  p.b_hh = mk("b_hh", {4 * hidden});
  return p;
}

}  // namespace

TEST_CASE("bilstm: zeros in, zeros out with zero parameters") {
  const int b = 2, t = 4, d = 3, h = 5;
  Var x = Var::constant(Tensor(Shape{b, t, d}));
  Var y = bilstm(x, zero_lstm(h, d), zero_lstm(h, d), h);
  CHECK(y.shape() == Shape{b, t, 2 * h});
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(y.value()[i] == 0.0);
}

TEST_CASE("lstm single step matches the gate equations by hand") {
  // scalar everything: x=1, weights chosen so each gate is easy to evaluate
  const int h = 1, d = 1;
  LstmDirParams p;
  // gate order i,f,g,o; biases zero; w_hh zero (single step from zero state)
  p.w_ih = Var::constant(Tensor(Shape{4, 1}, std::vector<double>{0.5, 0.25, 1.0, -0.5}));
  p.w_hh = Var::constant(Tensor(Shape{4, 1}));
  p.b_ih = Var::constant(Tensor(Shape{4}));
  p.b_hh = Var::constant(Tensor(Shape{4}));
  Var x = Var::constant(Tensor(Shape{1, 1, 1}, std::vector<double>{1.0}));
  Var y = lstm_direction(x, p, h, false);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double i_g = sig(0.5), g_g = std::tanh(1.0), o_g = sig(-0.5);
  const double c = i_g * g_g;
  const double want = o_g * std::tanh(c);
  CHECK(y.value()[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("bilstm: reversing time swaps and reverses the direction halves") {
  Rng r(13);
  const int b = 2, t = 5, d = 3, h = 4;
  std::vector<Parameter> keep;
  keep.reserve(8);
  LstmDirParams fw = random_lstm(h, d, r, keep, "fw.");
  LstmDirParams bw = random_lstm(h, d, r, keep, "bw.");
  Tensor x(Shape{b, t, d});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = r.gaussian();
  Tensor xr(Shape{b, t, d});
  for (int bi = 0; bi < b; ++bi)
    for (int ti = 0; ti < t; ++ti)
      for (int di = 0; di < d; ++di) xr.at({bi, ti, di}) = x.at({bi, t - 1 - ti, di});

  Var y = bilstm(Var::constant(x), fw, bw, h);
  // swap the direction parameters for the reversed input
  Var yr = bilstm(Var::constant(xr), bw, fw, h);
  for (int bi = 0; bi < b; ++bi)
    for (int ti = 0; ti < t; ++ti)
      for (int hi = 0; hi < h; ++hi) {
        // forward half of y at time ti == backward half of yr at time t-1-ti
        CHECK(y.value().at({bi, ti, hi}) ==
              doctest::Approx(yr.value().at({bi, t - 1 - ti, h + hi})).epsilon(1e-12));
      }
}

TEST_CASE("conv, norm and lstm gradients match finite differences") {
  Rng r(14);
  SUBCASE("conv2d") {
    Parameter x("x", random_tensor({2, 5, 4}, r));
    Parameter k("k", random_tensor({3, 2, 3, 2}, r, 0.5));
    Parameter b("b", random_tensor({3}, r, 0.1));
    LayerSpec spec = conv_spec(2, 3, 3, 2, 2, 1);
    auto rep = grad_check(
        [&] {
          Var y = conv2d(x.var(), spec, k.var(), b.var());
          return sum_all(mul(y, y));
        },
        {&x, &k, &b});
    INFO("worst: ", rep.worst);
    CHECK(rep.max_rel_error <= 1e-4);
  }
  SUBCASE("conv_transpose2d") {
    LayerSpec spec = conv_spec(2, 3, 3, 3, 2, 2);
    ConvGeom g = conv_geometry(spec, 6, 5);
    Parameter y("y", random_tensor({3, g.oh, g.ow}, r));
    Parameter k("k", random_tensor({3, 2, 3, 3}, r, 0.5));
    Parameter b("b", random_tensor({2}, r, 0.1));
    auto rep = grad_check(
        [&] {
          Var z = conv_transpose2d(y.var(), spec, k.var(), b.var(), 6, 5);
          return sum_all(mul(z, z));
        },
        {&y, &k, &b});
    CHECK(rep.max_rel_error <= 1e-4);
  }
  SUBCASE("batchnorm training mode") {
    Parameter x("x", random_tensor({2, 4, 3}, r));
    Parameter gm("gamma", random_tensor({2}, r, 0.3));
    Parameter bt("beta", random_tensor({2}, r, 0.3));
    for (int64_t i = 0; i < 2; ++i) gm.value()[i] += 1.0;
    auto rep = grad_check(
        [&] {
          Tensor rm(Shape{2}), rv(Shape{2}, 1.0);  // fresh stats every call
          Var y = batchnorm2d(x.var(), gm.var(), bt.var(), rm, rv, true);
          return sum_all(mul(y, y));
        },
        {&x, &gm, &bt});
    CHECK(rep.max_rel_error <= 1e-4);
  }
  SUBCASE("batchnorm eval mode") {
    Parameter x("x", random_tensor({2, 4, 3}, r));
    Parameter gm("gamma", Tensor(Shape{2}, 1.1));
    Parameter bt("beta", Tensor(Shape{2}, -0.2));
    Tensor rm(Shape{2}, 0.3), rv(Shape{2}, 2.0);
    auto rep = grad_check(
        [&] {
          Var y = batchnorm2d(x.var(), gm.var(), bt.var(), rm, rv, false);
          return sum_all(mul(y, y));
        },
        {&x, &gm, &bt});
    CHECK(rep.max_rel_error <= 1e-4);
  }
  SUBCASE("groupnorm") {
    Parameter x("x", random_tensor({4, 3, 2}, r));
    Parameter gm("gamma", Tensor(Shape{4}, 1.0));
    Parameter bt("beta", Tensor(Shape{4}));
    auto rep = grad_check(
        [&] {
          Var y = groupnorm(x.var(), gm.var(), bt.var(), 2);
          return sum_all(mul(y, y));
        },
        {&x, &gm, &bt});
    CHECK(rep.max_rel_error <= 1e-4);
  }
  SUBCASE("prelu") {
    Parameter x("x", random_tensor({3, 4, 2}, r));
    Parameter a("alpha", random_tensor({3}, r, 0.2));
    auto rep = grad_check(
        [&] {
          Var y = prelu(x.var(), a.var());
          return sum_all(mul(y, y));
        },
        {&x, &a});
    CHECK(rep.max_rel_error <= 1e-4);
  }
  SUBCASE("bilstm") {
    std::vector<Parameter> keep;
    keep.reserve(8);
    const int h = 3, d = 2;
    LstmDirParams fw = random_lstm(h, d, r, keep, "fw.");
    LstmDirParams bw = random_lstm(h, d, r, keep, "bw.");
    Parameter x("x", random_tensor({2, 4, d}, r));
    std::vector<Parameter*> ps{&x};
    for (auto& p : keep) ps.push_back(&p);
    auto rep = grad_check(
        [&] {
          Var y = bilstm(x.var(), fw, bw, h);
          return sum_all(mul(y, y));
        },
        ps);
    INFO("worst: ", rep.worst);
    CHECK(rep.max_rel_error <= 1e-3);
  }
  SUBCASE("dropout backward uses the same mask") {
    Parameter x("x", random_tensor({50}, r));
    Rng base(77);
    auto rep = grad_check(
        [&] {
          Rng s = base.split("fixed");  // same mask on every call
          Var y = dropout(x.var(), 0.4, true, s);
          return sum_all(mul(y, y));
        },
        {&x});
    CHECK(rep.max_rel_error <= 1e-6);
  }
}
