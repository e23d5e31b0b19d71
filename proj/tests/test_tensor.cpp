#include <doctest.h>

#include <cmath>

#include "se3d/autodiff.hpp"
#include "se3d/ops.hpp"
#include "se3d/parameter.hpp"
#include "se3d/rng.hpp"
#include "se3d/tensor.hpp"

using namespace se3d;

TEST_CASE("tensor shape and data invariants") {
  Tensor t(Shape{2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t.at({1, 2}) == 1.5);
  CHECK_THROWS(Tensor(Shape{2, 0}));
  CHECK_THROWS(Tensor(Shape{3}, std::vector<double>{1.0, 2.0}));
  CHECK_THROWS(t.reshaped(Shape{4}));
  CHECK(t.reshaped(Shape{3, 2}).dim(0) == 3);
}

TEST_CASE("rng streams are deterministic and split-independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 32; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng root(7);
  Rng c1 = root.split("dropout");
  root.next_u64();  // drawing from the parent must not affect children
  Rng c2 = root.split("dropout");
  for (int i = 0; i < 8; ++i) CHECK(c1.next_u64() == c2.next_u64());

  Rng d1 = root.split("dropout");
  Rng d2 = root.split("shuffle");
  CHECK(d1.next_u64() != d2.next_u64());
}

TEST_CASE("rng uniform and gaussian ranges") {
  Rng r(3);
  double mean = 0.0;
  for (int i = 0; i < 10000; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    mean += r.gaussian();
  }
  mean /= 10000.0;
  CHECK(std::fabs(mean) < 0.05);
}

TEST_CASE("backward of x squared") {
  Parameter x("x", Tensor::scalar(3.0));
  Var loss = mul(x.var(), x.var());
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward requires a scalar") {
  Parameter x("x", Tensor(Shape{2}, 1.0));
  Var y = add(x.var(), x.var());
  CHECK_THROWS(backward(y));
}

TEST_CASE("no-grad mode records nothing") {
  Parameter x("x", Tensor::scalar(2.0));
  NoGradGuard ng;
  Var y = mul(x.var(), x.var());
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("first_nonfinite_label reports the earliest bad tensor") {
  Parameter x("weights", Tensor::scalar(0.0));
  Var a = div(Var::constant(Tensor::scalar(1.0), "one"), x.var());  // inf
  Var b = mul_scalar(a, 2.0);
  CHECK(first_nonfinite_label(b) != "");
}
