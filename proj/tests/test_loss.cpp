#include <doctest.h>

#include <cmath>

#include "se3d/gradcheck.hpp"
#include "se3d/loss.hpp"
#include "se3d/ops.hpp"
#include "se3d/rng.hpp"

using namespace se3d;

TEST_CASE("mae examples") {
  Tensor clean(Shape{1, 2}, std::vector<double>{1.0, 2.0});
  SUBCASE("identical signals give zero") {
    Var est = Var::constant(clean);
    CHECK(mae_loss(clean, est).value()[0] == 0.0);
  }
  SUBCASE("hand value") {
    Var est = Var::constant(Tensor(Shape{1, 2}, std::vector<double>{0.0, 0.0}));
    CHECK(mae_loss(clean, est).value()[0] == doctest::Approx(1.5));
  }
  SUBCASE("length mismatch raises") {
    Var est = Var::constant(Tensor(Shape{1, 3}));
    CHECK_THROWS(mae_loss(clean, est));
  }
  SUBCASE("gradient away from ties") {
    Rng r(1);
    Parameter est("est", Tensor(Shape{1, 8}));
    Tensor target(Shape{1, 8});
    for (int64_t i = 0; i < 8; ++i) {
      target[i] = r.gaussian();
      est.value()[i] = target[i] + (r.bernoulli(0.5) ? 0.5 : -0.5) + 0.1 * r.gaussian();
    }
    auto rep = grad_check([&] { return mae_loss(target, est.var()); }, {&est}, 1e-5);
    CHECK(rep.max_rel_error <= 1e-6);
  }
}

TEST_CASE("combined loss examples and properties") {
  LossConfig cfg;

  SUBCASE("perfect estimates give zero") {
    Rng r(2);
    Tensor mag(Shape{1, 3, 4});
    Tensor x(Shape{1, 16});
    for (int64_t i = 0; i < mag.numel(); ++i) mag[i] = std::fabs(r.gaussian());
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = r.gaussian();
    Var loss = combined_loss(mag, Var::constant(mag), x, Var::constant(x), cfg);
    CHECK(loss.value()[0] == 0.0);
  }

  SUBCASE("single-bin hand value at gamma 0.5") {
    Tensor mag(Shape{1, 1, 1}, std::vector<double>{2.0});
    Tensor emag(Shape{1, 1, 1}, std::vector<double>{1.0});
    Tensor x(Shape{1, 1}, std::vector<double>{1.0});
    Tensor ex(Shape{1, 1}, std::vector<double>{0.5});
    Var loss = combined_loss(mag, Var::constant(emag), x, Var::constant(ex), cfg);
    CHECK(loss.value()[0] == doctest::Approx(0.5).epsilon(1e-7));
  }

  SUBCASE("gamma endpoints isolate each term") {
    Rng r(3);
    Tensor mag(Shape{1, 2, 3}), emag(Shape{1, 2, 3}), x(Shape{1, 10}), ex(Shape{1, 10});
    for (int64_t i = 0; i < mag.numel(); ++i) {
      mag[i] = std::fabs(r.gaussian()) + 0.5;
      emag[i] = std::fabs(r.gaussian());
    }
    for (int64_t i = 0; i < x.numel(); ++i) {
      x[i] = r.gaussian() + 2.0;
      ex[i] = r.gaussian();
    }
    LossConfig g1 = cfg;
    g1.gamma = 1.0;
    LossConfig g0 = cfg;
    g0.gamma = 0.0;
    const double tf = combined_loss(mag, Var::constant(emag), x, Var::constant(ex), g1).value()[0];
    const double td = combined_loss(mag, Var::constant(emag), x, Var::constant(ex), g0).value()[0];
    // linearity at five gamma points, exact to 1e-12
    for (double gamma : {0.0, 0.3, 0.5, 0.7, 1.0}) {
      LossConfig gc = cfg;
      gc.gamma = gamma;
      const double got =
          combined_loss(mag, Var::constant(emag), x, Var::constant(ex), gc).value()[0];
      CHECK(std::fabs(got - (gamma * tf + (1.0 - gamma) * td)) <= 1e-12);
    }
  }

  SUBCASE("non-negative and zero only at match") {
    Rng r(4);
    Tensor mag(Shape{1, 2, 2}), emag(Shape{1, 2, 2}), x(Shape{1, 6}), ex(Shape{1, 6});
    for (int64_t i = 0; i < mag.numel(); ++i) {
      mag[i] = std::fabs(r.gaussian());
      emag[i] = std::fabs(r.gaussian());
    }
    for (int64_t i = 0; i < x.numel(); ++i) {
      x[i] = r.gaussian();
      ex[i] = r.gaussian();
    }
    const double v =
        combined_loss(mag, Var::constant(emag), x, Var::constant(ex), cfg).value()[0];
    CHECK(v > 0.0);
  }

  SUBCASE("gradient vs finite differences away from zeros") {
    Rng r(5);
    Tensor mag(Shape{1, 2, 3}), x(Shape{1, 8});
    Parameter emag("emag", Tensor(Shape{1, 2, 3}));
    Parameter ex("ex", Tensor(Shape{1, 8}));
    for (int64_t i = 0; i < mag.numel(); ++i) {
      mag[i] = std::fabs(r.gaussian()) + 0.5;
      emag.value()[i] = mag[i] + (r.bernoulli(0.5) ? 0.3 : -0.3);
    }
    for (int64_t i = 0; i < x.numel(); ++i) {
      x[i] = r.gaussian() + 2.0;
      ex.value()[i] = x[i] + (r.bernoulli(0.5) ? 0.4 : -0.4);
    }
    auto rep = grad_check(
        [&] { return combined_loss(mag, emag.var(), x, ex.var(), cfg); }, {&emag, &ex}, 1e-5);
    INFO("worst: ", rep.worst);
    CHECK(rep.max_rel_error <= 1e-5);
  }

  SUBCASE("config validation") {
    LossConfig bad;
    bad.gamma = 1.5;
    CHECK_THROWS(bad.validate());
    bad = LossConfig{};
    bad.epsilon = 0.0;
    CHECK_THROWS(bad.validate());
  }

  SUBCASE("mae variant routes to the time-domain objective") {
    Tensor mag(Shape{1, 1, 1}, std::vector<double>{2.0});
    Tensor x(Shape{1, 2}, std::vector<double>{1.0, 2.0});
    Var est = Var::constant(Tensor(Shape{1, 2}, std::vector<double>{0.0, 0.0}));
    LossConfig mae_cfg;
    mae_cfg.variant = LossVariant::kMae;
    Var loss = combined_loss(mag, Var::constant(mag), x, est, mae_cfg);
    CHECK(loss.value()[0] == doctest::Approx(1.5));
  }
}
