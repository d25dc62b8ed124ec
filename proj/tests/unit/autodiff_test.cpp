#include <doctest.h>

#include <cmath>
#include <limits>

#include "../support/helpers.hpp"
#include "relex/adam.hpp"
#include "relex/errors.hpp"

using namespace relex;
using namespace relex::ad;
using relex::testing::check_gradients;
using relex::testing::kGradientTolerance;
using relex::testing::project;
using relex::testing::random_array;

namespace {

Array eval1(Var v) { return v.value(); }

void check_close(const Array& got, std::initializer_list<double> want, double tol = 1e-12) {
  REQUIRE(got.size() == want.size());
  std::size_t i = 0;
  for (double w : want) CHECK(got[i++] == doctest::Approx(w).epsilon(tol));
}

}  // namespace

TEST_CASE("array construction validates shape and values") {
  CHECK(Array({2, 3}).size() == 6);
  CHECK_THROWS_AS(Array({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(Array({1}, {std::numeric_limits<double>::quiet_NaN()}), ValidationError);
  CHECK(Array::matrix(2, 2, {1, 2, 3, 4})[3] == 4.0);
  CHECK(shape_to_string({3, 4}) == "[3, 4]");
}

TEST_CASE("linear") {
  Tape t;
  SUBCASE("identity weights") {
    Var y = linear(t.constant(Array::vector({3, -1})), t.constant(Array::matrix(2, 2, {1, 0, 0, 1})),
                   t.constant(Array::vector({0, 0})));
    check_close(eval1(y), {3, -1});
  }
  SUBCASE("zero weights give the bias") {
    Var y = linear(t.constant(Array::vector({7, 9})), t.constant(Array::matrix(2, 2, {0, 0, 0, 0})),
                   t.constant(Array::vector({1, 2})));
    check_close(eval1(y), {1, 2});
  }
  SUBCASE("direct evaluation") {
    Var y = linear(t.constant(Array::vector({2, 3})), t.constant(Array::matrix(2, 2, {1, 1, 1, -1})),
                   t.constant(Array::vector({0, 0})));
    check_close(eval1(y), {5, -1});
  }
  SUBCASE("mismatch names the operand and expected shape") {
    try {
      linear(t.constant(Array::vector({1, 2, 3})), t.constant(Array::matrix(2, 2, {1, 1, 1, 1})));
      FAIL("expected a shape error");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("W") != std::string::npos);
      CHECK(msg.find("[2, 2]") != std::string::npos);
      CHECK(msg.find("3") != std::string::npos);
    }
  }
}

TEST_CASE("relu") {
  Tape t;
  check_close(eval1(relu(t.constant(Array::vector({-1, 0, 2})))), {0, 0, 2});
  check_close(eval1(relu(t.constant(Array::vector({-3, -0.5})))), {0, 0});
  check_close(eval1(relu(t.constant(Array::vector({0.25, 4})))), {0.25, 4});

  Var x = t.input("x", Array::vector({0.0}));
  const Gradients g = t.backward(relu(x));
  CHECK(g.of(x)[0] == 0.0);  // subgradient at the kink
}

TEST_CASE("sigmoid") {
  Tape t;
  CHECK(eval1(sigmoid(t.constant(Array::vector({0}))))[0] == 0.5);
  const double a = eval1(sigmoid(t.constant(Array::vector({3.7}))))[0];
  const double b = eval1(sigmoid(t.constant(Array::vector({-3.7}))))[0];
  CHECK(a == doctest::Approx(1.0 - b).epsilon(1e-15));

  Var x = t.input("x", Array::vector({-745.0}));
  Var y = sigmoid(x);
  CHECK(y.value()[0] > 0.0);
  CHECK(y.value()[0] < 1.0);
  const Gradients g = t.backward(y);
  CHECK(std::isfinite(g.of(x)[0]));
  CHECK(g.of(x)[0] >= 0.0);
}

TEST_CASE("conv3x3") {
  Tape t;
  Rng rng(4);
  SUBCASE("centered delta kernel is the identity") {
    Array k({1, 1, 3, 3});
    k[4] = 1.0;
    const Array x = random_array(rng, {1, 4, 5});
    Var y = conv3x3(t.constant(x), t.constant(k), t.constant(Array::vector({0})));
    CHECK(y.value() == x);
  }
  SUBCASE("zero kernels give a constant map of the bias") {
    Var y = conv3x3(t.constant(random_array(rng, {2, 3, 3})), t.constant(Array({2, 2, 3, 3})),
                    t.constant(Array::vector({0.5, -2})));
    for (std::size_t i = 0; i < 9; ++i) CHECK(y.value()[i] == 0.5);
    for (std::size_t i = 9; i < 18; ++i) CHECK(y.value()[i] == -2.0);
  }
  SUBCASE("single pixel sees only the center tap") {
    const Array k = random_array(rng, {1, 1, 3, 3});
    Var y = conv3x3(t.constant(Array({1, 1, 1}, {2.5})), t.constant(k),
                    t.constant(Array::vector({0.75})));
    CHECK(y.value()[0] == doctest::Approx(k[4] * 2.5 + 0.75));
  }
  SUBCASE("channel mismatch") {
    CHECK_THROWS_AS(conv3x3(t.constant(Array({2, 3, 3})), t.constant(Array({1, 3, 3, 3})),
                            t.constant(Array::vector({0}))),
                    ShapeError);
  }
}

TEST_CASE("concat and flatten") {
  Tape t;
  const Var a = t.constant(Array::vector({1, 2}));
  const Var b = t.constant(Array::vector({3}));
  const Var ab[] = {a, b};
  check_close(eval1(concat(ab)), {1, 2, 3});
  const Var only[] = {a};
  CHECK(eval1(concat(only)) == a.value());
  CHECK_THROWS_AS(concat(std::span<const Var>{}), Error);
  CHECK(flatten(t.constant(Array({2, 3, 4}))).value().shape() == Shape{24});
}

TEST_CASE("pool_set") {
  Tape t;
  const Var a = t.constant(Array::vector({1, 4}));
  const Var b = t.constant(Array::vector({3, 2}));
  const Var set[] = {a, b};
  check_close(eval1(pool_set(set, PoolMode::Max)), {3, 4});
  const Var c = t.constant(Array::vector({2, 2}));
  const Var d = t.constant(Array::vector({4, 6}));
  const Var set2[] = {c, d};
  check_close(eval1(pool_set(set2, PoolMode::Mean)), {3, 4});
  const Var one[] = {a};
  CHECK(eval1(pool_set(one, PoolMode::Sum)) == a.value());
  CHECK_THROWS_AS(pool_set(std::span<const Var>{}, PoolMode::Max), Error);

  SUBCASE("max routes ties to the first occurrence") {
    Tape tape;
    Var x = tape.input("x", Array::vector({5}));
    Var y = tape.input("y", Array::vector({5}));
    const Var xs[] = {x, y};
    const Gradients g = tape.backward(pool_set(xs, PoolMode::Max));
    CHECK(g.of(x)[0] == 1.0);
    CHECK(g.of(y)[0] == 0.0);
  }
  SUBCASE("order does not matter") {
    Rng rng(8);
    for (PoolMode mode : {PoolMode::Max, PoolMode::Mean, PoolMode::Sum}) {
      Tape tape;
      std::vector<Var> vs;
      for (int i = 0; i < 5; ++i) vs.push_back(tape.constant(random_array(rng, {4})));
      const Array forward_order = pool_set(vs, mode).value();
      std::reverse(vs.begin(), vs.end());
      const Array reversed = pool_set(vs, mode).value();
      for (std::size_t i = 0; i < 4; ++i) {
        CHECK(reversed[i] == doctest::Approx(forward_order[i]).epsilon(1e-14));
      }
    }
  }
  CHECK(pool_mode_from_string("add") == PoolMode::Sum);
  CHECK_THROWS_AS(pool_mode_from_string("median"), ValidationError);
}

TEST_CASE("bce_loss") {
  Tape t;
  const std::vector<std::uint8_t> p10 = {1, 0};
  CHECK(bce_loss(t.constant(Array::vector({0.5, 0.5})), relex::labels_to_array(p10)).value()[0] ==
        doctest::Approx(2.0 * std::log(2.0)));
  CHECK(bce_loss(t.constant(Array::vector({0.25})), Array::vector({1})).value()[0] ==
        doctest::Approx(std::log(4.0)));
  CHECK(bce_loss(t.constant(Array::vector({1.0, 0.0})), Array::vector({1, 0})).value()[0] ==
        doctest::Approx(0.0).epsilon(1e-9));
  CHECK_THROWS_AS(bce_loss(t.constant(Array::vector({0.5})), Array::vector({0.5})),
                  ValidationError);
}

TEST_CASE("backward") {
  SUBCASE("sigmoid of a product at zero") {
    Tape t;
    Var w = t.input("w", Array::matrix(1, 1, {0.0}));
    Var x = t.constant(Array::vector({2.0}));
    const Gradients g = t.backward(sigmoid(linear(x, w)));
    CHECK(g.of(w)[0] == doctest::Approx(0.5));
    CHECK(g.of("w")[0] == doctest::Approx(0.5));
  }
  SUBCASE("unused leaf gets a zero array") {
    Tape t;
    Var used = t.input("used", Array::vector({1, 2}));
    Var unused = t.input("unused", Array::vector({3, 4, 5}));
    const Gradients g = t.backward(linear(used, t.constant(Array::matrix(1, 2, {1, 1}))));
    CHECK(g.of(unused) == Array({3}));
  }
  SUBCASE("output from another tape") {
    Tape a, b;
    Var x = b.input("x", Array::vector({1}));
    CHECK_THROWS_AS(a.backward(x), Error);
  }
  SUBCASE("non-scalar output needs a component") {
    Tape t;
    Var x = t.input("x", Array::vector({1, 2}));
    CHECK_THROWS_AS(t.backward(relu(x)), ShapeError);
    CHECK(t.backward(relu(x), 1).of(x) == Array::vector({0, 1}));
  }
  SUBCASE("duplicate leaf names are rejected") {
    Tape t;
    t.input("x", Array::vector({1}));
    CHECK_THROWS_AS(t.input("x", Array::vector({1})), Error);
  }
  SUBCASE("repeated backward passes are independent") {
    Tape t;
    Var x = t.input("x", Array::vector({1, -2}));
    Var y = linear(x, t.constant(Array::matrix(2, 2, {1, 2, 3, 4})));
    CHECK(t.backward(y, 0).of(x) == Array::vector({1, 2}));
    CHECK(t.backward(y, 1).of(x) == Array::vector({3, 4}));
    CHECK(t.backward(y, 0).of(x) == Array::vector({1, 2}));
  }
}

TEST_CASE("every op matches finite differences") {
  Rng rng(77);
  using V = std::vector<Var>;
  const auto ok = [](const relex::testing::GradientCheck& c) {
    INFO(c.worst);
    CHECK(c.max_relative_error <= kGradientTolerance);
  };
  ok(check_gradients({random_array(rng, {3}), random_array(rng, {2, 3}), random_array(rng, {2})},
                     [](Tape&, const V& x) { return project(linear(x[0], x[1], x[2]), 1); }));
  ok(check_gradients({random_array(rng, {6})},
                     [](Tape&, const V& x) { return project(relu(x[0]), 2); }));
  ok(check_gradients({random_array(rng, {6}, 4.0)},
                     [](Tape&, const V& x) { return project(sigmoid(x[0]), 3); }));
  ok(check_gradients({random_array(rng, {1, 4, 4}), random_array(rng, {2, 1, 3, 3}),
                      random_array(rng, {2})},
                     [](Tape&, const V& x) { return project(conv3x3(x[0], x[1], x[2]), 4); }));
  for (PoolMode m : {PoolMode::Max, PoolMode::Mean, PoolMode::Sum}) {
    ok(check_gradients({random_array(rng, {3}), random_array(rng, {3})},
                       [m](Tape&, const V& x) { return project(pool_set(x, m), 5); }));
  }
}

TEST_CASE("adam_step") {
  SUBCASE("first step moves by lr against the gradient sign") {
    std::vector<Array> p = {Array::vector({1.0, -2.0, 0.5})};
    const std::vector<Array> g = {Array::vector({3.0, -0.01, 200.0})};
    AdamState s = make_adam_state(p);
    adam_step(p, g, s, 0.1, 0.0);
    CHECK(p[0][0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(p[0][1] == doctest::Approx(-1.9).epsilon(1e-6));
    CHECK(p[0][2] == doctest::Approx(0.4).epsilon(1e-6));
    CHECK(s.step == 1);
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    std::vector<Array> p = {Array::vector({1.0, 2.0})};
    const std::vector<Array> g = {Array::vector({0.0, 0.0})};
    AdamState s = make_adam_state(p);
    adam_step(p, g, s, 0.1, 0.0);
    CHECK(p[0] == Array::vector({1.0, 2.0}));
  }
  SUBCASE("two steps on w^2 decrease w") {
    // Scalar recurrences by hand: w1 = 1 - 0.1 = 0.9 (up to eps); g2 = 1.8,
    // m2 = 0.36, v2 = 0.007236, w2 = 0.9 - 0.1 * 1.89474 / 1.90258.
    std::vector<Array> w = {Array::vector({1.0})};
    AdamState s = make_adam_state(w);
    double previous = w[0][0];
    for (int i = 0; i < 2; ++i) {
      const std::vector<Array> g = {Array::vector({2.0 * w[0][0]})};
      adam_step(w, g, s, 0.1, 0.0);
      CHECK(w[0][0] < previous);
      previous = w[0][0];
    }
    CHECK(w[0][0] == doctest::Approx(0.8004122287).epsilon(1e-9));
  }
  SUBCASE("coupled weight decay adds to the gradient") {
    std::vector<Array> p = {Array::vector({2.0})};
    const std::vector<Array> g = {Array::vector({0.0})};
    AdamState s = make_adam_state(p);
    adam_step(p, g, s, 0.1, 0.5);
    CHECK(p[0][0] == doctest::Approx(1.9).epsilon(1e-6));
  }
  SUBCASE("invalid arguments") {
    std::vector<Array> p = {Array::vector({1.0})};
    AdamState s = make_adam_state(p);
    CHECK_THROWS_AS(adam_step(p, std::vector<Array>{Array::vector({1.0})}, s, 0.0, 0.0),
                    ValidationError);
    CHECK_THROWS_AS(adam_step(p, std::vector<Array>{Array::vector({1.0, 2.0})}, s, 0.1, 0.0),
                    ShapeError);
  }
}

TEST_CASE("rng is reproducible and split_holdout is stable") {
  Rng a(5), b(5);
  for (int i = 0; i < 10; ++i) CHECK(a.normal() == b.normal());
  const Split s = split_holdout(20, 0.15, 3);
  CHECK(s.held_out.size() == 3);
  CHECK(s.kept.size() == 17);
  CHECK(split_holdout(20, 0.15, 3).held_out == s.held_out);
  CHECK(std::is_sorted(s.kept.begin(), s.kept.end()));
}
