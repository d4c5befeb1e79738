#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "toilcast/autodiff.hpp"
#include "toilcast/errors.hpp"
#include "toilcast/optim.hpp"

using namespace toilcast;
using namespace toilcast::nn;

namespace {

using Objective = std::function<Var(Tape&, ParameterSet&)>;

// Worst relative error between backprop and central differences.
double gradient_error(ParameterSet& ps, const Objective& f, double h = 1e-6) {
  ps.zero_grad();
  {
    Tape t;
    t.backward(f(t, ps));
  }
  double worst = 0.0;
  for (std::size_t p = 0; p < ps.size(); ++p) {
    for (std::size_t i = 0; i < ps[p].value.numel(); ++i) {
      double& w = ps[p].value.data[i];
      const double keep = w;
      w = keep + h;
      Tape a;
      const double up = a.value(f(a, ps)).item();
      w = keep - h;
      Tape b;
      const double dn = b.value(f(b, ps)).item();
      w = keep;
      const double fd = (up - dn) / (2 * h);
      const double an = ps[p].grad.data[i];
      worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(fd) + std::abs(an)));
    }
  }
  return worst;
}

ParameterSet random_set(std::vector<std::pair<std::string, Shape>> shapes, std::uint64_t seed) {
  ParameterSet ps;
  for (auto& [n, s] : shapes) ps.add(n, s, 3);
  init_params(ps, seed);
  return ps;
}

Tensor random_tensor(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(std::move(s));
  for (double& v : t.data) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("forward examples") {
  ParameterSet ps;
  auto w = ps.add("w", {2, 2}, 2);
  auto b = ps.add("b", {2}, 0);
  ps[w].value.data = {1, 0, 0, 1};
  Tape t;
  auto x = t.constant(Tensor({1, 2}, {3.5, -2.0}));
  auto y = affine(t, x, t.parameter(ps, w), t.parameter(ps, b));
  CHECK(t.value(y).data == std::vector<double>{3.5, -2.0});

  ParameterSet one;
  auto w1 = one.add("w", {1, 1}, 1);
  auto b1 = one.add("b", {1}, 0);
  one[w1].value.data = {2.0};
  one[b1].value.data = {1.0};
  Tape t2;
  auto y2 = affine(t2, t2.constant(Tensor({1, 1}, {3.0})), t2.parameter(one, w1), t2.parameter(one, b1));
  CHECK(t2.value(y2).item() == 7.0);

  Tape t3;
  auto r = activate(t3, t3.constant(Tensor({1, 2}, {-1.0, 2.0})), Activation::relu);
  CHECK(t3.value(r).data == std::vector<double>{0.0, 2.0});
}

TEST_CASE("backward examples") {
  ParameterSet ps;
  auto w = ps.add("w", {1}, 0);
  ps[w].value.data = {3.0};
  {
    Tape t;
    t.backward(sum(t, square(t, t.parameter(ps, w))));
  }
  CHECK(ps[w].grad.item() == 6.0);

  ps.zero_grad();
  {
    Tape t;
    auto c = t.constant(Tensor::scalar(4.0));
    auto unused = t.parameter(ps, w);
    (void)unused;
    t.backward(sum(t, c));
  }
  CHECK(ps[w].grad.item() == 0.0);

  Tape t;
  auto v = t.variable(Tensor::scalar(2.0));
  auto s = square(t, v);
  CHECK_THROWS(t.grad(v));
  t.backward(s);
  CHECK(t.grad(v).item() == 4.0);
  Tape empty;
  CHECK_THROWS_AS(empty.backward(Var{}), ValidationError);
}

TEST_CASE("causal convolution") {
  Tape t;
  auto x = t.constant(Tensor({1, 3, 1}, {1, 2, 3}));
  auto w = t.constant(Tensor({2, 1, 1}, {1, 1}));
  auto b = t.constant(Tensor({1}, {0.0}));
  auto y = causal_conv1d(t, x, w, b, 1);
  CHECK(t.value(y).data == std::vector<double>{1, 3, 5});

  Tape t1;
  auto xw = t1.constant(Tensor({1, 3, 2}, {1, 2, 3, 4, 5, 6}));
  auto k1 = t1.constant(Tensor({1, 1, 2}, {2, -1}));
  auto y1 = causal_conv1d(t1, xw, k1, t1.constant(Tensor({1}, {0.5})), 4);
  CHECK(t1.value(y1).data == std::vector<double>{0.5, 2.5, 4.5});

  // perturbing a later input never moves an earlier output
  const std::size_t T = 20;
  auto w3 = random_tensor({3, 2, 2}, 1), b3 = random_tensor({2}, 2), base = random_tensor({1, T, 2}, 3);
  auto run = [&](const Tensor& in) {
    Tape tt;
    auto h = causal_conv1d(tt, tt.constant(in), tt.constant(w3), tt.constant(b3), 2);
    h = activate(tt, h, Activation::relu);
    h = causal_conv1d(tt, h, tt.constant(w3), tt.constant(b3), 4);
    return tt.value(h);
  };
  const Tensor ref = run(base);
  for (std::size_t s = 0; s < T; ++s) {
    Tensor moved = base;
    moved.data[s * 2] += 0.7;
    moved.data[s * 2 + 1] -= 0.3;
    const Tensor out = run(moved);
    for (std::size_t tt = 0; tt < s; ++tt)
      for (std::size_t c = 0; c < 2; ++c) CHECK(out.data[tt * 2 + c] == ref.data[tt * 2 + c]);
  }
}

TEST_CASE("adam") {
  ParameterSet ps;
  auto w = ps.add("w", {1}, 0);
  ps[w].value.data = {1.0};
  auto st = make_adam_state(ps, 0.1);
  ps[w].grad = Tensor({1}, {1.0});
  adam_update(ps, st);
  CHECK(1.0 - ps[w].value.item() == doctest::Approx(0.1).epsilon(1e-6));

  ParameterSet z = random_set({{"a", {3, 3}}}, 5);
  const auto before = z[0].value.data;
  auto sz = make_adam_state(z, 0.1);
  z.zero_grad();
  adam_update(z, sz);
  CHECK(z[0].value.data == before);

  auto run = [] {
    ParameterSet p = random_set({{"a", {4}}, {"b", {2, 2}}}, 11);
    auto s = make_adam_state(p, 0.01);
    for (int k = 0; k < 2; ++k) {
      for (auto& q : p) q.grad = Tensor(q.value.shape, 0.25);
      adam_update(p, s);
    }
    return p.checksum();
  };
  CHECK(run() == run());

  ParameterSet bad = random_set({{"good", {2}}, {"bad", {2}}}, 3);
  const auto snapshot = bad.checksum();
  auto sb = make_adam_state(bad, 0.1);
  bad[0].grad = Tensor({2}, 1.0);
  bad[1].grad = Tensor({2}, {1.0, std::numeric_limits<double>::infinity()});
  try {
    adam_update(bad, sb);
    FAIL("expected an error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("bad") != std::string::npos);
  }
  CHECK(bad.checksum() == snapshot);
}

TEST_CASE("initialization") {
  ParameterSet a = random_set({{"w", {16, 8}}}, 42), b = random_set({{"w", {16, 8}}}, 42),
               c = random_set({{"w", {16, 8}}}, 43);
  CHECK(a[0].value.data == b[0].value.data);
  CHECK(a[0].value.data != c[0].value.data);

  ParameterSet ps;
  ps.add("w", {64, 50}, 50);
  ps.add("b", {64}, 0);
  ps.add("g", {4}, 0, 1.0);
  init_params(ps, 9);
  const double bound = std::sqrt(6.0 / 50.0);
  for (double v : ps[0].value.data) CHECK(std::abs(v) <= bound);
  for (double v : ps[1].value.data) CHECK(v == 0.0);
  for (double v : ps[2].value.data) CHECK(v == 1.0);
}

TEST_CASE("gradients match finite differences") {
  const Tensor x = random_tensor({3, 4}, 7);
  const Tensor target = random_tensor({3, 2}, 8);

  SUBCASE("dense layers and losses") {
    auto ps = random_set({{"w1", {5, 4}}, {"b1", {5}}, {"w2", {2, 5}}, {"b2", {2}}}, 1);
    for (Activation act : {Activation::tanh, Activation::sigmoid, Activation::relu}) {
      for (int loss = 0; loss < 3; ++loss) {
        Objective f = [&](Tape& t, ParameterSet& p) {
          auto h = activate(t, affine(t, t.constant(x), t.parameter(p, 0), t.parameter(p, 1)), act);
          auto y = affine(t, h, t.parameter(p, 2), t.parameter(p, 3));
          if (loss == 0) return mse_loss(t, y, target);
          if (loss == 1) return mae_loss(t, y, target);
          const std::vector<double> alphas{0.1, 0.9};
          return pinball_loss(t, y, Tensor({3, 1}, {0.2, -0.4, 0.9}), alphas);
        };
        CHECK(gradient_error(ps, f) < 1e-6);
      }
    }
  }

  SUBCASE("shape ops") {
    auto ps = random_set({{"a", {2, 3, 2}}, {"b", {2, 3, 1}}}, 2);
    Objective f = [&](Tape& t, ParameterSet& p) {
      std::vector<Var> parts{t.parameter(p, 0), t.parameter(p, 1)};
      auto c = concat_last(t, parts);
      auto s = slice_steps(t, c, 1, 3);
      auto l = last_step(t, c);
      auto r = reshape(t, s, {2, 6});
      return add(t, sum(t, square(t, r)), scale(t, sum(t, square(t, l)), 0.5));
    };
    CHECK(gradient_error(ps, f) < 1e-6);
  }

  SUBCASE("convolution, weight norm and layer norm") {
    auto ps = random_set({{"v", {3, 2, 2}}, {"g", {2}}, {"b", {2}}, {"gain", {2}}, {"bias", {2}}}, 3);
    const Tensor xs = random_tensor({2, 6, 2}, 4);
    Objective f = [&](Tape& t, ParameterSet& p) {
      auto w = weight_norm(t, t.parameter(p, 0), t.parameter(p, 1));
      auto h = causal_conv1d(t, t.constant(xs), w, t.parameter(p, 2), 2);
      h = layer_norm(t, h, t.parameter(p, 3), t.parameter(p, 4));
      return sum(t, square(t, activate(t, h, Activation::tanh)));
    };
    CHECK(gradient_error(ps, f) < 1e-6);
  }

  SUBCASE("dropout with a fixed mask") {
    auto ps = random_set({{"w", {3, 4}}, {"b", {3}}}, 5);
    Objective f = [&](Tape& t, ParameterSet& p) {
      Rng rng(77);
      auto h = dropout(t, affine(t, t.constant(x), t.parameter(p, 0), t.parameter(p, 1)), 0.3, rng);
      return sum(t, square(t, h));
    };
    CHECK(gradient_error(ps, f) < 1e-6);
  }
}

TEST_CASE("dropout") {
  Rng rng(1);
  Tape t;
  auto x = t.constant(Tensor({1, 1000}, 1.0));
  CHECK(dropout(t, x, 0.0, rng).id == x.id);
  auto y = t.value(dropout(t, x, 0.25, rng));
  std::size_t zeros = 0;
  for (double v : y.data) {
    if (v == 0.0) ++zeros;
    else CHECK(v == doctest::Approx(1.0 / 0.75));
  }
  CHECK(zeros > 180);
  CHECK(zeros < 320);
  CHECK_THROWS_AS(dropout(t, x, 1.0, rng), ValidationError);
}

TEST_CASE("gradient is linear in the seed") {
  auto ps = random_set({{"w", {2, 4}}, {"b", {2}}}, 6);
  const Tensor x = random_tensor({3, 4}, 9);
  auto grads = [&](double k) {
    ps.zero_grad();
    Tape t;
    auto y = activate(t, affine(t, t.constant(x), t.parameter(ps, 0), t.parameter(ps, 1)), Activation::tanh);
    t.backward(y, Tensor(t.value(y).shape, k));
    return ps[0].grad.data;
  };
  auto g1 = grads(1.0), g3 = grads(3.0);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g3[i] == doctest::Approx(3.0 * g1[i]).epsilon(1e-12));
}

TEST_CASE("shape errors") {
  Tape t;
  auto a = t.constant(Tensor({2, 3}));
  auto b = t.constant(Tensor({3, 2}));
  CHECK_THROWS_AS(add(t, a, b), ValidationError);
  CHECK_THROWS_AS(affine(t, a, b, t.constant(Tensor({3}))), ValidationError);
  CHECK_THROWS_AS(reshape(t, a, {5}), ValidationError);
}
