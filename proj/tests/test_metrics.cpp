#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "toilcast/errors.hpp"
#include "toilcast/metrics.hpp"
#include "toilcast/rng.hpp"

using namespace toilcast;
using namespace toilcast::metrics;

using V = std::vector<double>;

TEST_CASE("mae and mse") {
  CHECK(mae(V{1, 2, 3}, V{1, 2, 3}) == 0.0);
  CHECK(mae(V{0, 0}, V{1, -1}) == 1.0);
  CHECK(mae(V{1, 2, 3}, V{2, 2, 5}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mse(V{4, 5}, V{4, 5}) == 0.0);
  CHECK(mse(V{0}, V{3}) == 9.0);
  CHECK(mse(V{1, 2, 3}, V{2, 2, 5}) == doctest::Approx(5.0 / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(mae(V{1, 2}, V{1}), ValidationError);
  CHECK_THROWS_AS(mse(V{}, V{}), ValidationError);
}

TEST_CASE("pinball") {
  for (double a : {0.01, 0.5, 0.99}) CHECK(pinball(3.0, 3.0, a) == 0.0);
  CHECK(pinball(10, 8, 0.5) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pinball(10, 8, 0.9) == doctest::Approx(1.8).epsilon(1e-12));
  CHECK(pinball(8, 10, 0.9) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK_THROWS_AS(pinball(1, 1, 0.0), ValidationError);
  CHECK_THROWS_AS(pinball(1, 1, 1.0), ValidationError);
}

TEST_CASE("pinball asymmetry and convexity") {
  Rng rng(17);
  std::uniform_real_distribution<double> u(-5.0, 5.0), al(0.01, 0.99), d(0.01, 3.0);
  for (int i = 0; i < 500; ++i) {
    const double y = u(rng), a = al(rng), dd = d(rng);
    CHECK(pinball(y, y - dd, a) == doctest::Approx(a * dd).epsilon(1e-12));
    CHECK(pinball(y, y + dd, a) == doctest::Approx((1 - a) * dd).epsilon(1e-12));
    const double p = u(rng), q = u(rng);
    CHECK(pinball(y, p, a) >= 0.0);
    CHECK(pinball(y, 0.5 * (p + q), a) <= 0.5 * (pinball(y, p, a) + pinball(y, q, a)) + 1e-12);
  }
}

TEST_CASE("mean quantile loss") {
  CHECK(mql(V{1, 2}, V{1, 2}, 0.3) == 0.0);
  CHECK(mql(V{10, 8}, V{8, 10}, 0.9) == doctest::Approx(1.0).epsilon(1e-12));
  Rng rng(4);
  std::normal_distribution<double> n(0.0, 2.0);
  V y(50), yh(50);
  for (std::size_t i = 0; i < 50; ++i) {
    y[i] = n(rng);
    yh[i] = n(rng);
  }
  CHECK(std::abs(mql(y, yh, 0.5) - 0.5 * mae(y, yh)) <= 1e-12);
  const V alphas{0.1, 0.9};
  const std::vector<V> preds{V{8, 9}, V{11, 12}};
  CHECK(mql(V{10, 10}, preds, alphas) == doctest::Approx(0.5 * (mql(V{10, 10}, preds[0], 0.1) + mql(V{10, 10}, preds[1], 0.9))));
}

TEST_CASE("minimizing the mean pinball loss recovers the empirical quantile") {
  Rng rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  V y(99);
  for (double& v : y) v = u(rng);
  V sorted = y;
  std::sort(sorted.begin(), sorted.end());
  for (double a : {0.1, 0.5, 0.9}) {
    double best = 0.0, best_loss = 1e300;
    for (int k = 0; k <= 2000; ++k) {
      const double c = k / 2000.0;
      const double loss = mql(y, V(y.size(), c), a);
      if (loss < best_loss) {
        best_loss = loss;
        best = c;
      }
    }
    // any minimizer lies between the neighbouring order statistics
    const auto idx = static_cast<std::size_t>(std::ceil(a * 99.0)) - 1;
    CHECK(best >= sorted[std::max<std::size_t>(idx, 1) - 1] - 5e-4);
    CHECK(best <= sorted[std::min<std::size_t>(idx + 1, 98)] + 5e-4);
  }
}

TEST_CASE("interval coverage and width") {
  CHECK(picp(V{1, 2}, V{0, 0}, V{3, 3}) == 1.0);
  CHECK(picp(V{0.5, 2, -1, 0.3}, V(4, 0.0), V(4, 1.0)) == 0.5);
  CHECK(picp(V{0.0}, V{0.0}, V{1.0}) == 1.0);
  CHECK(picp(V{1.0}, V{0.0}, V{1.0}) == 1.0);
  CHECK_THROWS_AS(picp(V{1.0}, V{2.0}, V{1.0}), ValidationError);
  CHECK(mean_interval_width(V{3, 4}, V{3, 4}) == 0.0);
  CHECK(mean_interval_width(V{40, 40}, V{50, 50}) == 10.0);
  CHECK(mean_interval_width(V{0, 0}, V{1, 3}) == 2.0);

  V y{3, -1, 7, 2.5};
  auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  auto s = summarize_interval(y, V(4, *lo), V(4, *hi));
  CHECK(s.picp == 1.0);
  CHECK(s.mean_width == 8.0);
}

TEST_CASE("loss kinds") {
  CHECK_FALSE(LossKind::point().is_quantile());
  CHECK(LossKind::quantile({0.01, 0.5, 0.99}).is_quantile());
  CHECK_THROWS_AS(LossKind::quantile({}), ValidationError);
  CHECK_THROWS_AS(LossKind::quantile({0.9, 0.1}), ValidationError);
}
