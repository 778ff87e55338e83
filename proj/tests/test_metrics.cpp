#include <doctest.h>

#include <cmath>
#include <random>

#include "s2h/error.hpp"
#include "s2h/metrics.hpp"
#include "support/auc_oracle.hpp"

using namespace s2h;
using s2h::testing::pairwise_auc;

TEST_CASE("regression metrics on a hand example") {
  const std::vector<double> y{1, 2, 3}, f{1, 2, 5};
  const auto m = regression_metrics(y, f);
  CHECK(m.mse == doctest::Approx(4.0 / 3.0));
  CHECK(m.rmse == doctest::Approx(1.1547005384));
  CHECK(m.mae == doctest::Approx(2.0 / 3.0));
  CHECK(m.n == 3);
  const auto zero = regression_metrics(y, y);
  CHECK(zero.mse == 0.0);
  CHECK(zero.mae == 0.0);
  CHECK_THROWS_AS(regression_metrics(std::vector<double>{}, std::vector<double>{}), ConfigError);
  CHECK_THROWS_AS(regression_metrics(y, std::vector<double>{1.0}), DimensionError);
}

TEST_CASE("property: rmse squared equals mse") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d(0.0, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> y(1 + rng() % 50), f(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = d(rng);
      f[i] = d(rng);
    }
    const auto m = regression_metrics(y, f);
    CHECK(m.rmse * m.rmse == doctest::Approx(m.mse).epsilon(1e-12));
  }
}

TEST_CASE("auc examples") {
  const std::vector<int> labels{0, 0, 1, 1};
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, labels) == 1.0);
  CHECK(auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, labels) == 0.5);
  CHECK(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, labels) == 0.75);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ConfigError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, NAN}, std::vector<int>{0, 1}), NumericError);
}

TEST_CASE("property: rank auc equals pair enumeration, with ties") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng() % 199;
    std::vector<double> s(n);
    std::vector<int> l(n);
    const int levels = 1 + static_cast<int>(rng() % 12);  // few levels force ties
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % static_cast<unsigned>(levels)) / 3.0;
      l[i] = static_cast<int>(rng() % 2);
    }
    l[0] = 0;
    l[1] = 1;
    CHECK(auc(s, l) == pairwise_auc(s, l));
  }
}

TEST_CASE("property: auc is invariant to increasing transforms and flips with labels") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + rng() % 100;
    std::vector<double> s(n), t(n);
    std::vector<int> l(n), flipped(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = u(rng);
      t[i] = std::exp(2.0 * s[i]) + 1.0;
      l[i] = static_cast<int>(i % 2);
      flipped[i] = 1 - l[i];
    }
    CHECK(auc(t, l) == auc(s, l));
    CHECK(auc(s, flipped) == doctest::Approx(1.0 - auc(s, l)).epsilon(1e-15));
  }
}
