#include <gtest/gtest.h>

#include <numeric>

#include "classlm/discounting.hpp"
#include "test_support.hpp"

using namespace classlm;

TEST(Discount, RangeIsOpenUnitInterval) {
  EXPECT_THROW(Discount(0.0), ConfigError);
  EXPECT_THROW(Discount(1.0), ConfigError);
  EXPECT_THROW(Discount(-0.1), ConfigError);
  EXPECT_DOUBLE_EQ(Discount(0.3).value(), 0.3);
  EXPECT_DOUBLE_EQ(Discount().value(), Discount::kDefault);
}

TEST(Discount, EstimateFromCountOfCounts) {
  CountOfCounts h;
  h.add(1, 6);
  h.add(2, 2);
  h.add(5, 10);
  EXPECT_DOUBLE_EQ(estimate_discount(h).value(), 6.0 / (6.0 + 4.0));
}

TEST(Discount, EstimateClampsAndDefaults) {
  EXPECT_DOUBLE_EQ(estimate_discount(CountOfCounts{}).value(), Discount::kDefault);
  CountOfCounts only_singletons;
  only_singletons.add(1, 9);
  EXPECT_DOUBLE_EQ(estimate_discount(only_singletons).value(), Discount::kMax);
  CountOfCounts mostly_doubletons;
  mostly_doubletons.add(1, 1);
  mostly_doubletons.add(2, 1000);
  EXPECT_DOUBLE_EQ(estimate_discount(mostly_doubletons).value(), Discount::kMin);
}

TEST(Discount, CountOfCountsIgnoresZerosAndNegatives) {
  const std::vector<Count> c{0, 1, 1, 2, 0, 7};
  const auto h = CountOfCounts::of(c);
  EXPECT_EQ(h[0], 0);
  EXPECT_EQ(h[1], 2);
  EXPECT_EQ(h[2], 1);
  EXPECT_EQ(h[7], 1);
  CountOfCounts g;
  g.add(0, 5);
  g.add(3, 0);
  EXPECT_EQ(g[3], 0);
}

TEST(DiscountedDistribution, WorkedExample) {
  // counts {a:2, b:2, c:0}, B = 0.5, uniform fallback over three items.
  const std::vector<Count> counts{2, 2, 0};
  const std::vector<double> uniform(3, 1.0 / 3.0);
  const auto p = discounted_distribution(counts, Discount(0.5), uniform);
  EXPECT_NEAR(p[0], 1.5 / 4 + 0.25 / 3, 1e-12);
  EXPECT_NEAR(p[0], 0.45833, 1e-5);
  EXPECT_NEAR(p[1], 0.45833, 1e-5);
  EXPECT_NEAR(p[2], 0.08333, 1e-5);
}

TEST(DiscountedDistribution, EmptyCountsReturnFallback) {
  const std::vector<Count> counts{0, 0};
  const std::vector<double> fb{0.25, 0.75};
  EXPECT_EQ(discounted_distribution(counts, Discount(0.5), fb), fb);
  const std::vector<double> short_fb{1.0};
  EXPECT_THROW(discounted_distribution(counts, Discount(0.5), short_fb), ConfigError);
}

TEST(DiscountedDistribution, NormalizesForRandomCounts) {
  classlm::testing::Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.range(1, 40);
    std::vector<Count> c(n);
    std::vector<double> fb(n);
    for (int i = 0; i < n; ++i) {
      c[i] = rng.unit() < 0.4 ? 0 : rng.range(1, 9);
      fb[i] = rng.unit() + 1e-3;
    }
    const double z = std::accumulate(fb.begin(), fb.end(), 0.0);
    for (double& x : fb) x /= z;
    const Discount b(0.05 + 0.9 * rng.unit());
    const auto p = discounted_distribution(c, b, fb);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0L), 1.0L, 1e-12);
    for (double x : p) EXPECT_GT(x, 0.0);
  }
}
