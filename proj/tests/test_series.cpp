#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "wlln/series.hpp"

using wlln::series::Example41Series;

TEST(Series, TotalMatchesOracle) {
  const auto& s = Example41Series::instance();
  EXPECT_NEAR(s.total(), oracle::kSeriesTotal, 1e-12);
  const auto [lo, hi] = s.total_bracket();
  EXPECT_LE(lo, oracle::kSeriesTotal + 1e-15);
  EXPECT_GE(hi, oracle::kSeriesTotal - 1e-15);
  EXPECT_LT(hi - lo, 1e-10);
}

TEST(Series, ConstantC) {
  const double c = wlln::series::example41_constant_c();
  EXPECT_NEAR(c, oracle::kConstantC, 1e-10);
  EXPECT_NEAR(2.0 * c * Example41Series::instance().total(), 1.0, 1e-9);
}

TEST(Series, PartialSumToTen) {
  double direct = 0;
  for (int k = 2; k <= 10; ++k) direct += 1.0 / (k * k * std::log(k));
  EXPECT_NEAR(direct, oracle::kPartialTo10, 1e-14);
  EXPECT_NEAR(direct, 0.575, 5e-4);
  const auto& s = Example41Series::instance();
  EXPECT_NEAR(s.total() - s.tail_after(10), oracle::kPartialTo10, 1e-12);
}

TEST(Series, TailsBeyondTable) {
  const auto& s = Example41Series::instance();
  EXPECT_NEAR(s.tail_after(1000), oracle::kTailAfter1000, 1e-15);
  EXPECT_NEAR(s.tail_after(1000000) / oracle::kTailAfter1e6, 1.0, 1e-9);
  EXPECT_DOUBLE_EQ(s.tail_after(1), s.total());
}

TEST(Series, LogSums) {
  const auto& s = Example41Series::instance();
  const double c2 = 2.0 * s.c();
  EXPECT_NEAR(c2 * s.inv_log_sum(4096) / oracle::kInvLogSum4096, 1.0, 1e-12);
  EXPECT_NEAR(c2 * s.inv_klog_sum(4096) / oracle::kInvKLogSum4096, 1.0, 1e-12);
  // non-integer arguments floor to the last integer term
  EXPECT_DOUBLE_EQ(s.inv_log_sum(4096.7), s.inv_log_sum(4096));
  EXPECT_DOUBLE_EQ(s.inv_log_sum(1.5), 0.0);
}

// Property: the tail is nonincreasing and first_tail_at_most is its inverse.
TEST(Series, TailMonotoneAndInverse) {
  const auto& s = Example41Series::instance();
  double prev = s.tail_after(1);
  for (std::uint64_t k = 2; k < (1u << 20); k = k * 3 / 2 + 1) {
    const double t = s.tail_after(k);
    EXPECT_LE(t, prev);
    prev = t;
  }
  for (double t : {1e-2, 1e-4, 1e-6, 1e-9}) {
    const auto k = s.first_tail_at_most(t);
    EXPECT_LE(s.tail_after(k), t);
    EXPECT_GT(s.tail_after(k - 1), t);
  }
}
