#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "twocomm/stats.hpp"

using namespace twocomm;

TEST(Stats, MeanStddevAgainstHand) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(stats::mean(x), 3.0);
  EXPECT_NEAR(stats::stddev(x), std::sqrt(2.5), 1e-12);
  EXPECT_NEAR(stats::stderr_of_mean(x), std::sqrt(2.5 / 5.0), 1e-12);
}

TEST(Stats, QuantileInterpolation) {
  const std::vector<double> x{10, 20, 30, 40};
  EXPECT_DOUBLE_EQ(stats::quantile(x, 0.0), 10);
  EXPECT_DOUBLE_EQ(stats::quantile(x, 1.0), 40);
  EXPECT_DOUBLE_EQ(stats::median(x), 25);
  EXPECT_NEAR(stats::quantile(x, 0.25), 17.5, 1e-12);
}

TEST(Stats, BootstrapCiCoversTrueMean) {
  // Normal(5, 1) sample: the 95% bootstrap CI for the mean should cover 5
  // most of the time; check coverage over repeated draws.
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(5.0, 1.0);
  int covered = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> x(200);
    for (auto& v : x) v = normal(rng);
    const auto ci = stats::bootstrap_ci(
        x, [](std::span<const double> s) { return stats::mean(s); }, 2000,
        0.95, 1000 + static_cast<std::uint64_t>(t));
    if (ci.contains(5.0)) ++covered;
  }
  EXPECT_GE(covered, 85);
  EXPECT_LE(covered, 100);
}

TEST(Stats, BootstrapDiffCiCentersOnShift) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> na(3.0, 1.0), nb(1.0, 1.0);
  std::vector<double> a(500), b(500);
  for (auto& v : a) v = na(rng);
  for (auto& v : b) v = nb(rng);
  const auto ci = stats::bootstrap_diff_ci(
      a, b, [](std::span<const double> s) { return stats::mean(s); }, 4000,
      0.95, 77);
  EXPECT_TRUE(ci.contains(2.0));
  EXPECT_LT(ci.width(), 0.5);
}

TEST(Stats, KsSameDistributionHighP) {
  std::mt19937_64 rng(5);
  std::exponential_distribution<double> expo(1.0);
  int rejections = 0;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(400), b(400);
    for (auto& v : a) v = expo(rng);
    for (auto& v : b) v = expo(rng);
    if (stats::ks_two_sample(a, b).p_value < 0.05) ++rejections;
  }
  EXPECT_LE(rejections, 10);  // nominal 5% level
}

TEST(Stats, KsDetectsShift) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> na(0.0, 1.0), nb(1.0, 1.0);
  std::vector<double> a(500), b(500);
  for (auto& v : a) v = na(rng);
  for (auto& v : b) v = nb(rng);
  EXPECT_LT(stats::ks_two_sample(a, b).p_value, 1e-6);
}

TEST(Stats, ChiSquareUniformDiceFair) {
  // counts drawn near expectation: p should be comfortably large
  const std::vector<double> obs{95, 105, 99, 101, 103, 97};
  const std::vector<double> exp(6, 100.0);
  EXPECT_GT(stats::chi_square_gof_p(obs, exp), 0.5);
}

TEST(Stats, ChiSquareDetectsBias) {
  const std::vector<double> obs{200, 80, 80, 80, 80, 80};
  const std::vector<double> exp(6, 100.0);
  EXPECT_LT(stats::chi_square_gof_p(obs, exp), 1e-6);
}

TEST(Stats, LeastSquaresExactLine) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> y;
  for (double v : x) y.push_back(2.5 * v - 1.0);
  const auto fit = stats::least_squares(x, y);
  EXPECT_NEAR(fit.slope, 2.5, 1e-12);
  EXPECT_NEAR(fit.intercept, -1.0, 1e-12);
  EXPECT_NEAR(fit.slope_stderr, 0.0, 1e-9);
}

TEST(Stats, LeastSquaresNoisySlopeRecovered) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::vector<double> x, y;
  for (int k = 0; k < 200; ++k) {
    x.push_back(k * 0.05);
    y.push_back(0.5 * x.back() + 1.0 + noise(rng));
  }
  const auto fit = stats::least_squares(x, y);
  EXPECT_NEAR(fit.slope, 0.5, 5 * fit.slope_stderr + 1e-3);
}
