#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "twocomm/analytics.hpp"

using namespace twocomm;

TEST(SurvivalKernel, ZeroArgumentIsOne) {
  // integrand reduces to the Exp(gamma) density
  EXPECT_NEAR(survival_kernel(0.0, 6, 1.5, 3, 1e-10), 1.0, 1e-9);
}

TEST(SurvivalKernel, MatchesMonteCarloExpectation) {
  // G(pi) = E[exp(-c(1-e^{-beta L}) pi)] with L ~ Exp(gamma)
  const double c = 6, beta = 1.5, gamma = 3;
  std::mt19937_64 rng(17);
  std::exponential_distribution<double> expo(gamma);
  for (double pi : {0.3, 0.7, 1.0}) {
    double acc = 0, acc2 = 0;
    const int samples = 1000000;
    for (int k = 0; k < samples; ++k) {
      const double l = expo(rng);
      const double v = std::exp(-c * (1.0 - std::exp(-beta * l)) * pi);
      acc += v;
      acc2 += v * v;
    }
    const double mc = acc / samples;
    const double se = std::sqrt((acc2 / samples - mc * mc) / samples);
    EXPECT_NEAR(survival_kernel(pi, c, beta, gamma, 1e-10), mc, 5 * se + 1e-6);
  }
}

TEST(SurvivalKernel, FastInfectionLimit) {
  // beta -> infinity: G(pi) -> exp(-c pi)
  EXPECT_NEAR(survival_kernel(1.0, 3, 1e8, 1, 1e-10), std::exp(-3.0), 1e-6);
}

TEST(SolvePi, SubcriticalReturnsZero) {
  // R0 = c beta/(beta+gamma) = 0.5 here
  EXPECT_DOUBLE_EQ(solve_pi(1.5, 1.5, 3).value, 0.0);
}

TEST(SolvePi, CriticalReturnsZero) {
  // R0 = 1 exactly
  EXPECT_DOUBLE_EQ(solve_pi(3.0, 1.5, 3).value, 0.0);
}

TEST(SolvePi, Fig5AgreesWithBranchingProcessMc) {
  const FixedPointResult fp = solve_pi(6, 1.5, 3);
  const McEstimate mc = bp_survival_mc(6, 1.5, 3, 30000, 2000, 99);
  EXPECT_NEAR(fp.value, mc.estimate, 5 * mc.std_err + 1e-3);
  EXPECT_LT(fp.residual, 1e-8);
}

TEST(SolvePi, FastInfectionLimitMatchesFinalSizeEquation) {
  // beta >> gamma turns 1 - pi = G(pi) into 1 - pi = e^{-c pi}
  const double pi = solve_pi(2.0, 1e7, 1.0).value;
  const double r = solve_r_inf(2.0).value;
  EXPECT_NEAR(pi, r, 1e-5);
}

TEST(SolveRInf, KnownValueAtR0Two) {
  // independent oracle: damped fixed-point iteration r <- 1 - e^{-2r}
  double r = 0.5;
  for (int k = 0; k < 200; ++k) r = 1.0 - std::exp(-2.0 * r);
  const FixedPointResult fp = solve_r_inf(2.0);
  EXPECT_NEAR(fp.value, r, 1e-8);
  EXPECT_NEAR(fp.value, 0.796812, 1e-5);
}

TEST(SolveRInf, SubcriticalZero) {
  EXPECT_DOUBLE_EQ(solve_r_inf(1.0).value, 0.0);
  EXPECT_DOUBLE_EQ(solve_r_inf(0.5).value, 0.0);
}

TEST(SolveRInf, ResidualSmallAcrossRange) {
  for (double R0 : {1.1, 1.5, 2.0, 3.0, 6.0, 10.0}) {
    const FixedPointResult fp = solve_r_inf(R0);
    EXPECT_LT(fp.residual, 1e-9) << "R0 = " << R0;
    EXPECT_GT(fp.value, 0.0);
    EXPECT_LT(fp.value, 1.0);
  }
}

TEST(BpSurvival, SubcriticalDiesOut) {
  const McEstimate mc = bp_survival_mc(1.5, 1.5, 3, 5000, 1000, 4);
  EXPECT_LT(mc.estimate, 0.01);
}

TEST(BpSurvival, Deterministic) {
  const McEstimate a = bp_survival_mc(6, 1.5, 3, 2000, 1000, 5);
  const McEstimate b = bp_survival_mc(6, 1.5, 3, 2000, 1000, 5);
  EXPECT_DOUBLE_EQ(a.estimate, b.estimate);
}

TEST(BpSurvival, RejectsTinyBudgets) {
  EXPECT_THROW(bp_survival_mc(6, 1.5, 3, 10, 1000, 1), std::invalid_argument);
  EXPECT_THROW(bp_survival_mc(6, 1.5, 3, 2000, 10, 1), std::invalid_argument);
}

namespace {

// Fixed-step RK4 reference integrator for the same vector field.
std::vector<MeanFieldState> rk4_reference(double c, double beta, double gamma,
                                          MeanFieldState init, double t_end,
                                          double h, MeanFieldMode mode) {
  auto deriv = [&](const std::array<double, 4>& y) {
    std::array<double, 4> d;
    d[0] = -beta * y[1] * y[0];
    d[1] = -(beta + gamma) * y[1] + beta * c * y[1] * y[0];
    d[2] = (mode == MeanFieldMode::PaperLiteral ? beta * c * y[1]
                                                : beta * y[1] * y[0]) -
           gamma * y[2];
    d[3] = gamma * y[2];
    return d;
  };
  std::array<double, 4> y{init.s, init.x, init.i, init.r};
  std::vector<MeanFieldState> out;
  double t = 0;
  while (t < t_end - 1e-12) {
    auto k1 = deriv(y);
    std::array<double, 4> y2, y3, y4;
    for (int d = 0; d < 4; ++d) y2[d] = y[d] + 0.5 * h * k1[d];
    auto k2 = deriv(y2);
    for (int d = 0; d < 4; ++d) y3[d] = y[d] + 0.5 * h * k2[d];
    auto k3 = deriv(y3);
    for (int d = 0; d < 4; ++d) y4[d] = y[d] + h * k3[d];
    auto k4 = deriv(y4);
    for (int d = 0; d < 4; ++d)
      y[d] += h / 6.0 * (k1[d] + 2 * k2[d] + 2 * k3[d] + k4[d]);
    t += h;
  }
  out.push_back({t, y[0], y[1], y[2], y[3]});
  return out;
}

}  // namespace

TEST(MeanField, MatchesFixedStepReference) {
  MeanFieldState init;
  init.s = 1.0 - 1e-4;
  init.x = 6e-4;
  init.i = 1e-4;
  init.r = 0;
  for (auto mode : {MeanFieldMode::Conservative, MeanFieldMode::PaperLiteral}) {
    const auto got = meanfield_integrate(6, 1.5, 3, init, {5.0}, mode);
    const auto ref = rk4_reference(6, 1.5, 3, init, 5.0, 1e-4, mode);
    ASSERT_EQ(got.size(), 1u);
    EXPECT_NEAR(got[0].s, ref[0].s, 1e-6);
    EXPECT_NEAR(got[0].x, ref[0].x, 1e-6);
    EXPECT_NEAR(got[0].i, ref[0].i, 1e-6);
    EXPECT_NEAR(got[0].r, ref[0].r, 1e-6);
  }
}

TEST(MeanField, ConservativeModeConservesMass) {
  MeanFieldState init;
  init.s = 1.0 - 1e-4;
  init.x = 6e-4;
  init.i = 1e-4;
  init.r = 0;
  std::vector<double> times;
  for (double t = 0; t <= 20.0; t += 0.5) times.push_back(t);
  const auto states =
      meanfield_integrate(6, 1.5, 3, init, times, MeanFieldMode::Conservative);
  double prev_s = 2, prev_r = -1;
  for (const auto& st : states) {
    EXPECT_NEAR(st.s + st.i + st.r, 1.0, 1e-7);
    EXPECT_LE(st.s, prev_s + 1e-12);
    EXPECT_GE(st.r, prev_r - 1e-12);
    prev_s = st.s;
    prev_r = st.r;
  }
}

TEST(MeanField, FinalSizeMatchesFixedPoint) {
  // the conservative system has the invariant ln s = R0 (s - 1) at x = 0,
  // so r(inf) solves the final-size equation
  MeanFieldState init;
  const double i0 = 1e-6;
  init.s = 1.0 - i0;
  init.x = 6 * i0;
  init.i = i0;
  init.r = 0;
  const auto states =
      meanfield_integrate(6, 1.5, 3, init, {60.0}, MeanFieldMode::Conservative);
  EXPECT_NEAR(states[0].r, solve_r_inf(2.0).value, 2e-3);
}

TEST(MeanField, RejectsBadInputs) {
  MeanFieldState init;
  init.s = -0.1;
  EXPECT_THROW(
      meanfield_integrate(6, 1.5, 3, init, {1.0}, MeanFieldMode::Conservative),
      std::invalid_argument);
  MeanFieldState ok;
  ok.s = 1;
  EXPECT_THROW(meanfield_integrate(6, 1.5, 3, ok, {2.0, 1.0},
                                   MeanFieldMode::Conservative),
               std::invalid_argument);
}
