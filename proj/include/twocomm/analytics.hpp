#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "twocomm/params.hpp"
#include "twocomm/rng.hpp"

namespace twocomm {

struct FixedPointResult {
  double value = 0;
  double residual = 0;
  int iterations = 0;
  std::pair<double, double> bracket{0, 0};
};

struct MeanFieldState {
  double t = 0;
  double s = 0;
  double x = 0;
  double i = 0;
  double r = 0;
};

enum class MeanFieldMode { PaperLiteral, Conservative };

struct QuadratureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StiffnessError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Adaptive Simpson with a depth cap; error budget is halved per split.
inline double adaptive_simpson(const std::function<double(double)>& f, double a,
                               double b, double fa, double fm, double fb,
                               double whole, double tol, int depth) {
  if (depth > 60)
    throw QuadratureError("adaptive quadrature exceeded depth cap");
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double h6 = (b - a) / 12.0;
  const double left = h6 * (fa + 4.0 * flm + fm);
  const double right = h6 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
}

inline double integrate(const std::function<double(double)>& f, double a,
                        double b, double tol) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 0);
}

}  // namespace detail

// G(pi) = gamma * int_0^inf exp(-c(1-e^{-beta l}) pi - gamma l) dl, evaluated
// to absolute error <= tol. The domain is truncated where the exponential
// tail drops below the budget.
inline double survival_kernel(double pi_candidate, double c, double beta,
                              double gamma, double tol) {
  if (!(gamma > 0) || !(c >= 0) || !(beta >= 0))
    throw std::invalid_argument("survival_kernel: invalid rates");
  if (!(tol > 0) || tol > 1e-3)
    throw std::invalid_argument("survival_kernel: tol out of range");
  const double L = (std::log(1.0 / tol) + 2.0) / gamma;  // tail <= tol*e^-2
  auto f = [=](double l) {
    return gamma * std::exp(-c * (1.0 - std::exp(-beta * l)) * pi_candidate -
                            gamma * l);
  };
  return detail::integrate(f, 0.0, L, 0.5 * tol);
}

// Largest root of G(pi) = 1 - pi in [0,1]. pi = 0 is always a root; the
// bracketing scan walks down from 1 and returns 0 only when no root exists
// in [tol, 1].
inline FixedPointResult solve_pi(double c, double beta, double gamma,
                                 double tol = 1e-10) {
  if (!(c > 0) || !(beta > 0) || !(gamma > 0))
    throw std::invalid_argument("solve_pi: invalid rates");
  const double qtol = std::max(tol * 0.1, 1e-14);
  auto h = [&](double pi) {
    return survival_kernel(pi, c, beta, gamma, qtol) - (1.0 - pi);
  };
  FixedPointResult res;
  // survival probability is positive iff the offspring mean exceeds one;
  // at or below criticality the only root is zero
  if (c * beta / (beta + gamma) <= 1.0) return res;
  const int cells = 16;
  double hi = 1.0, f_hi = h(hi);
  double lo = 0, f_lo = 0;
  bool bracketed = false;
  for (int k = 1; k <= cells; ++k) {
    lo = 1.0 - static_cast<double>(k) / cells * (1.0 - tol);
    f_lo = h(lo);
    ++res.iterations;
    if (f_lo <= 0 && f_hi > 0) {
      bracketed = true;
      break;
    }
    hi = lo;
    f_hi = f_lo;
  }
  if (!bracketed) {
    res.value = 0;
    res.residual = 0;
    res.bracket = {0, 0};
    return res;
  }
  res.bracket = {lo, hi};
  while (hi - lo > tol * 0.1) {
    const double mid = 0.5 * (lo + hi);
    const double fm = h(mid);
    ++res.iterations;
    if (fm <= 0)
      lo = mid;
    else
      hi = mid;
  }
  res.value = 0.5 * (lo + hi);
  res.residual = std::abs(h(res.value));
  return res;
}

// Largest root of 1 - r = exp(-R0 r) in [0,1]; 0 when R0 <= 1.
inline FixedPointResult solve_r_inf(double R0, double tol = 1e-10) {
  if (!(R0 > 0)) throw std::invalid_argument("solve_r_inf: R0 must be positive");
  FixedPointResult res;
  if (R0 <= 1.0) return res;
  auto f = [&](double r) { return 1.0 - r - std::exp(-R0 * r); };
  double lo = tol, hi = 1.0;
  // f > 0 just above 0 for R0 > 1 and f(1) < 0.
  while (hi - lo > tol * 0.1) {
    const double mid = 0.5 * (lo + hi);
    ++res.iterations;
    if (f(mid) >= 0)
      lo = mid;
    else
      hi = mid;
  }
  res.value = 0.5 * (lo + hi);
  res.residual = std::abs(f(res.value));
  res.bracket = {lo, hi};
  return res;
}

struct McEstimate {
  double estimate = 0;
  double std_err = 0;
};

// Monte Carlo survival probability of the continuous-time infection tree:
// lifetime Exp(gamma), realized children Poisson(c(1-e^{-beta*lifetime})).
// A replication survives when its total progeny reaches size_threshold.
inline McEstimate bp_survival_mc(double c, double beta, double gamma,
                                 std::int64_t replications,
                                 std::int64_t size_threshold,
                                 std::uint64_t rng_seed) {
  if (!(gamma > 0) || !(c >= 0) || !(beta >= 0))
    throw std::invalid_argument("bp_survival_mc: invalid rates");
  if (replications < 1000 || size_threshold < 1000)
    throw std::invalid_argument("bp_survival_mc: need >= 1000 reps/threshold");
  std::int64_t survived = 0;
  for (std::int64_t rep = 0; rep < replications; ++rep) {
    Rng rng = make_rng(derive_stream(rng_seed, static_cast<std::uint64_t>(rep)));
    std::exponential_distribution<double> lifetime(gamma);
    std::int64_t total = 1;
    std::int64_t active = 1;  // nodes whose offspring are not yet drawn
    while (active > 0 && total < size_threshold) {
      --active;
      const double l = lifetime(rng);
      const double mu = c * (1.0 - std::exp(-beta * l));
      std::int64_t kids = 0;
      if (mu > 0) kids = std::poisson_distribution<std::int64_t>(mu)(rng);
      active += kids;
      total += kids;
    }
    if (total >= size_threshold) ++survived;
  }
  const double p = static_cast<double>(survived) / static_cast<double>(replications);
  const double se =
      std::sqrt(p * (1.0 - p) / static_cast<double>(replications));
  return {p, se};
}

// Mean-field SIR with force-of-infection variable x. The paper-literal mode
// integrates di/dt = beta*c*x - gamma*i; the conservative mode uses
// di/dt = beta*x*s - gamma*i, which keeps s + i + r constant.
inline std::vector<MeanFieldState> meanfield_integrate(
    double c, double beta, double gamma, const MeanFieldState& init,
    const std::vector<double>& output_times, MeanFieldMode mode,
    double rel_tol = 1e-9, double abs_tol = 1e-12) {
  if (init.s < 0 || init.x < 0 || init.i < 0 || init.r < 0)
    throw std::invalid_argument("meanfield: negative initial state");
  auto deriv = [&](const double y[4], double dy[4]) {
    const double s = y[0], x = y[1], i = y[2];
    dy[0] = -beta * x * s;
    dy[1] = -(beta + gamma) * x + beta * c * x * s;
    dy[2] = (mode == MeanFieldMode::PaperLiteral ? beta * c * x : beta * x * s) -
            gamma * i;
    dy[3] = gamma * i;
  };

  // Classic RK4/RK5 embedded pair (Cash-Karp coefficients).
  static constexpr double A[6] = {0, 1.0 / 5, 3.0 / 10, 3.0 / 5, 1, 7.0 / 8};
  static constexpr double B[6][5] = {
      {},
      {1.0 / 5},
      {3.0 / 40, 9.0 / 40},
      {3.0 / 10, -9.0 / 10, 6.0 / 5},
      {-11.0 / 54, 5.0 / 2, -70.0 / 27, 35.0 / 27},
      {1631.0 / 55296, 175.0 / 512, 575.0 / 13824, 44275.0 / 110592,
       253.0 / 4096}};
  static constexpr double C5[6] = {37.0 / 378,  0, 250.0 / 621,
                                   125.0 / 594, 0, 512.0 / 1771};
  static constexpr double C4[6] = {2825.0 / 27648,  0,           18575.0 / 48384,
                                   13525.0 / 55296, 277.0 / 14336, 1.0 / 4};
  (void)A;

  std::vector<MeanFieldState> out;
  out.reserve(output_times.size());
  double t = init.t;
  double y[4] = {init.s, init.x, init.i, init.r};
  double h = 1e-3;

  for (double t_out : output_times) {
    if (t_out < t)
      throw std::invalid_argument("meanfield: output times must be ascending");
    while (t < t_out) {
      const double h_try = std::min(h, t_out - t);
      double k[6][4];
      deriv(y, k[0]);
      double y_stage[4];
      for (int s_idx = 1; s_idx < 6; ++s_idx) {
        for (int d = 0; d < 4; ++d) {
          double acc = y[d];
          for (int m = 0; m < s_idx; ++m) acc += h_try * B[s_idx][m] * k[m][d];
          y_stage[d] = acc;
        }
        deriv(y_stage, k[s_idx]);
      }
      double y5[4], err = 0;
      for (int d = 0; d < 4; ++d) {
        double acc5 = y[d], acc4 = y[d];
        for (int s_idx = 0; s_idx < 6; ++s_idx) {
          acc5 += h_try * C5[s_idx] * k[s_idx][d];
          acc4 += h_try * C4[s_idx] * k[s_idx][d];
        }
        y5[d] = acc5;
        const double sc = abs_tol + rel_tol * std::max(std::abs(y[d]), std::abs(acc5));
        err = std::max(err, std::abs(acc5 - acc4) / sc);
      }
      if (err <= 1.0) {
        t += h_try;
        for (int d = 0; d < 4; ++d) y[d] = y5[d];
        h = h_try * std::min(5.0, 0.9 * std::pow(std::max(err, 1e-10), -0.2));
      } else {
        h = h_try * std::max(0.1, 0.9 * std::pow(err, -0.25));
        if (h < 1e-14)
          throw StiffnessError("meanfield: step size underflow");
      }
    }
    out.push_back({t_out, y[0], y[1], y[2], y[3]});
  }
  return out;
}

}  // namespace twocomm
