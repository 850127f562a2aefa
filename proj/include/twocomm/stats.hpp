#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "twocomm/rng.hpp"

namespace twocomm::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean of empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double stddev(std::span<const double> x) {
  const double m = mean(x);
  double ss = 0;
  for (double v : x) ss += (v - m) * (v - m);
  return x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
}

inline double stderr_of_mean(std::span<const double> x) {
  return stddev(x) / std::sqrt(static_cast<double>(x.size()));
}

// Quantile by linear interpolation on the sorted sample.
inline double quantile(std::vector<double> x, double q) {
  if (x.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(x.begin(), x.end());
  if (q <= 0) return x.front();
  if (q >= 1) return x.back();
  const double pos = q * static_cast<double>(x.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= x.size()) return x.back();
  return x[lo] * (1.0 - frac) + x[lo + 1] * frac;
}

inline double median(std::vector<double> x) { return quantile(std::move(x), 0.5); }

struct Interval {
  double lo = 0;
  double hi = 0;
  bool contains(double v) const { return lo <= v && v <= hi; }
  double width() const { return hi - lo; }
};

// Percentile bootstrap CI for a statistic of one sample.
template <class Stat>
Interval bootstrap_ci(std::span<const double> x, Stat stat, int resamples,
                      double level, std::uint64_t seed) {
  if (x.empty()) throw std::invalid_argument("bootstrap of empty sample");
  Rng rng = make_rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  std::vector<double> vals(static_cast<std::size_t>(resamples));
  std::vector<double> resample(x.size());
  for (int b = 0; b < resamples; ++b) {
    for (auto& v : resample) v = x[pick(rng)];
    vals[static_cast<std::size_t>(b)] = stat(std::span<const double>(resample));
  }
  const double a = (1.0 - level) / 2.0;
  return {quantile(vals, a), quantile(vals, 1.0 - a)};
}

// Percentile bootstrap CI for stat(A) - stat(B) with independent resampling
// of the two arms.
template <class Stat>
Interval bootstrap_diff_ci(std::span<const double> a, std::span<const double> b,
                           Stat stat, int resamples, double level,
                           std::uint64_t seed) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("bootstrap of empty sample");
  Rng rng = make_rng(seed);
  std::uniform_int_distribution<std::size_t> pick_a(0, a.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_b(0, b.size() - 1);
  std::vector<double> vals(static_cast<std::size_t>(resamples));
  std::vector<double> ra(a.size()), rb(b.size());
  for (int r = 0; r < resamples; ++r) {
    for (auto& v : ra) v = a[pick_a(rng)];
    for (auto& v : rb) v = b[pick_b(rng)];
    vals[static_cast<std::size_t>(r)] = stat(std::span<const double>(ra)) -
                                        stat(std::span<const double>(rb));
  }
  const double q = (1.0 - level) / 2.0;
  return {quantile(vals, q), quantile(vals, 1.0 - q)};
}

struct KsResult {
  double statistic = 0;
  double p_value = 1;
};

// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na -
                             static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  const double lam = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double p = 0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * ((k % 2 == 1) ? 1.0 : -1.0) *
                        std::exp(-2.0 * k * k * lam * lam);
    p += term;
    if (std::abs(term) < 1e-12) break;
  }
  return {d, std::clamp(p, 0.0, 1.0)};
}

// Chi-square goodness of fit; expected counts must be positive.
inline double chi_square_gof_p(std::span<const double> observed,
                               std::span<const double> expected,
                               int constraints = 1) {
  if (observed.size() != expected.size() || observed.empty())
    throw std::invalid_argument("chi_square: size mismatch");
  double x2 = 0;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    if (!(expected[k] > 0)) throw std::invalid_argument("chi_square: expected<=0");
    const double diff = observed[k] - expected[k];
    x2 += diff * diff / expected[k];
  }
  const int df = static_cast<int>(observed.size()) - constraints;
  if (df <= 0) throw std::invalid_argument("chi_square: nonpositive df");
  boost::math::chi_squared dist(df);
  return boost::math::cdf(boost::math::complement(dist, x2));
}

struct LineFit {
  double slope = 0;
  double intercept = 0;
  double slope_stderr = 0;
  double intercept_stderr = 0;
};

inline LineFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("least_squares: need >= 2 points");
  const double n = static_cast<double>(x.size());
  const double mx = mean(x), my = mean(y);
  double sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  if (!(sxx > 0)) throw std::invalid_argument("least_squares: degenerate x");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = y[k] - (f.intercept + f.slope * x[k]);
    sse += r * r;
  }
  const double s2 = x.size() > 2 ? sse / (n - 2.0) : 0.0;
  f.slope_stderr = std::sqrt(s2 / sxx);
  f.intercept_stderr = std::sqrt(s2 * (1.0 / n + mx * mx / sxx));
  return f;
}

}  // namespace twocomm::stats
