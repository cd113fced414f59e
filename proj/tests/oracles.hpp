#pragma once

// Reference implementations that share no code with the library: series
// normal CDF in long double, bisection quantile, direct Poisson sums.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oracle {

inline long double normal_pdf(long double x) {
  return std::exp(-0.5L * x * x) / std::sqrt(2.0L * 3.14159265358979323846264338327950288L);
}

// Phi(x) = 1/2 + phi(x) * sum_k x^(2k+1) / (1*3*...*(2k+1)) near the
// centre. Below -3 the series cancels, so the lower tail uses the continued
// fraction phi(x) / (|x| + 1/(|x| + 2/(|x| + ...))) evaluated backwards.
inline long double normal_cdf(long double x) {
  if (x < -3.0L) {
    const long double a = -x;
    long double frac = a;
    for (int k = 400; k >= 1; --k) frac = a + k / frac;
    return normal_pdf(x) / frac;
  }
  if (x > 3.0L) return 1.0L - normal_cdf(-x);
  long double term = x, sum = x;
  for (int k = 1; k < 500; ++k) {
    term *= x * x / (2.0L * k + 1.0L);
    sum += term;
    if (std::fabs(term) < 1e-30L * std::fabs(sum)) break;
  }
  return 0.5L + normal_pdf(x) * sum;
}

inline long double normal_quantile(long double p) {
  long double lo = -9.0L, hi = 9.0L;
  for (int it = 0; it < 200; ++it) {
    const long double mid = 0.5L * (lo + hi);
    if (normal_cdf(mid) < p) lo = mid;
    else hi = mid;
  }
  return 0.5L * (lo + hi);
}

inline long double poisson_cdf(long double lambda, int k) {
  long double pmf = std::exp(-lambda), cdf = pmf;
  for (int j = 1; j <= k; ++j) {
    pmf *= lambda / j;
    cdf += pmf;
  }
  return cdf;
}

// Kolmogorov-Smirnov distance of a sample against U(0,1).
inline double ks_uniform(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    d = std::max(d, std::max(static_cast<double>(i + 1) / n - v[i], v[i] - static_cast<double>(i) / n));
  }
  return d;
}

// Asymptotic 1% critical value of the one-sample KS statistic.
inline double ks_critical_1pct(std::size_t n) { return 1.63 / std::sqrt(static_cast<double>(n)); }

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace oracle
