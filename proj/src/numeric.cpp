#include "bpre/numeric.hpp"

#include <algorithm>
#include <limits>

namespace bpre {

double log_sum_exp(std::span<const double> a) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : a) m = std::max(m, v);
  if (!std::isfinite(m)) return m;  // all -inf (or a +inf dominates)
  CompensatedSum s;
  for (double v : a) s.add(std::exp(v - m));
  return m + std::log(s.value());
}

double normal_cdf(double x) {
  if (x < 0.0) return 1.0 - normal_cdf(-x);
  static constexpr double p = 0.2316419;
  static constexpr double b1 = 0.319381530;
  static constexpr double b2 = -0.356563782;
  static constexpr double b3 = 1.781477937;
  static constexpr double b4 = -1.821255978;
  static constexpr double b5 = 1.330274429;
  static constexpr double inv_sqrt_2pi = 0.3989422804014327;
  const double t = 1.0 / (1.0 + p * x);
  const double poly = t * (b1 + t * (b2 + t * (b3 + t * (b4 + t * b5))));
  const double z = inv_sqrt_2pi * std::exp(-0.5 * x * x);
  return 1.0 - z * poly;
}

double ks_distance(std::vector<double> samples, const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    const double lo = f - static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n - f;
    d = std::max({d, lo, hi});
  }
  return d;
}

namespace {

double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_cf(double a, double x) {
  // Lentz continued fraction for Q(a,x).
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
  if (x <= 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  CompensatedSum sx, sy;
  for (std::size_t i = 0; i < n; ++i) {
    sx.add(x[i]);
    sy.add(y[i]);
  }
  const double mx = sx.value() / static_cast<double>(n);
  const double my = sy.value() / static_cast<double>(n);
  CompensatedSum sxx, sxy;
  for (std::size_t i = 0; i < n; ++i) {
    sxx.add((x[i] - mx) * (x[i] - mx));
    sxy.add((x[i] - mx) * (y[i] - my));
  }
  LinearFit fit;
  fit.slope = sxy.value() / sxx.value();
  fit.intercept = my - fit.slope * mx;
  return fit;
}

MeanVar mean_var(std::span<const double> xs) {
  MeanVar mv;
  mv.n = xs.size();
  if (mv.n == 0) return mv;
  CompensatedSum s;
  for (double x : xs) s.add(x);
  mv.mean = s.value() / static_cast<double>(mv.n);
  if (mv.n > 1) {
    CompensatedSum q;
    for (double x : xs) q.add((x - mv.mean) * (x - mv.mean));
    mv.variance = q.value() / static_cast<double>(mv.n - 1);
  }
  return mv;
}

}  // namespace bpre
