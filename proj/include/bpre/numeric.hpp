#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace bpre {

// Neumaier variant of Kahan summation. Order-dependent but deterministic;
// callers that need cross-partition agreement must fix the reduction order.
class CompensatedSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_total(std::span<const double> xs) {
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value();
}

// log(sum(exp(a_i))) with max-shift; tolerates -inf entries.
double log_sum_exp(std::span<const double> a);

// Standard normal distribution function. Rational approximation
// (Abramowitz & Stegun 26.2.17), absolute error <= 7.5e-8. Kept as the
// single CDF used everywhere so outputs are platform independent.
double normal_cdf(double x);

// Two-sided Kolmogorov-Smirnov distance between the empirical CDF of the
// samples and a reference CDF. Sorts a copy.
double ks_distance(std::vector<double> samples, const std::function<double(double)>& cdf);

// Regularized incomplete gamma functions (series + continued fraction).
double gamma_p(double a, double x);  // P(a,x)
double gamma_q(double a, double x);  // Q(a,x) = 1 - P(a,x)

// Upper tail p-value of a chi-square statistic with dof degrees of freedom.
inline double chi2_pvalue(double statistic, int dof) {
  return gamma_q(0.5 * dof, 0.5 * statistic);
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

// Ordinary least squares y ~ intercept + slope * x.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

struct MeanVar {
  double mean = 0.0;
  double variance = 0.0;  // unbiased (n-1)
  std::size_t n = 0;
  double std_error() const { return n > 1 ? std::sqrt(variance / static_cast<double>(n)) : 0.0; }
};

MeanVar mean_var(std::span<const double> xs);

}  // namespace bpre
