#include "bpre/rate_function.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bpre/errors.hpp"
#include "bpre/numeric.hpp"

namespace bpre {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

RateFunction::RateFunction(const EnvModel& env) {
  log_means_.reserve(env.size());
  weights_ = env.weights();
  for (const auto& law : env.laws()) log_means_.push_back(std::log(law.mean()));
  log_weights_.reserve(env.size());
  for (double w : weights_) log_weights_.push_back(std::log(w));
  CompensatedSum e;
  for (std::size_t k = 0; k < weights_.size(); ++k) e.add(weights_[k] * log_means_[k]);
  e_log_m_ = e.value();
  x_min_ = *std::min_element(log_means_.begin(), log_means_.end());
  x_max_ = *std::max_element(log_means_.begin(), log_means_.end());
  CompensatedSum wlo, whi;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    if (log_means_[k] == x_min_) wlo.add(weights_[k]);
    if (log_means_[k] == x_max_) whi.add(weights_[k]);
  }
  boundary_weight_min_ = wlo.value();
  boundary_weight_max_ = whi.value();
}

double RateFunction::lambda(double t) const {
  std::vector<double> terms(weights_.size());
  for (std::size_t k = 0; k < weights_.size(); ++k)
    terms[k] = log_weights_[k] + t * log_means_[k];
  return log_sum_exp(terms);
}

double RateFunction::lambda_prime(double t) const {
  // softmax weights u_k(t) ~ w_k m_k^t
  double m = -kInf;
  for (std::size_t k = 0; k < weights_.size(); ++k)
    m = std::max(m, log_weights_[k] + t * log_means_[k]);
  CompensatedSum z, num;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const double u = std::exp(log_weights_[k] + t * log_means_[k] - m);
    z.add(u);
    num.add(u * log_means_[k]);
  }
  return num.value() / z.value();
}

double RateFunction::lambda_second(double t) const {
  double m = -kInf;
  for (std::size_t k = 0; k < weights_.size(); ++k)
    m = std::max(m, log_weights_[k] + t * log_means_[k]);
  CompensatedSum z, s1, s2;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const double u = std::exp(log_weights_[k] + t * log_means_[k] - m);
    z.add(u);
    s1.add(u * log_means_[k]);
    s2.add(u * log_means_[k] * log_means_[k]);
  }
  const double mu = s1.value() / z.value();
  return std::max(0.0, s2.value() / z.value() - mu * mu);
}

RateFunction::Conjugate RateFunction::legendre(double x) const {
  Conjugate c;
  if (degenerate()) {
    if (x == x_min_) {
      c.value = 0.0;
      c.t_star = 0.0;
    } else {
      c.value = kInf;
      c.t_star = x > x_min_ ? kInf : -kInf;
    }
    return c;
  }
  if (x < x_min_ || x > x_max_) {
    c.value = kInf;
    c.t_star = x > x_max_ ? kInf : -kInf;
    return c;
  }
  if (x == x_max_) {
    c.value = -std::log(boundary_weight_max_);
    c.t_star = kInf;
    return c;
  }
  if (x == x_min_) {
    c.value = -std::log(boundary_weight_min_);
    c.t_star = -kInf;
    return c;
  }

  // Bracket t with Lambda'(lo) < x < Lambda'(hi); Lambda' is increasing and
  // spans (x_min, x_max), so geometric growth always terminates.
  double lo = 0.0, hi = 0.0;
  if (lambda_prime(0.0) < x) {
    hi = 1.0;
    while (lambda_prime(hi) < x) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e18) throw Error(errc::no_convergence, "bracket growth failed (upper)");
    }
  } else {
    lo = -1.0;
    while (lambda_prime(lo) > x) {
      hi = lo;
      lo *= 2.0;
      if (lo < -1e18) throw Error(errc::no_convergence, "bracket growth failed (lower)");
    }
  }

  const double tol = 1e-10 * std::max(1.0, std::abs(x));
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double g = lambda_prime(t) - x;
    if (std::abs(g) <= tol) {
      c.t_star = t;
      c.value = std::max(0.0, t * x - lambda(t));
      return c;
    }
    if (g > 0.0)
      hi = t;
    else
      lo = t;
    const double h = lambda_second(t);
    double next = h > 0.0 ? t - g / h : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    t = next;
  }
  throw Error(errc::no_convergence,
              "Newton/bisection did not meet tolerance; bracket [" + std::to_string(lo) + ", " +
                  std::to_string(hi) + "]");
}

TiltedEnvModel tilt(const EnvModel& env, double t) {
  TiltedEnvModel out{env, t, {}, 0.0};
  if (t == 0.0) {
    out.tilted_weights = env.weights();
    return out;
  }
  RateFunction rf(env);
  out.log_norm = rf.lambda(t);
  out.tilted_weights.resize(env.size());
  for (std::size_t k = 0; k < env.size(); ++k)
    out.tilted_weights[k] =
        std::exp(std::log(env.weight(k)) + t * std::log(env.law(k).mean()) - out.log_norm);
  const double total = compensated_total(out.tilted_weights);
  for (double& w : out.tilted_weights) w /= total;
  return out;
}

double critical_a0(const EnvModel& env) {
  for (const auto& law : env.laws())
    if (!(law.mean() > 1.0))
      throw Error(errc::invalid_env, "critical_a0 requires every law mean > 1");
  const double e_p1 = env_summary_unchecked(env).e_p1;
  if (e_p1 == 0.0) return kInf;
  if (e_p1 >= 1.0) throw Error(errc::precondition_violated, "E p1 must be < 1");

  auto g = [&](double a) {
    CompensatedSum s;
    for (std::size_t k = 0; k < env.size(); ++k)
      s.add(env.weight(k) * env.law(k).p1() * std::pow(env.law(k).mean(), a));
    return s.value();
  };
  // g is strictly increasing with g(0) = E p1 < 1; grow the bracket until it
  // crosses 1, then bisect.
  double lo = 0.0, hi = 1.0;
  while (g(hi) < 1.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e12) throw Error(errc::no_convergence, "a0 bracket growth failed");
  }
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double gm = g(mid);
    if (std::abs(gm - 1.0) <= 1e-12) return mid;
    if (gm < 1.0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-15 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

double quenched_alpha0(const EnvModel& env) {
  CompensatedSum num, den;
  for (std::size_t k = 0; k < env.size(); ++k) {
    if (env.law(k).p1() == 0.0) return kInf;  // E log p1 = -inf
    num.add(env.weight(k) * std::log(env.law(k).p1()));
    den.add(env.weight(k) * std::log(env.law(k).mean()));
  }
  return -num.value() / den.value();
}

bool positive_moment_criterion(const EnvModel& env, double s) {
  if (!(s > 1.0)) throw Error(errc::precondition_violated, "s must be > 1");
  return RateFunction(env).lambda(1.0 - s) < 0.0;
}

}  // namespace bpre
