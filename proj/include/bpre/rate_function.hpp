#pragma once

#include <utility>
#include <vector>

#include "bpre/env_model.hpp"

namespace bpre {

// Cumulant generating function Lambda(t) = log E m0^t of the log offspring
// mean, its derivatives, and the Fenchel-Legendre transform Lambda*.
class RateFunction {
 public:
  explicit RateFunction(const EnvModel& env);

  double lambda(double t) const;
  double lambda_prime(double t) const;
  double lambda_second(double t) const;

  double e_log_m() const { return e_log_m_; }
  // Range of Lambda': (min_k log m_k, max_k log m_k).
  std::pair<double, double> domain() const { return {x_min_, x_max_}; }
  bool degenerate() const { return x_min_ == x_max_; }

  struct Conjugate {
    double value = 0.0;   // Lambda*(x); +inf strictly outside [x_min, x_max]
    double t_star = 0.0;  // argmax of tx - Lambda(t); +/-inf at the endpoints
  };

  // Lambda*(x) = sup_t {tx - Lambda(t)}. Interior points are solved by
  // safeguarded Newton on Lambda'(t) = x (|Lambda' - x| <= 1e-10 max(1,|x|),
  // at most 200 iterations); the endpoints return the finite supremum
  // -log(weight of the boundary atoms).
  Conjugate legendre(double x) const;
  double lambda_star(double x) const { return legendre(x).value; }

 private:
  std::vector<double> log_means_;
  std::vector<double> weights_;
  std::vector<double> log_weights_;
  double e_log_m_ = 0.0;
  double x_min_ = 0.0;
  double x_max_ = 0.0;
  double boundary_weight_min_ = 0.0;
  double boundary_weight_max_ = 0.0;
};

// Environment with weights reweighted proportionally to m_k^t. The offspring
// laws themselves are unchanged; only the environment law is tilted.
struct TiltedEnvModel {
  EnvModel base;
  double t = 0.0;
  std::vector<double> tilted_weights;
  double log_norm = 0.0;  // Lambda(t)

  EnvModel as_env() const { return EnvModel(base.laws(), tilted_weights); }
};

TiltedEnvModel tilt(const EnvModel& env, double t);

// Critical exponent a0 for the annealed harmonic moments: the root of
// E p1 m0^a = 1. +inf when p1 == 0 a.s. Requires every law mean > 1.
double critical_a0(const EnvModel& env);

// Hambly's quenched critical value alpha0 = -E log p1 / E log m0;
// +inf when some law in the support has p1 = 0.
double quenched_alpha0(const EnvModel& env);

// Moment criterion for E W^s (s > 1): true iff Lambda(1-s) < 0.
bool positive_moment_criterion(const EnvModel& env, double s);

}  // namespace bpre
