#include "bpre/env_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "bpre/errors.hpp"
#include "bpre/numeric.hpp"

namespace bpre {

namespace {
constexpr double kNormTol = 1e-12;
}

OffspringLaw::OffspringLaw(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2)
    throw Error(errc::not_normalized, "offspring law needs masses for at least {0,1}");
  if (static_cast<int>(probs_.size()) > kMaxSupport + 1)
    throw Error(errc::support_too_large,
                "offspring support exceeds " + std::to_string(kMaxSupport));
  for (double p : probs_) {
    if (!std::isfinite(p)) throw Error(errc::negative_mass, "non-finite mass");
    if (p < 0.0) throw Error(errc::negative_mass, "negative mass");
  }
  if (probs_[0] != 0.0) throw Error(errc::non_zero_p0, "p0 must be exactly 0");
  const double total = compensated_total(probs_);
  if (std::abs(total - 1.0) > kNormTol)
    throw Error(errc::not_normalized,
                "masses sum to " + std::to_string(total) + ", outside 1 +/- 1e-12");
  for (double& p : probs_) p /= total;

  CompensatedSum m, m2;
  min_support_ = -1;
  for (std::size_t j = 1; j < probs_.size(); ++j) {
    if (probs_[j] > 0.0) {
      const double dj = static_cast<double>(j);
      m.add(dj * probs_[j]);
      m2.add(dj * dj * probs_[j]);
      if (min_support_ < 0) min_support_ = static_cast<int>(j);
      max_support_ = static_cast<int>(j);
      ++support_size_;
    }
  }
  if (support_size_ == 0) throw Error(errc::not_normalized, "law has empty support");
  mean_ = m.value();
  m2_ = m2.value();
}

double OffspringLaw::moment(double p) const {
  CompensatedSum s;
  for (std::size_t j = 1; j < probs_.size(); ++j)
    if (probs_[j] > 0.0) s.add(std::pow(static_cast<double>(j), p) * probs_[j]);
  return s.value();
}

EnvModel::EnvModel(std::vector<OffspringLaw> laws, std::vector<double> weights)
    : laws_(std::move(laws)), weights_(std::move(weights)) {
  if (laws_.empty()) throw Error(errc::invalid_env, "environment has no laws");
  if (laws_.size() != weights_.size())
    throw Error(errc::invalid_weight, "one weight per law required");
  for (double w : weights_) {
    if (!std::isfinite(w) || w <= 0.0)
      throw Error(errc::invalid_weight, "weights must be strictly positive");
  }
  const double total = compensated_total(weights_);
  if (std::abs(total - 1.0) > kNormTol)
    throw Error(errc::invalid_weight,
                "weights sum to " + std::to_string(total) + ", outside 1 +/- 1e-12");
  for (double& w : weights_) w /= total;
}

double EnvModel::min_mean() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& l : laws_) m = std::min(m, l.mean());
  return m;
}

double EnvModel::max_p1() const {
  double p = 0.0;
  for (const auto& l : laws_) p = std::max(p, l.p1());
  return p;
}

EnvSummary env_summary_unchecked(const EnvModel& env) {
  EnvSummary s;
  CompensatedSum e1, e2, ep;
  for (std::size_t k = 0; k < env.size(); ++k) {
    const double lm = std::log(env.law(k).mean());
    e1.add(env.weight(k) * lm);
    e2.add(env.weight(k) * lm * lm);
    ep.add(env.weight(k) * env.law(k).p1());
  }
  s.e_log_m = e1.value();
  s.sigma2 = std::max(0.0, e2.value() - s.e_log_m * s.e_log_m);
  s.e_p1 = ep.value();
  return s;
}

EnvSummary env_summary(const EnvModel& env) {
  EnvSummary s = env_summary_unchecked(env);
  if (!(s.e_log_m > 0.0))
    throw Error(errc::not_supercritical, "E log m0 = " + std::to_string(s.e_log_m));
  return s;
}

HypothesisHReport check_hypothesis_h(const EnvModel& env, double delta) {
  if (!(delta > 0.0)) throw Error(errc::precondition_violated, "delta must be > 0");
  HypothesisHReport r;
  r.delta = delta;
  r.A1 = env.min_mean();
  double a_pow = 0.0;
  int umin = std::numeric_limits<int>::max();
  bool p1_zero = true;
  for (const auto& law : env.laws()) {
    // power mean m(1+delta)^{1/(1+delta)} in log space (the plain moment
    // overflows for large delta)
    std::vector<double> terms;
    for (std::size_t j = 1; j < law.probs().size(); ++j)
      if (law.probs()[j] > 0.0)
        terms.push_back(std::log(law.probs()[j]) +
                        (1.0 + delta) * std::log(static_cast<double>(j)));
    a_pow = std::max(a_pow, std::exp(log_sum_exp(terms) / (1.0 + delta)));
    umin = std::min(umin, law.min_support());
    if (law.p1() > 0.0) p1_zero = false;
    r.p1_sup = std::max(r.p1_sup, law.p1());
  }
  r.A = std::max(a_pow, r.A1 * (1.0 + 1e-9));
  r.underline_m = umin;
  r.p1_zero = p1_zero;
  r.holds = r.A1 > 1.0;
  r.e_p1 = env_summary_unchecked(env).e_p1;
  if (p1_zero && umin >= 2) r.gamma = std::log(static_cast<double>(umin)) / std::log(r.A);
  return r;
}

namespace {

void fnv_mix(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
}

}  // namespace

std::uint64_t env_hash(const EnvModel& env) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[64];
  for (const auto& law : env.laws()) {
    for (double p : law.probs()) {
      const int n = std::snprintf(buf, sizeof buf, "%.17g,", p);
      fnv_mix(h, buf, static_cast<std::size_t>(n));
    }
    fnv_mix(h, ";", 1);
  }
  fnv_mix(h, "|", 1);
  for (double w : env.weights()) {
    const int n = std::snprintf(buf, sizeof buf, "%.17g,", w);
    fnv_mix(h, buf, static_cast<std::size_t>(n));
  }
  return h;
}

std::string env_hash_hex(const EnvModel& env) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(env_hash(env)));
  return buf;
}

EnvModel random_env(Philox& rng, const RandomEnvOptions& opts) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    const int n_laws =
        opts.min_laws + static_cast<int>(rng.uniform() * (opts.max_laws - opts.min_laws + 1));
    std::vector<OffspringLaw> laws;
    for (int k = 0; k < n_laws; ++k) {
      std::vector<double> probs(static_cast<std::size_t>(opts.max_offspring) + 1, 0.0);
      double p1 = 0.0;
      if (opts.p1_max > 0.0 && rng.uniform() < 0.5) p1 = rng.uniform() * opts.p1_max;
      probs[1] = p1;
      // spread remaining mass over 1..3 support points with j >= 2
      const int atoms = 1 + static_cast<int>(rng.uniform() * 3.0);
      double rest = 1.0 - p1;
      for (int a = 0; a < atoms; ++a) {
        const int j = 2 + static_cast<int>(rng.uniform() * (opts.max_offspring - 1));
        const double frac = (a + 1 == atoms) ? 1.0 : rng.uniform();
        probs[static_cast<std::size_t>(j)] += rest * frac;
        rest *= (1.0 - frac);
      }
      // exact renormalization so construction tolerance is met
      double total = compensated_total(probs);
      for (double& p : probs) p /= total;
      laws.emplace_back(std::move(probs));
    }
    std::vector<double> weights(static_cast<std::size_t>(n_laws));
    double wt = 0.0;
    for (double& w : weights) {
      w = 0.05 + rng.uniform();
      wt += w;
    }
    for (double& w : weights) w /= wt;
    EnvModel env(std::move(laws), std::move(weights));
    if (opts.distinct_means) {
      double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
      for (const auto& l : env.laws()) {
        lo = std::min(lo, l.mean());
        hi = std::max(hi, l.mean());
      }
      if (!(hi > lo * (1.0 + 1e-6))) continue;
    }
    return env;
  }
  throw Error(errc::invalid_env, "random_env failed to produce a usable environment");
}

}  // namespace bpre
