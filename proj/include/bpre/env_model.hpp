#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bpre/rng.hpp"

namespace bpre {

// One reproduction law: probability masses over offspring counts 0..K.
// p_0 is required to be exactly zero, so populations never go extinct.
class OffspringLaw {
 public:
  static constexpr int kMaxSupport = 64;

  explicit OffspringLaw(std::vector<double> probs);

  const std::vector<double>& probs() const { return probs_; }
  double mean() const { return mean_; }
  double second_moment() const { return m2_; }
  double moment(double p) const;  // sum_j j^p probs[j], exact finite sum
  double p1() const { return probs_.size() > 1 ? probs_[1] : 0.0; }

  int min_support() const { return min_support_; }
  int max_support() const { return max_support_; }
  int support_size() const { return support_size_; }
  bool deterministic() const { return support_size_ == 1; }

 private:
  std::vector<double> probs_;
  double mean_ = 0.0;
  double m2_ = 0.0;
  int min_support_ = 0;
  int max_support_ = 0;
  int support_size_ = 0;
};

// Finite-support i.i.d. environment: at each generation one of the laws is
// drawn with the given weights.
class EnvModel {
 public:
  EnvModel(std::vector<OffspringLaw> laws, std::vector<double> weights);

  const std::vector<OffspringLaw>& laws() const { return laws_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return laws_.size(); }
  const OffspringLaw& law(std::size_t k) const { return laws_[k]; }
  double weight(std::size_t k) const { return weights_[k]; }

  double min_mean() const;  // A1 candidate
  double max_p1() const;

 private:
  std::vector<OffspringLaw> laws_;
  std::vector<double> weights_;
};

struct EnvSummary {
  double e_log_m = 0.0;
  double sigma2 = 0.0;  // var(log m0)
  double e_p1 = 0.0;
};

// Elementary environment moments. Throws NotSupercritical when E log m0 <= 0.
EnvSummary env_summary(const EnvModel& env);

// Same computation without the supercriticality gate (used by reports that
// must be produced even for degenerate environments).
EnvSummary env_summary_unchecked(const EnvModel& env);

struct HypothesisHReport {
  double A1 = 0.0;       // tightest lower bound on m0
  double A = 0.0;        // tightest admissible A for the supplied delta
  double delta = 0.0;
  bool holds = false;    // A1 > 1
  double p1_sup = 0.0;
  double e_p1 = 0.0;
  int underline_m = 0;   // essinf Z1
  bool p1_zero = false;
  std::optional<double> gamma;  // log(underline_m)/log(A), only when p1 == 0 a.s.
};

HypothesisHReport check_hypothesis_h(const EnvModel& env, double delta);

// Stable 64-bit content hash of the environment (laws + weights).
std::uint64_t env_hash(const EnvModel& env);
std::string env_hash_hex(const EnvModel& env);

struct RandomEnvOptions {
  int min_laws = 2;
  int max_laws = 4;
  int max_offspring = 8;
  double p1_max = 0.5;   // 0 disables mass at j=1
  bool distinct_means = true;
};

// Deterministic pseudo-random environment for property tests and sweeps.
EnvModel random_env(Philox& rng, const RandomEnvOptions& opts = {});

}  // namespace bpre
