#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bpre/env_model.hpp"
#include "bpre/exact_engine.hpp"
#include "bpre/par.hpp"
#include "bpre/rate_function.hpp"
#include "bpre/rng.hpp"

namespace bpre {

struct SimOptions {
  // Populations are simulated exactly up to this cap; beyond it W is frozen
  // and log Z_m = log W_frozen + log Pi_m. Must stay below 2^46 so population
  // arithmetic remains exact in doubles.
  long long z_cap = 1'000'000'000;
};

inline constexpr long long kMaxZCap = 1ll << 46;

struct Trajectory {
  std::vector<int> env_indices;   // length n
  std::vector<double> log_pi;     // length n+1, partial sums of log m
  std::vector<double> log_w;      // length n+1, log W_k; constant after freezing
  std::vector<long long> z_path;  // exact populations up to the crossing generation
  int frozen_at = -1;             // generation where the hybrid mode engaged (-1: never)

  int generations() const { return static_cast<int>(env_indices.size()); }
  double log_z(int k) const { return log_pi[static_cast<std::size_t>(k)] + log_w[static_cast<std::size_t>(k)]; }
  bool exact_at(int k) const { return frozen_at < 0 || k <= frozen_at; }
};

// Draws environment indices i.i.d. from the given weights (base or tilted)
// and advances the population by the multinomial decomposition: the z
// individuals are split among the offspring counts by sequential exact
// binomial draws. Deterministic laws consume no randomness.
class TrajectorySampler {
 public:
  explicit TrajectorySampler(EnvModel env);
  TrajectorySampler(EnvModel env, std::span<const double> sampling_weights);
  explicit TrajectorySampler(const TiltedEnvModel& tilted);

  const EnvModel& env() const { return env_; }
  Trajectory sample(int n, Philox& rng, const SimOptions& opts = {}) const;
  int pick_index(double u) const;  // inverse CDF over the sampling weights

 private:
  EnvModel env_;
  std::vector<double> cum_weights_;
  std::vector<double> log_means_;
};

long long step_population(long long z, const OffspringLaw& law, Philox& rng);

// Parallel trajectory kernel. Each index owns stream (stream_base + i); the
// callback gets the trajectory plus the still-usable per-trajectory generator
// and must write only to its own slots.
template <class Record>
void for_each_trajectory(const TrajectorySampler& sampler, int n, long long m_samples,
                         std::uint64_t seed, std::uint64_t stream_base, int workers,
                         const SimOptions& opts, Record&& rec) {
  par::parallel_for(m_samples, workers, [&](std::int64_t i) {
    Philox rng(seed, stream_base + static_cast<std::uint64_t>(i));
    const Trajectory tr = sampler.sample(n, rng, opts);
    rec(static_cast<long long>(i), tr, rng);
  });
}

struct EstimatorSummary {
  double mean = 0.0;
  double std_error = 0.0;
  long long n_samples = 0;
  double effective_sample_size = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

// values are the per-trajectory estimator terms; is_weights (optional) are the
// likelihood ratios used only for the Kish effective sample size.
EstimatorSummary summarize(std::span<const double> values,
                           std::span<const double> is_weights = {});

// E Z_n^t / (E m0^t)^n estimated as the plain average of W_n^t under the
// environment tilted by t. For t < 0 requires ||p1||_inf < 1 and
// E p1 < E m0^t.
EstimatorSummary estimate_moment_ratio(const EnvModel& env, double t, int n, long long m_samples,
                                       std::uint64_t seed, std::uint64_t stream_base, int workers,
                                       const SimOptions& opts = {});

struct TailEstimate {
  double log_prob = 0.0;           // log of the unbiased IS estimate
  double log_prob_std_error = 0.0; // delta-method error of log_prob
  EstimatorSummary summary;        // of the weighted indicator
  double t_star = 0.0;
};

// P(log Z_n >= threshold) (upper) or <= threshold (lower) by importance
// sampling under tilt(env, t) with the exact likelihood ratio
// exp(n Lambda(t) - t log Pi_n).
TailEstimate tilted_tail_probability(const EnvModel& env, double t, double threshold, bool upper,
                                     int n, long long m_samples, std::uint64_t seed,
                                     std::uint64_t stream_base, int workers,
                                     const SimOptions& opts = {});

// Tail of log Z_n / n at level x, tilted at the conjugate point t* solving
// Lambda'(t*) = x. Requires x inside the open domain and x != E log m0.
TailEstimate estimate_ldp_tail(const EnvModel& env, double x, int n, long long m_samples,
                               std::uint64_t seed, std::uint64_t stream_base, int workers,
                               const SimOptions& opts = {});

// W_n proxies without any gate (used by studies that scan n).
std::vector<double> sample_w_proxies(const EnvModel& env, int n, long long m_samples,
                                     std::uint64_t seed, std::uint64_t stream_base, int workers,
                                     const SimOptions& opts = {});

// W approximants: requires n_total large enough that Pi_n >= 1e12 in
// expectation (n_total * E log m0 >= log 1e12). Negative moments of these
// proxies lower-bound those of W.
std::vector<double> sample_w(const EnvModel& env, int n_total, long long m_samples,
                             std::uint64_t seed, std::uint64_t stream_base, int workers,
                             const SimOptions& opts = {});

// One pass to max(checkpoints): out[i * checkpoints.size() + c] = W_{n_c} of
// trajectory i. Common random numbers across the checkpoint list.
std::vector<double> sample_w_checkpoints(const EnvModel& env, std::span<const int> checkpoints,
                                         long long m_samples, std::uint64_t seed,
                                         std::uint64_t stream_base, int workers,
                                         const SimOptions& opts = {});

// Plug-in Laplace transform estimate phi(t) = mean of exp(-t * sample).
double laplace_estimate(std::span<const double> samples, double t);

// Final-generation population counts (exact regime), for goodness-of-fit.
std::vector<long long> sample_population_counts(const EnvModel& env, int n, long long m_samples,
                                                std::uint64_t seed, std::uint64_t stream_base,
                                                int workers, const SimOptions& opts = {});

struct Chi2Result {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 0.0;
  int bins = 0;
};

// Pearson chi-square of observed counts against an exact pmf; adjacent cells
// are pooled until each expected count reaches min_expected.
Chi2Result chi2_gof_counts(const std::vector<long long>& counts, const PmfVector& expected,
                           long long m_samples, double min_expected = 5.0);

struct BerryEsseenResult {
  double ks = 0.0;
  std::vector<double> samples;  // the M normalized statistics
};

// Per replicate: simulate exactly to n, extend to n + horizon, and form
// Pi_n (W_{n+horizon} - W_n) / (sqrt(Z_n) delta_inf(T^n xi)), with the
// variance series evaluated on the realized environment tail (extended by
// fresh draws when the series needs more terms). ks is the distance of the
// statistics to the standard normal CDF.
BerryEsseenResult berry_esseen_statistic(const EnvModel& env, int n, int horizon,
                                         long long m_samples, std::uint64_t seed,
                                         std::uint64_t stream_base, int workers,
                                         const SimOptions& opts = {});

}  // namespace bpre
