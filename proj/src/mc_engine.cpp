#include "bpre/mc_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "bpre/errors.hpp"
#include "bpre/numeric.hpp"

namespace bpre {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate_opts(const SimOptions& opts) {
  if (opts.z_cap < 2 || opts.z_cap > kMaxZCap)
    throw Error(errc::precondition_violated, "z_cap must lie in [2, 2^46]");
}

}  // namespace

TrajectorySampler::TrajectorySampler(EnvModel env)
    : TrajectorySampler(std::move(env), std::span<const double>{}) {}

TrajectorySampler::TrajectorySampler(EnvModel env, std::span<const double> sampling_weights)
    : env_(std::move(env)) {
  std::vector<double> w(sampling_weights.begin(), sampling_weights.end());
  if (w.empty()) w = env_.weights();
  if (w.size() != env_.size())
    throw Error(errc::invalid_weight, "sampling weights must match the law count");
  cum_weights_.resize(w.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    acc += w[k];
    cum_weights_[k] = acc;
  }
  cum_weights_.back() = 1.0;
  log_means_.reserve(env_.size());
  for (const auto& law : env_.laws()) log_means_.push_back(std::log(law.mean()));
}

TrajectorySampler::TrajectorySampler(const TiltedEnvModel& tilted)
    : TrajectorySampler(tilted.base, tilted.tilted_weights) {}

int TrajectorySampler::pick_index(double u) const {
  for (std::size_t k = 0; k + 1 < cum_weights_.size(); ++k)
    if (u < cum_weights_[k]) return static_cast<int>(k);
  return static_cast<int>(cum_weights_.size()) - 1;
}

long long step_population(long long z, const OffspringLaw& law, Philox& rng) {
  if (law.deterministic()) return z * law.min_support();
  const auto& probs = law.probs();
  const int last = law.max_support();
  long long remaining = z;
  double remaining_p = 1.0;
  long long next = 0;
  for (int j = law.min_support(); j < last; ++j) {
    if (probs[static_cast<std::size_t>(j)] == 0.0) continue;
    if (remaining == 0) return next;
    const double p = std::min(probs[static_cast<std::size_t>(j)] / remaining_p, 1.0);
    const long long nj = binomial_draw(remaining, p, rng);
    next += static_cast<long long>(j) * nj;
    remaining -= nj;
    remaining_p -= probs[static_cast<std::size_t>(j)];
  }
  return next + static_cast<long long>(last) * remaining;
}

Trajectory TrajectorySampler::sample(int n, Philox& rng, const SimOptions& opts) const {
  validate_opts(opts);
  Trajectory tr;
  tr.env_indices.resize(static_cast<std::size_t>(n));
  tr.log_pi.resize(static_cast<std::size_t>(n) + 1);
  tr.log_w.resize(static_cast<std::size_t>(n) + 1);
  tr.log_pi[0] = 0.0;
  tr.log_w[0] = 0.0;
  tr.z_path.push_back(1);
  long long z = 1;
  bool frozen = false;
  for (int k = 0; k < n; ++k) {
    const int idx = pick_index(rng.uniform());
    tr.env_indices[static_cast<std::size_t>(k)] = idx;
    const OffspringLaw& law = env_.law(static_cast<std::size_t>(idx));
    tr.log_pi[static_cast<std::size_t>(k) + 1] =
        tr.log_pi[static_cast<std::size_t>(k)] + log_means_[static_cast<std::size_t>(idx)];
    if (frozen) {
      tr.log_w[static_cast<std::size_t>(k) + 1] = tr.log_w[static_cast<std::size_t>(k)];
      continue;
    }
    const long long z_next = step_population(z, law, rng);
    // W_{k+1} = W_k * Z_{k+1} / (m Z_k); the products stay below 2^53, so the
    // ratio is exact for deterministic laws and correct to 1 ulp otherwise.
    const double ratio =
        static_cast<double>(z_next) / (static_cast<double>(z) * law.mean());
    tr.log_w[static_cast<std::size_t>(k) + 1] =
        tr.log_w[static_cast<std::size_t>(k)] + std::log(ratio);
    z = z_next;
    tr.z_path.push_back(z);
    if (z > opts.z_cap) {
      frozen = true;
      tr.frozen_at = k + 1;
    }
  }
  return tr;
}

EstimatorSummary summarize(std::span<const double> values, std::span<const double> is_weights) {
  EstimatorSummary s;
  const MeanVar mv = mean_var(values);
  s.mean = mv.mean;
  s.std_error = mv.std_error();
  s.n_samples = static_cast<long long>(values.size());
  if (is_weights.empty()) {
    s.effective_sample_size = static_cast<double>(values.size());
  } else {
    CompensatedSum sw, sw2;
    for (double w : is_weights) {
      sw.add(w);
      sw2.add(w * w);
    }
    s.effective_sample_size = sw2.value() > 0.0 ? sw.value() * sw.value() / sw2.value() : 0.0;
  }
  s.ci_lo = s.mean - 1.96 * s.std_error;
  s.ci_hi = s.mean + 1.96 * s.std_error;
  return s;
}

EstimatorSummary estimate_moment_ratio(const EnvModel& env, double t, int n, long long m_samples,
                                       std::uint64_t seed, std::uint64_t stream_base, int workers,
                                       const SimOptions& opts) {
  if (t < 0.0) {
    if (!(env.max_p1() < 1.0))
      throw Error(errc::precondition_violated, "t < 0 requires ||p1||_inf < 1");
    const double e_p1 = env_summary_unchecked(env).e_p1;
    const double e_m_t = std::exp(RateFunction(env).lambda(t));
    if (!(e_p1 < e_m_t))
      throw Error(errc::precondition_violated,
                  "t < 0 requires E p1 < E m0^t (" + std::to_string(e_p1) +
                      " >= " + std::to_string(e_m_t) + ")");
  }
  const TrajectorySampler sampler(tilt(env, t));
  std::vector<double> values(static_cast<std::size_t>(m_samples));
  for_each_trajectory(sampler, n, m_samples, seed, stream_base, workers, opts,
                      [&](long long i, const Trajectory& tr, Philox&) {
                        values[static_cast<std::size_t>(i)] =
                            std::exp(t * tr.log_w[static_cast<std::size_t>(n)]);
                      });
  return summarize(values);
}

TailEstimate tilted_tail_probability(const EnvModel& env, double t, double threshold, bool upper,
                                     int n, long long m_samples, std::uint64_t seed,
                                     std::uint64_t stream_base, int workers,
                                     const SimOptions& opts) {
  const TiltedEnvModel tilted = tilt(env, t);
  const TrajectorySampler sampler(tilted);
  std::vector<double> values(static_cast<std::size_t>(m_samples));
  std::vector<double> weights(static_cast<std::size_t>(m_samples));
  for_each_trajectory(sampler, n, m_samples, seed, stream_base, workers, opts,
                      [&](long long i, const Trajectory& tr, Philox&) {
                        const double lr = std::exp(static_cast<double>(n) * tilted.log_norm -
                                                   t * tr.log_pi[static_cast<std::size_t>(n)]);
                        const double lz = tr.log_z(n);
                        const bool hit = upper ? lz >= threshold : lz <= threshold;
                        weights[static_cast<std::size_t>(i)] = lr;
                        values[static_cast<std::size_t>(i)] = hit ? lr : 0.0;
                      });
  TailEstimate out;
  out.summary = summarize(values, weights);
  out.t_star = t;
  out.log_prob = out.summary.mean > 0.0 ? std::log(out.summary.mean) : -kInf;
  out.log_prob_std_error =
      out.summary.mean > 0.0 ? out.summary.std_error / out.summary.mean : kInf;
  return out;
}

TailEstimate estimate_ldp_tail(const EnvModel& env, double x, int n, long long m_samples,
                               std::uint64_t seed, std::uint64_t stream_base, int workers,
                               const SimOptions& opts) {
  const RateFunction rf(env);
  if (rf.degenerate())
    throw Error(errc::degenerate_tilt, "m0 is constant; tilting cannot move the mean");
  const auto [x_min, x_max] = rf.domain();
  if (!(x > x_min && x < x_max))
    throw Error(errc::precondition_violated, "x must lie in (" + std::to_string(x_min) + ", " +
                                                 std::to_string(x_max) + ")");
  if (x == rf.e_log_m())
    throw Error(errc::precondition_violated, "x = E log m0 gives the trivial tilt");
  const auto conj = rf.legendre(x);
  return tilted_tail_probability(env, conj.t_star, static_cast<double>(n) * x,
                                 /*upper=*/x > rf.e_log_m(), n, m_samples, seed, stream_base,
                                 workers, opts);
}

std::vector<double> sample_w_proxies(const EnvModel& env, int n, long long m_samples,
                                     std::uint64_t seed, std::uint64_t stream_base, int workers,
                                     const SimOptions& opts) {
  const TrajectorySampler sampler(env);
  std::vector<double> out(static_cast<std::size_t>(m_samples));
  for_each_trajectory(sampler, n, m_samples, seed, stream_base, workers, opts,
                      [&](long long i, const Trajectory& tr, Philox&) {
                        out[static_cast<std::size_t>(i)] =
                            std::exp(tr.log_w[static_cast<std::size_t>(n)]);
                      });
  return out;
}

std::vector<double> sample_w(const EnvModel& env, int n_total, long long m_samples,
                             std::uint64_t seed, std::uint64_t stream_base, int workers,
                             const SimOptions& opts) {
  const EnvSummary s = env_summary(env);
  if (static_cast<double>(n_total) * s.e_log_m < std::log(1e12))
    throw Error(errc::precondition_violated,
                "n_total too small: need n_total * E log m0 >= log 1e12");
  return sample_w_proxies(env, n_total, m_samples, seed, stream_base, workers, opts);
}

std::vector<double> sample_w_checkpoints(const EnvModel& env, std::span<const int> checkpoints,
                                         long long m_samples, std::uint64_t seed,
                                         std::uint64_t stream_base, int workers,
                                         const SimOptions& opts) {
  const int n_max = *std::max_element(checkpoints.begin(), checkpoints.end());
  const std::size_t c = checkpoints.size();
  const TrajectorySampler sampler(env);
  std::vector<double> out(static_cast<std::size_t>(m_samples) * c);
  for_each_trajectory(sampler, n_max, m_samples, seed, stream_base, workers, opts,
                      [&](long long i, const Trajectory& tr, Philox&) {
                        for (std::size_t j = 0; j < c; ++j)
                          out[static_cast<std::size_t>(i) * c + j] =
                              std::exp(tr.log_w[static_cast<std::size_t>(checkpoints[j])]);
                      });
  return out;
}

double laplace_estimate(std::span<const double> samples, double t) {
  if (samples.empty()) throw Error(errc::precondition_violated, "no samples");
  CompensatedSum s;
  for (double x : samples) s.add(std::exp(-t * x));
  return s.value() / static_cast<double>(samples.size());
}

std::vector<long long> sample_population_counts(const EnvModel& env, int n, long long m_samples,
                                                std::uint64_t seed, std::uint64_t stream_base,
                                                int workers, const SimOptions& opts) {
  const TrajectorySampler sampler(env);
  std::vector<long long> zs(static_cast<std::size_t>(m_samples));
  std::atomic<bool> overflow{false};
  for_each_trajectory(sampler, n, m_samples, seed, stream_base, workers, opts,
                      [&](long long i, const Trajectory& tr, Philox&) {
                        if (!tr.exact_at(n)) {
                          overflow.store(true, std::memory_order_relaxed);
                          return;
                        }
                        zs[static_cast<std::size_t>(i)] = tr.z_path[static_cast<std::size_t>(n)];
                      });
  if (overflow.load())
    throw Error(errc::precondition_violated, "population exceeded z_cap before generation n");
  long long z_top = 0;
  for (long long z : zs) z_top = std::max(z_top, z);
  std::vector<long long> counts(static_cast<std::size_t>(z_top) + 1, 0);
  for (long long z : zs) ++counts[static_cast<std::size_t>(z)];
  return counts;
}

Chi2Result chi2_gof_counts(const std::vector<long long>& counts, const PmfVector& expected,
                           long long m_samples, double min_expected) {
  const std::size_t top = std::max(counts.size(), expected.masses.size());
  Chi2Result r;
  CompensatedSum stat;
  double pool_exp = 0.0;
  long long pool_obs = 0;
  for (std::size_t z = 0; z < top; ++z) {
    pool_exp += static_cast<double>(m_samples) *
                (z < expected.masses.size() ? expected.masses[z] : 0.0);
    pool_obs += z < counts.size() ? counts[z] : 0;
    if (pool_exp >= min_expected) {
      const double d = static_cast<double>(pool_obs) - pool_exp;
      stat.add(d * d / pool_exp);
      ++r.bins;
      pool_exp = 0.0;
      pool_obs = 0;
    }
  }
  if (pool_exp > 0.0 || pool_obs > 0) {
    // fold the remainder into a final cell (or the previous one when tiny)
    if (pool_exp >= 1e-9) {
      const double d = static_cast<double>(pool_obs) - pool_exp;
      stat.add(d * d / pool_exp);
      ++r.bins;
    } else if (pool_obs > 0) {
      throw Error(errc::precondition_violated, "observed mass where expected pmf has none");
    }
  }
  r.statistic = stat.value();
  r.dof = std::max(1, r.bins - 1);
  r.p_value = chi2_pvalue(r.statistic, r.dof);
  return r;
}

BerryEsseenResult berry_esseen_statistic(const EnvModel& env, int n, int horizon,
                                         long long m_samples, std::uint64_t seed,
                                         std::uint64_t stream_base, int workers,
                                         const SimOptions& opts) {
  for (const auto& law : env.laws()) {
    const double m = law.mean();
    if (!(law.second_moment() / (m * m) > 1.0))
      throw Error(errc::hypothesis_violated,
                  "essinf m0(2)/m0^2 > 1 fails (a deterministic law has no variance)");
  }
  const TrajectorySampler sampler(env);
  const TrajectorySampler extension(env);  // tail extension always uses base weights
  const int n_total = n + horizon;
  BerryEsseenResult out;
  out.samples.resize(static_cast<std::size_t>(m_samples));
  std::atomic<bool> not_exact{false};
  for_each_trajectory(
      sampler, n_total, m_samples, seed, stream_base, workers, opts,
      [&](long long i, const Trajectory& tr, Philox& rng) {
        if (!tr.exact_at(n)) {
          not_exact.store(true, std::memory_order_relaxed);
          return;
        }
        std::vector<int> extra;
        const auto tail_index = [&](int k) {
          if (k < horizon) return tr.env_indices[static_cast<std::size_t>(n + k)];
          const int need = k - horizon;
          while (static_cast<int>(extra.size()) <= need)
            extra.push_back(extension.pick_index(rng.uniform()));
          return extra[static_cast<std::size_t>(need)];
        };
        const double d2 = delta_inf_sq(env, tail_index).value;
        const double w_n = std::exp(tr.log_w[static_cast<std::size_t>(n)]);
        const double w_nh = std::exp(tr.log_w[static_cast<std::size_t>(n_total)]);
        const double pi_n = std::exp(tr.log_pi[static_cast<std::size_t>(n)]);
        const double z_n = static_cast<double>(tr.z_path[static_cast<std::size_t>(n)]);
        out.samples[static_cast<std::size_t>(i)] =
            pi_n * (w_nh - w_n) / (std::sqrt(z_n) * std::sqrt(d2));
      });
  if (not_exact.load())
    throw Error(errc::precondition_violated,
                "Z_n exceeded z_cap before generation n; lower n or raise z_cap");
  out.ks = ks_distance(out.samples, normal_cdf);
  return out;
}

}  // namespace bpre
