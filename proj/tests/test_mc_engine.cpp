#include <doctest.h>

#include <cmath>

#include "bpre/env_model.hpp"
#include "bpre/errors.hpp"
#include "bpre/exact_engine.hpp"
#include "bpre/mc_engine.hpp"
#include "bpre/numeric.hpp"
#include "bpre/rate_function.hpp"

using namespace bpre;

namespace {

EnvModel env_a() {
  return EnvModel({OffspringLaw({0.0, 0.0, 1.0}), OffspringLaw({0.0, 0.0, 0.0, 1.0})},
                  {0.5, 0.5});
}
EnvModel env_b() {
  return EnvModel({OffspringLaw({0.0, 0.3, 0.7}), OffspringLaw({0.0, 0.1, 0.9})}, {0.5, 0.5});
}
EnvModel env_half() { return EnvModel({OffspringLaw({0.0, 0.5, 0.5})}, {1.0}); }

}  // namespace

TEST_CASE("deterministic doubling trajectory") {
  const TrajectorySampler sampler(EnvModel({OffspringLaw({0.0, 0.0, 1.0})}, {1.0}));
  Philox rng(11, 0);
  const Trajectory tr = sampler.sample(5, rng);
  CHECK(tr.z_path[5] == 32);
  for (int k = 0; k <= 5; ++k) {
    CHECK(tr.log_w[static_cast<std::size_t>(k)] == 0.0);  // exactly
    CHECK(tr.exact_at(k));
  }
  CHECK(tr.frozen_at == -1);
}

TEST_CASE("ENV-A log W is exactly zero for every generation") {
  const TrajectorySampler sampler(env_a());
  for (std::uint64_t stream = 0; stream < 50; ++stream) {
    Philox rng(12, stream);
    const Trajectory tr = sampler.sample(60, rng);  // freezes around generation 20
    CHECK(tr.frozen_at > 0);
    for (double lw : tr.log_w) CHECK(lw == 0.0);
  }
}

TEST_CASE("log_pi is strictly increasing and matches env indices") {
  const TrajectorySampler sampler(env_b());
  Philox rng(13, 7);
  const Trajectory tr = sampler.sample(30, rng);
  for (int k = 0; k < 30; ++k) {
    CHECK(tr.log_pi[static_cast<std::size_t>(k) + 1] > tr.log_pi[static_cast<std::size_t>(k)]);
    const double m = env_b().law(static_cast<std::size_t>(
        tr.env_indices[static_cast<std::size_t>(k)])).mean();
    CHECK(tr.log_pi[static_cast<std::size_t>(k + 1)] -
              tr.log_pi[static_cast<std::size_t>(k)] ==
          doctest::Approx(std::log(m)).epsilon(1e-12));
  }
}

TEST_CASE("identical (seed, stream) gives identical trajectories; workers do not matter") {
  const TrajectorySampler sampler(env_b());
  Philox r1(42, 1234), r2(42, 1234);
  const Trajectory a = sampler.sample(40, r1);
  const Trajectory b = sampler.sample(40, r2);
  CHECK(a.env_indices == b.env_indices);
  CHECK(a.log_w == b.log_w);
  CHECK(a.z_path == b.z_path);

  // estimator results are bitwise identical across worker counts
  const auto s1 = estimate_moment_ratio(env_b(), -0.5, 20, 5000, 42, 0, /*workers=*/1);
  const auto s4 = estimate_moment_ratio(env_b(), -0.5, 20, 5000, 42, 0, /*workers=*/4);
  CHECK(s1.mean == s4.mean);
  CHECK(s1.std_error == s4.std_error);

  const auto t1 = estimate_ldp_tail(env_a(), 1.0, 30, 4000, 7, 0, 1);
  const auto t4 = estimate_ldp_tail(env_a(), 1.0, 30, 4000, 7, 0, 4);
  CHECK(t1.log_prob == t4.log_prob);
}

TEST_CASE("frozen-W mode keeps log Z consistent") {
  const TrajectorySampler sampler(env_b());
  SimOptions opts;
  opts.z_cap = 1000;
  Philox rng(14, 5);
  const Trajectory tr = sampler.sample(40, rng, opts);
  REQUIRE(tr.frozen_at > 0);
  CHECK(tr.z_path.size() == static_cast<std::size_t>(tr.frozen_at) + 1);
  CHECK(tr.z_path.back() > 1000);
  // after freezing, log_w stays constant
  for (int k = tr.frozen_at; k <= 40; ++k)
    CHECK(tr.log_w[static_cast<std::size_t>(k)] ==
          tr.log_w[static_cast<std::size_t>(tr.frozen_at)]);
  CHECK_THROWS_AS(sampler.sample(5, rng, SimOptions{1ll << 60}), Error);  // cap too large
}

TEST_CASE("Z_n distribution matches the exact annealed law (chi-square)") {
  const int n = 3;
  const long long m = 20000;
  const auto counts = sample_population_counts(env_b(), n, m, 2024, 0, 1);
  const auto expected = annealed_pmf(env_b(), n);
  const auto gof = chi2_gof_counts(counts, expected, m);
  CHECK(gof.p_value > 1e-3);
  CHECK(gof.bins >= 4);
}

TEST_CASE("moment ratio: ENV-A is exactly 1 with zero error") {
  for (double t : {-1.0, 0.5, 2.0}) {
    const auto s = estimate_moment_ratio(env_a(), t, 25, 2000, 5, 0, 1);
    CHECK(s.mean == 1.0);
    CHECK(s.std_error == 0.0);
    CHECK(s.effective_sample_size == 2000);
  }
}

TEST_CASE("moment ratio: ENV-B t=1 is 1 within 3 SE (tilted martingale mean)") {
  const auto s = estimate_moment_ratio(env_b(), 1.0, 30, 20000, 6, 0, 1);
  CHECK(std::abs(s.mean - 1.0) <= 3.0 * s.std_error);
}

TEST_CASE("moment ratio: ENV-B t=-0.5 at n=6 matches the exact oracle within 3 SE") {
  const double t = -0.5;
  const int n = 6;
  const double exact = exact_moment(annealed_pmf(env_b(), n), t).value /
                       std::exp(n * RateFunction(env_b()).lambda(t));
  const auto s = estimate_moment_ratio(env_b(), t, n, 50000, 7, 0, 1);
  CHECK(std::abs(s.mean - exact) <= 3.0 * s.std_error);
  CHECK(s.std_error < 0.01);
}

TEST_CASE("moment ratio gate: Theorem hypotheses for t < 0") {
  // E m0^{-5} = 0.5(1.7^-5 + 1.9^-5) ~ 0.0554 < E p1 = 0.2: gate must refuse
  CHECK_THROWS_AS(estimate_moment_ratio(env_b(), -5.0, 4, 100, 1, 0, 1), Error);
  try {
    estimate_moment_ratio(env_b(), -5.0, 4, 100, 1, 0, 1);
  } catch (const Error& e) {
    CHECK(e.code() == errc::precondition_violated);
  }
}

TEST_CASE("forced identity tilt reduces to the naive frequency estimator") {
  const int n = 12;
  const long long m = 20000;
  const double x = 0.95;  // above E log m ~ 0.586
  const auto is = tilted_tail_probability(env_b(), 0.0, n * x, true, n, m, 99, 0, 1);

  // naive estimator over the same streams
  const TrajectorySampler sampler(env_b());
  long long hits = 0;
  for (long long i = 0; i < m; ++i) {
    Philox rng(99, static_cast<std::uint64_t>(i));
    const Trajectory tr = sampler.sample(n, rng);
    if (tr.log_z(n) >= n * x) ++hits;
  }
  CHECK(is.summary.mean == static_cast<double>(hits) / static_cast<double>(m));
  CHECK(is.summary.effective_sample_size == doctest::Approx(static_cast<double>(m)));
}

TEST_CASE("likelihood ratio normalizes to 1 under the tilt") {
  for (double t : {-1.0, 0.7, 1.5}) {
    const TiltedEnvModel tilted = tilt(env_b(), t);
    const TrajectorySampler sampler(tilted);
    const int n = 15;
    const long long m = 20000;
    std::vector<double> lr(static_cast<std::size_t>(m));
    for_each_trajectory(sampler, n, m, 123, 0, 1, SimOptions{},
                        [&](long long i, const Trajectory& tr, Philox&) {
                          lr[static_cast<std::size_t>(i)] =
                              std::exp(n * tilted.log_norm - t * tr.log_pi[n]);
                        });
    const auto mv = mean_var(lr);
    CHECK(std::abs(mv.mean - 1.0) <= 3.0 * mv.std_error());
  }
}

TEST_CASE("untilted W_n averages to 1 within 3 SE (quenched martingale)") {
  const auto w = sample_w_proxies(env_b(), 25, 20000, 31, 0, 1);
  const auto mv = mean_var(w);
  CHECK(std::abs(mv.mean - 1.0) <= 3.0 * mv.std_error());
}

TEST_CASE("IS tail estimate agrees with the exact tail at small n") {
  // P(log Z_6 / 6 >= x) on ENV-B computed exactly from the annealed pmf
  const int n = 6;
  const double x = 0.62;  // inside (log 1.7, log 1.9)
  const PmfVector pmf = annealed_pmf(env_b(), n);
  double exact = 0.0;
  for (std::size_t z = 1; z < pmf.masses.size(); ++z)
    if (std::log(static_cast<double>(z)) >= n * x) exact += pmf.masses[z];
  const auto te = estimate_ldp_tail(env_b(), x, n, 200000, 17, 0, 1);
  CHECK(std::abs(te.summary.mean - exact) <= 3.0 * te.summary.std_error);
  CHECK(te.summary.effective_sample_size < 200000);  // weights genuinely vary
  CHECK(te.t_star > 0.0);
}

TEST_CASE("estimate_ldp_tail rejects degenerate and out-of-range inputs") {
  CHECK_THROWS_AS(estimate_ldp_tail(EnvModel({OffspringLaw({0.0, 0.0, 1.0})}, {1.0}), 0.5, 10,
                                    100, 1, 0, 1),
                  Error);
  CHECK_THROWS_AS(estimate_ldp_tail(env_a(), 2.0, 10, 100, 1, 0, 1), Error);  // x > log 3
  const double e = 0.5 * (std::log(2.0) + std::log(3.0));
  CHECK_THROWS_AS(estimate_ldp_tail(env_a(), e, 10, 100, 1, 0, 1), Error);
}

TEST_CASE("sample_w enforces the depth precondition") {
  CHECK_THROWS_AS(sample_w(env_b(), 10, 100, 1, 0, 1), Error);  // Pi_10 << 1e12
  const auto w = sample_w(env_b(), 50, 1000, 1, 0, 1);          // 50 * 0.586 > log 1e12
  CHECK(w.size() == 1000);
  for (double v : w) CHECK(v > 0.0);
}

TEST_CASE("laplace_estimate basics") {
  std::vector<double> ones(100, 1.0);
  CHECK(laplace_estimate(ones, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(laplace_estimate(ones, 0.0) == doctest::Approx(1.0));
}

TEST_CASE("KS calibration on synthetic normal samples") {
  for (const long long m : {1000ll, 10000ll}) {
    Philox rng(55, static_cast<std::uint64_t>(m));
    std::vector<double> x(static_cast<std::size_t>(m));
    for (long long i = 0; i < m; i += 2) {
      // Box-Muller pair
      const double u1 = std::max(rng.uniform(), 1e-300);
      const double u2 = rng.uniform();
      const double r = std::sqrt(-2.0 * std::log(u1));
      x[static_cast<std::size_t>(i)] = r * std::cos(2.0 * M_PI * u2);
      if (i + 1 < m) x[static_cast<std::size_t>(i + 1)] = r * std::sin(2.0 * M_PI * u2);
    }
    const double ks = ks_distance(x, normal_cdf);
    CHECK(ks < 3.0 * 1.36 / std::sqrt(static_cast<double>(m)));  // ~ M^{-1/2} scaling
  }
}

TEST_CASE("frozen-W bias: Var(W_n) agrees across caps (constant half law)") {
  const int n = 60;
  const long long m = 20000;
  SimOptions small_cap;
  small_cap.z_cap = 1'000'000;
  SimOptions big_cap;
  big_cap.z_cap = 1'000'000'000;
  const auto w1 = sample_w_proxies(env_half(), n, m, 77, 0, 1, small_cap);
  const auto w2 = sample_w_proxies(env_half(), n, m, 77, 1ull << 20, 1, big_cap);
  const auto v1 = mean_var(w1), v2 = mean_var(w2);
  // variance-of-variance via fourth moments
  auto var_se = [](const std::vector<double>& w, const MeanVar& mv) {
    double m4 = 0.0;
    for (double v : w) m4 += std::pow(v - mv.mean, 4.0);
    m4 /= static_cast<double>(w.size());
    return std::sqrt(std::max(0.0, m4 - mv.variance * mv.variance) /
                     static_cast<double>(w.size()));
  };
  const double se = std::hypot(var_se(w1, v1), var_se(w2, v2));
  CHECK(std::abs(v1.variance - v2.variance) <= 3.0 * se);
  // and the variance is near delta_inf^2 = 1/3
  CHECK(std::abs(v1.variance - 1.0 / 3.0) <= 0.1 * (1.0 / 3.0) + 3.0 * se);
}

TEST_CASE("berry-esseen statistic: rejects deterministic laws, near-normal otherwise") {
  CHECK_THROWS_AS(berry_esseen_statistic(env_a(), 6, 10, 100, 1, 0, 1), Error);
  try {
    berry_esseen_statistic(env_a(), 6, 10, 100, 1, 0, 1);
  } catch (const Error& e) {
    CHECK(e.code() == errc::hypothesis_violated);
  }

  const auto r = berry_esseen_statistic(env_half(), 10, 30, 20000, 123, 0, 1,
                                        SimOptions{1ll << 40});
  CHECK(r.samples.size() == 20000);
  CHECK(r.ks < 0.08);
}

TEST_CASE("sample_w_checkpoints matches per-n sampling layout") {
  const std::vector<int> cps{5, 10, 20};
  const auto w = sample_w_checkpoints(env_b(), cps, 500, 9, 0, 1);
  REQUIRE(w.size() == 1500);
  for (double v : w) CHECK(v > 0.0);
  // spot check: checkpoint values come from one path (same env draw prefix)
  Philox rng(9, 0);
  const Trajectory tr = TrajectorySampler(env_b()).sample(20, rng);
  CHECK(w[0] == std::exp(tr.log_w[5]));
  CHECK(w[1] == std::exp(tr.log_w[10]));
  CHECK(w[2] == std::exp(tr.log_w[20]));
}
