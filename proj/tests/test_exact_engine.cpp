#include <doctest.h>

#include <cmath>

#include "bpre/env_model.hpp"
#include "bpre/errors.hpp"
#include "bpre/exact_engine.hpp"
#include "bpre/exact_rational.hpp"
#include "bpre/numeric.hpp"

using namespace bpre;

namespace {

EnvModel env_a() {
  return EnvModel({OffspringLaw({0.0, 0.0, 1.0}), OffspringLaw({0.0, 0.0, 0.0, 1.0})},
                  {0.5, 0.5});
}
EnvModel env_b() {
  return EnvModel({OffspringLaw({0.0, 0.3, 0.7}), OffspringLaw({0.0, 0.1, 0.9})}, {0.5, 0.5});
}
EnvModel env_c() {
  return EnvModel({OffspringLaw({0.0, 0.0, 0.5, 0.5}), OffspringLaw({0.0, 0.0, 1.0})},
                  {0.5, 0.5});
}

double binom(int n, int k) {
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
}

}  // namespace

TEST_CASE("step_quenched basics") {
  const PmfVector d1 = PmfVector::delta(1);
  const OffspringLaw doubling({0.0, 0.0, 1.0});
  const PmfVector d2 = step_quenched(d1, doubling, 1 << 16);
  CHECK(d2.at(2) == 1.0);
  CHECK(d2.lost_mass == 0.0);

  // two individuals, each 1 or 2 children with probability 1/2
  const OffspringLaw half({0.0, 0.5, 0.5});
  const PmfVector spread = step_quenched(PmfVector::delta(2), half, 1 << 16);
  CHECK(spread.at(2) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(spread.at(3) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(spread.at(4) == doctest::Approx(0.25).epsilon(1e-15));

  // n deterministic doublings: delta at 2^n
  PmfVector p = PmfVector::delta(1);
  for (int i = 0; i < 10; ++i) p = step_quenched(p, doubling, 1 << 16);
  CHECK(p.at(1 << 10) == 1.0);
  CHECK(p.total() == 1.0);
}

TEST_CASE("truncation accrues to lost_mass and is monotone") {
  const OffspringLaw triple({0.0, 0.0, 0.0, 1.0});
  PmfVector p = PmfVector::delta(1);
  double prev_lost = 0.0;
  for (int i = 0; i < 6; ++i) {
    p = step_quenched(p, triple, 100);  // 3^5 = 243 > 100 overflows
    CHECK(p.lost_mass >= prev_lost);
    CHECK(p.total() + p.lost_mass == doctest::Approx(1.0).epsilon(1e-12));
    prev_lost = p.lost_mass;
  }
  CHECK(p.lost_mass == 1.0);  // everything beyond the cap by n = 6

  const OffspringLaw half({0.0, 0.5, 0.5});
  PmfVector q = PmfVector::delta(1);
  prev_lost = 0.0;
  for (int i = 0; i < 12; ++i) {
    q = step_quenched(q, half, 64);
    CHECK(q.lost_mass >= prev_lost);
    CHECK(q.total() + q.lost_mass == doctest::Approx(1.0).epsilon(1e-10));
    prev_lost = q.lost_mass;
  }
  CHECK(q.lost_mass > 0.0);
}

TEST_CASE("annealed ENV-A at n = 2") {
  const PmfVector p = annealed_pmf(env_a(), 2);
  CHECK(p.at(4) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(p.at(6) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p.at(9) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(annealed_pmf(env_a(), 0).at(1) == 1.0);
}

TEST_CASE("annealed ENV-A support is {2^j 3^(n-j)} with exact binomial weights") {
  for (int n = 1; n <= 10; ++n) {
    const PmfVector p = annealed_pmf(env_a(), n);
    CHECK(p.lost_mass == 0.0);
    double covered = 0.0;
    for (int j = 0; j <= n; ++j) {
      const long long z = static_cast<long long>(std::llround(
          std::pow(2.0, j) * std::pow(3.0, n - j)));
      const double expected = binom(n, j) / std::pow(2.0, n);
      CHECK(p.at(z) == doctest::Approx(expected).epsilon(1e-12));
      covered += p.at(z);
    }
    CHECK(covered == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("martingale mean identity: E Z_n = (E m0)^n to 1e-9 relative") {
  Philox rng(71, 0);
  RandomEnvOptions opts;
  opts.max_offspring = 4;  // keep the exact support at n = 6 desk-sized
  for (int rep = 0; rep < 6; ++rep) {
    const EnvModel env = rep == 0 ? env_a() : rep == 1 ? env_b() : rep == 2 ? env_c()
                                                                            : random_env(rng, opts);
    double e_m = 0.0;
    for (std::size_t k = 0; k < env.size(); ++k) e_m += env.weight(k) * env.law(k).mean();
    for (int n = 0; n <= 6; ++n) {
      const MomentResult m = exact_moment(annealed_pmf(env, n, 1 << 16, 1e-6), 1.0);
      const double expected = std::pow(e_m, n);
      CHECK(std::abs(m.value - expected) <= 1e-9 * expected + m.error_bound);
    }
  }
}

TEST_CASE("ENV-B E Z_3 = 1.8^3") {
  const MomentResult m = exact_moment(annealed_pmf(env_b(), 3), 1.0);
  CHECK(m.value == doctest::Approx(5.832).epsilon(1e-12));
}

TEST_CASE("enumerate_joint basics and marginalization") {
  const auto entries = enumerate_joint(env_b(), 1);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].weight == 0.5);
  CHECK(entries[1].weight == 0.5);

  // weighted quenched pmfs reproduce the averaged-kernel marginal
  for (int n = 1; n <= 4; ++n) {
    const auto joint = enumerate_joint(env_b(), n);
    const PmfVector marginal = annealed_pmf(env_b(), n);
    std::vector<double> acc(marginal.masses.size(), 0.0);
    for (const auto& e : joint)
      for (std::size_t z = 0; z < e.pmf.masses.size(); ++z) acc[z] += e.weight * e.pmf.masses[z];
    for (std::size_t z = 0; z < acc.size(); ++z)
      CHECK(std::abs(acc[z] - marginal.masses[z]) < 1e-10);
  }

  CHECK_THROWS_AS(enumerate_joint(env_b(), 40), Error);  // 2^40 sequences
}

TEST_CASE("ENV-A trivial W: E W_n^t = 1 for all t") {
  for (double t : {-1.0, -0.5, 0.5, 1.0, 2.0}) {
    CHECK(exact_w_moment(env_a(), 1, t) == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(exact_w_moment(env_a(), 4, t) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("ENV-B E W_1^{-1} hand value") {
  // law 1: 0.3*1.7 + 0.7*(1.7/2) = 1.105; law 2: 0.1*1.9 + 0.9*(1.9/2) = 1.045
  const double expected = 0.5 * 1.105 + 0.5 * 1.045;  // = 1.075
  CHECK(exact_w_moment(env_b(), 1, -1.0) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("joint route reproduces E Z_2 on ENV-B") {
  const auto joint = enumerate_joint(env_b(), 2);
  CompensatedSum s;
  for (const auto& e : joint) s.add(e.weight * exact_moment(e.pmf, 1.0).value);
  CHECK(s.value() == doctest::Approx(3.24).epsilon(1e-12));
}

TEST_CASE("E W_n^{-1} is nondecreasing in n (martingale convexity)") {
  double prev = 0.0;
  for (int n = 1; n <= 5; ++n) {
    const double v = exact_w_moment(env_b(), n, -1.0);
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
}

TEST_CASE("exact_moment values and error bounds") {
  CHECK(exact_moment(PmfVector::delta(4), -0.5).value == doctest::Approx(0.5).epsilon(1e-15));

  const PmfVector p2 = annealed_pmf(env_a(), 2);
  CHECK(exact_moment(p2, 1.0).value == doctest::Approx(6.25).epsilon(1e-13));
  const double inv = 0.25 * 0.25 + 0.5 / 6.0 + 0.25 / 9.0;
  CHECK(exact_moment(p2, -1.0).value == doctest::Approx(inv).epsilon(1e-13));
  const double e_inv_m = 0.5 * (0.5 + 1.0 / 3.0);
  CHECK(exact_moment(p2, -1.0).value == doctest::Approx(e_inv_m * e_inv_m).epsilon(1e-13));

  // error bound: fully truncated doubling law
  PmfVector p = PmfVector::delta(1);
  const OffspringLaw doubling({0.0, 0.0, 1.0});
  for (int i = 0; i < 8; ++i) p = step_quenched(p, doubling, 100);
  CHECK(p.lost_mass == 1.0);
  CHECK(exact_moment(p, 1.0).error_bound == doctest::Approx(100.0));
  CHECK(exact_moment(p, -1.0).error_bound == doctest::Approx(1.0));
}

TEST_CASE("annealed truncation budget is enforced") {
  CHECK_THROWS_AS(annealed_pmf(env_a(), 12, 100, 1e-10), Error);
  try {
    annealed_pmf(env_a(), 12, 100, 1e-10);
  } catch (const Error& e) {
    CHECK(e.code() == errc::truncation_exceeded);
  }
}

TEST_CASE("delta_inf_sq examples") {
  const EnvModel doubling({OffspringLaw({0.0, 0.0, 1.0})}, {1.0});
  const auto zero = delta_inf_sq(doubling, [](int) { return 0; });
  CHECK(zero.value == 0.0);  // W identically 1

  // constant law (p1 = p2 = 1/2): term_k = (1/9)(2/3)^k, sum = 1/3
  const EnvModel half({OffspringLaw({0.0, 0.5, 0.5})}, {1.0});
  const auto third = delta_inf_sq(half, [](int) { return 0; });
  CHECK(third.value == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
  CHECK(third.tail_bound >= 0.0);

  // sampled ENV-B sequence: positive and bounded by (max term) * A1/(A1-1)
  Philox rng(72, 3);
  std::vector<int> seq;
  for (int i = 0; i < 400; ++i) seq.push_back(rng.uniform() < 0.5 ? 0 : 1);
  const EnvModel eb = env_b();
  const auto db = delta_inf_sq(eb, [&](int k) { return seq[static_cast<std::size_t>(k)]; });
  CHECK(db.value > 0.0);
  double max_term = 0.0;
  double inv_pi = 1.0;
  for (int k = 0; k < db.terms; ++k) {
    const auto& law = eb.law(static_cast<std::size_t>(seq[static_cast<std::size_t>(k)]));
    const double m = law.mean();
    max_term = std::max(max_term, inv_pi * (law.second_moment() / (m * m) - 1.0));
    inv_pi /= m;
  }
  CHECK(db.value <= max_term * 1.7 / 0.7 * (1.0 + 1e-12));
}

TEST_CASE("zero-variance entries inside a mixed sequence do not stop the series early") {
  // alternate deterministic doubling with the half law: even-index terms
  // vanish but the odd ones keep contributing
  const EnvModel mix({OffspringLaw({0.0, 0.0, 1.0}), OffspringLaw({0.0, 0.5, 0.5})}, {0.5, 0.5});
  const auto d = delta_inf_sq(mix, [](int k) { return k % 2; });  // det, half, det, ...
  double sum = 0.0, inv_pi = 1.0;
  for (int k = 0; k < 400; ++k) {
    const bool half_law = k % 2 == 1;
    if (half_law) sum += inv_pi * (2.5 / 2.25 - 1.0);
    inv_pi /= half_law ? 1.5 : 2.0;
  }
  CHECK(d.value == doctest::Approx(sum).epsilon(1e-9));
}

TEST_CASE("rational cross-check: double pipeline agrees with exact arithmetic at n <= 3") {
  Philox rng(73, 0);
  for (int rep = 0; rep < 4; ++rep) {
    const EnvModel env = rep == 0 ? env_b() : rep == 1 ? env_c() : random_env(rng);
    for (int n = 1; n <= 3; ++n) {
      const PmfVector dbl = annealed_pmf(env, n);
      const RationalPmf rat = rational_annealed_pmf(env, n);
      for (std::size_t z = 1; z < rat.masses.size(); ++z)
        CHECK(std::abs(dbl.at(static_cast<long long>(z)) -
                       static_cast<double>(rat.masses[z])) < 1e-12);
      for (int t : {-1, 1, 2}) {
        const double exact = static_cast<double>(rational_moment(rat, t));
        CHECK(exact_moment(dbl, t).value == doctest::Approx(exact).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("mass conservation: retained + lost = 1 under random propagation") {
  Philox rng(74, 0);
  RandomEnvOptions opts;
  opts.max_offspring = 5;
  for (int rep = 0; rep < 5; ++rep) {
    const EnvModel env = random_env(rng, opts);
    PmfVector pmf = PmfVector::delta(1);
    for (int gen = 0; gen < 5; ++gen) {
      const std::size_t k = static_cast<std::size_t>(rng.uniform() * env.size());
      pmf = step_quenched(pmf, env.law(k), 200);  // force truncation
      CHECK(pmf.total() + pmf.lost_mass == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}
