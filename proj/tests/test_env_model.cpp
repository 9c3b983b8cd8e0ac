#include <doctest.h>

#include <cmath>

#include "bpre/env_model.hpp"
#include "bpre/errors.hpp"
#include "bpre/exact_engine.hpp"
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

}  // namespace

TEST_CASE("offspring law construction and moments") {
  const OffspringLaw doubling({0.0, 0.0, 1.0});
  CHECK(doubling.mean() == 2.0);
  CHECK(doubling.moment(1.0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(doubling.deterministic());

  const OffspringLaw mixed({0.0, 0.3, 0.7});
  CHECK(mixed.mean() == doctest::Approx(1.7).epsilon(1e-15));
  CHECK(mixed.moment(2.0) == doctest::Approx(0.3 + 0.7 * 4.0).epsilon(1e-15));

  const OffspringLaw half({0.0, 0.0, 0.5, 0.5});
  CHECK(half.moment(1.0) == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("offspring law rejections") {
  CHECK_THROWS_AS(OffspringLaw({0.1, 0.0, 0.9}), Error);  // NonZeroP0
  try {
    OffspringLaw({0.1, 0.0, 0.9});
  } catch (const Error& e) {
    CHECK(e.code() == errc::non_zero_p0);
  }
  CHECK_THROWS_AS(OffspringLaw({0.0, 0.5, 0.4}), Error);   // NotNormalized
  CHECK_THROWS_AS(OffspringLaw({0.0, -0.1, 1.1}), Error);  // NegativeMass
  CHECK_THROWS_AS(OffspringLaw(std::vector<double>(70, 0.0)), Error);  // SupportTooLarge
  // renormalization inside the 1e-12 window
  const OffspringLaw ok({0.0, 0.5, 0.5 + 4e-13});
  CHECK(compensated_total(ok.probs()) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("env model weight validation") {
  CHECK_THROWS_AS(EnvModel({OffspringLaw({0.0, 0.0, 1.0})}, {0.8}), Error);
  CHECK_THROWS_AS(EnvModel({OffspringLaw({0.0, 0.0, 1.0}), OffspringLaw({0.0, 1.0})}, {1.0, 0.0}),
                  Error);
  CHECK_THROWS_AS(EnvModel({OffspringLaw({0.0, 0.0, 1.0})}, {0.5, 0.5}), Error);
}

TEST_CASE("env summary on ENV-A") {
  const EnvSummary s = env_summary(env_a());
  CHECK(s.e_log_m == doctest::Approx(0.5 * (std::log(2.0) + std::log(3.0))).epsilon(1e-15));
  const double half_gap = 0.5 * (std::log(3.0) - std::log(2.0));
  CHECK(s.sigma2 == doctest::Approx(half_gap * half_gap).epsilon(1e-12));
  CHECK(s.e_p1 == 0.0);
}

TEST_CASE("single-law env has zero variance") {
  const EnvModel env({OffspringLaw({0.0, 0.0, 1.0})}, {1.0});
  CHECK(env_summary(env).sigma2 == doctest::Approx(0.0));
}

TEST_CASE("env_summary flags the non-supercritical case") {
  const EnvModel stuck({OffspringLaw({0.0, 1.0})}, {1.0});  // m = 1, E log m = 0
  CHECK_THROWS_AS(env_summary(stuck), Error);
  try {
    env_summary(stuck);
  } catch (const Error& e) {
    CHECK(e.code() == errc::not_supercritical);
  }
}

TEST_CASE("hypothesis (H) report on ENV-B") {
  const HypothesisHReport h = check_hypothesis_h(env_b(), 1.0);
  CHECK(h.holds);
  CHECK(h.A1 == doctest::Approx(1.7).epsilon(1e-15));
  CHECK(h.p1_sup == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(h.underline_m == 1);
  CHECK_FALSE(h.p1_zero);
  CHECK_FALSE(h.gamma.has_value());
  CHECK(h.e_p1 == doctest::Approx(0.2).epsilon(1e-15));
  // delta = 1: A = max_k sqrt(m_k(2))
  CHECK(h.A == doctest::Approx(std::sqrt(3.7)).epsilon(1e-12));
}

TEST_CASE("hypothesis (H) report on ENV-C tends to the support bound for large delta") {
  const HypothesisHReport h = check_hypothesis_h(env_c(), 1e6);
  CHECK(h.p1_zero);
  CHECK(h.underline_m == 2);
  CHECK(h.A == doctest::Approx(3.0).epsilon(1e-4));
  REQUIRE(h.gamma.has_value());
  CHECK(*h.gamma == doctest::Approx(std::log(2.0) / std::log(3.0)).epsilon(1e-4));
  CHECK(*h.gamma > 0.0);
  CHECK(*h.gamma < 1.0);
}

TEST_CASE("(H) fails only when some law mean reaches 1") {
  const EnvModel env({OffspringLaw({0.0, 1.0}), OffspringLaw({0.0, 0.0, 1.0})}, {0.5, 0.5});
  const HypothesisHReport h = check_hypothesis_h(env, 1.0);
  CHECK(h.A1 == doctest::Approx(1.0));
  CHECK_FALSE(h.holds);  // A1 > 1 fails; report still computed
  CHECK(h.underline_m == 1);
}

// Power means increase with their order, so the tightest admissible A grows
// with delta and tends to the offspring-support bound.
TEST_CASE("A(delta) is nondecreasing in delta and capped by the support bound") {
  Philox rng(31, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const EnvModel env = random_env(rng);
    int cap = 0;
    for (const auto& law : env.laws()) cap = std::max(cap, law.max_support());
    double prev = 0.0;
    for (double delta : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 64.0}) {
      const double a = check_hypothesis_h(env, delta).A;
      CHECK(a >= prev * (1.0 - 1e-12));
      CHECK(a <= static_cast<double>(cap) * (1.0 + 1e-12));
      prev = a;
    }
  }
}

TEST_CASE("moment(law, p) is nondecreasing in p when support starts at 1 or above") {
  Philox rng(32, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const EnvModel env = random_env(rng);
    for (const auto& law : env.laws()) {
      double prev = 0.0;
      for (double p : {0.5, 1.0, 1.5, 2.0, 3.0}) {
        const double m = law.moment(p);
        CHECK(m >= prev - 1e-12);
        prev = m;
      }
    }
  }
}

TEST_CASE("underline_m >= 2 iff p1 is zero everywhere") {
  Philox rng(33, 0);
  for (int rep = 0; rep < 30; ++rep) {
    RandomEnvOptions opts;
    opts.p1_max = rep % 2 == 0 ? 0.0 : 0.5;
    const EnvModel env = random_env(rng, opts);
    const HypothesisHReport h = check_hypothesis_h(env, 1.0);
    CHECK((h.underline_m >= 2) == h.p1_zero);
  }
}

TEST_CASE("law mean equals the generating-function derivative at 1 from the exact engine") {
  Philox rng(34, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const EnvModel env = random_env(rng);
    for (const auto& law : env.laws()) {
      // one propagation step from delta_1 reproduces the law itself; the PGF
      // derivative at 1 is then its first moment
      const PmfVector pmf = step_quenched(PmfVector::delta(1), law, 1 << 16);
      CHECK(std::abs(law.moment(1.0) - exact_moment(pmf, 1.0).value) <= 1e-12);
    }
  }
}

TEST_CASE("env hash is stable and content-sensitive") {
  CHECK(env_hash(env_a()) == env_hash(env_a()));
  CHECK(env_hash(env_a()) != env_hash(env_b()));
  CHECK(env_hash_hex(env_a()).size() == 16);
}
