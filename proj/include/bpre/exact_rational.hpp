#pragma once

// Arbitrary-precision mirror of the distribution propagation, used to
// cross-check the floating-point engine at small n. Double masses convert to
// rationals exactly, so any disagreement is rounding in the double pipeline.

#include <boost/multiprecision/cpp_int.hpp>
#include <vector>

#include "bpre/env_model.hpp"
#include "bpre/errors.hpp"

namespace bpre {

using Rational = boost::multiprecision::cpp_rational;

struct RationalPmf {
  std::vector<Rational> masses;  // index = population size
};

inline RationalPmf rational_delta_one() {
  RationalPmf p;
  p.masses.assign(2, Rational(0));
  p.masses[1] = 1;
  return p;
}

inline std::vector<Rational> rational_law(const OffspringLaw& law) {
  std::vector<Rational> r(law.probs().size());
  for (std::size_t j = 0; j < r.size(); ++j) r[j] = Rational(law.probs()[j]);
  return r;
}

inline RationalPmf rational_step(const RationalPmf& pmf, const OffspringLaw& law) {
  const auto lp = rational_law(law);
  const std::size_t zsup = pmf.masses.size() - 1;
  RationalPmf result;
  result.masses.assign(zsup * (lp.size() - 1) + 1, Rational(0));
  std::vector<Rational> power = lp;
  for (std::size_t z = 1; z <= zsup; ++z) {
    if (z > 1) {
      std::vector<Rational> next(power.size() + lp.size() - 1, Rational(0));
      for (std::size_t a = 0; a < power.size(); ++a) {
        if (power[a] == 0) continue;
        for (std::size_t j = 1; j < lp.size(); ++j)
          if (lp[j] != 0) next[a + j] += power[a] * lp[j];
      }
      power.swap(next);
    }
    if (pmf.masses[z] == 0) continue;
    for (std::size_t y = 0; y < power.size(); ++y)
      if (power[y] != 0) result.masses[y] += pmf.masses[z] * power[y];
  }
  return result;
}

inline RationalPmf rational_annealed_pmf(const EnvModel& env, int n) {
  if (n > 3) throw Error(errc::precondition_violated, "rational mode is for n <= 3 cross-checks");
  RationalPmf pmf = rational_delta_one();
  std::vector<Rational> w(env.size());
  for (std::size_t k = 0; k < env.size(); ++k) w[k] = Rational(env.weight(k));
  for (int gen = 0; gen < n; ++gen) {
    RationalPmf next;
    next.masses.assign(1, Rational(0));
    for (std::size_t k = 0; k < env.size(); ++k) {
      RationalPmf part = rational_step(pmf, env.law(k));
      if (part.masses.size() > next.masses.size()) next.masses.resize(part.masses.size(), Rational(0));
      for (std::size_t z = 0; z < part.masses.size(); ++z)
        if (part.masses[z] != 0) next.masses[z] += w[k] * part.masses[z];
    }
    pmf = std::move(next);
  }
  return pmf;
}

// sum_z z^t masses[z] for integer t (negative allowed).
inline Rational rational_moment(const RationalPmf& pmf, int t) {
  Rational s(0);
  for (std::size_t z = 1; z < pmf.masses.size(); ++z) {
    if (pmf.masses[z] == 0) continue;
    Rational zt(1);
    const Rational zr(z);
    for (int i = 0; i < std::abs(t); ++i) zt *= zr;
    if (t >= 0)
      s += pmf.masses[z] * zt;
    else
      s += pmf.masses[z] / zt;
  }
  return s;
}

}  // namespace bpre
