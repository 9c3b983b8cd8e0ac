#include "bpre/exact_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bpre/errors.hpp"
#include "bpre/numeric.hpp"
#include "bpre/par.hpp"

namespace bpre {

PmfVector PmfVector::delta(long long z) {
  PmfVector p;
  p.masses.assign(static_cast<std::size_t>(z) + 1, 0.0);
  p.masses[static_cast<std::size_t>(z)] = 1.0;
  return p;
}

double PmfVector::total() const { return compensated_total(masses); }

int PmfVector::max_support() const {
  for (std::size_t z = masses.size(); z-- > 0;)
    if (masses[z] > 0.0) return static_cast<int>(z);
  return 0;
}

namespace {

// result = a (*) law, truncated at z_max. Returns the mass pushed past z_max.
double convolve_law(const std::vector<double>& a, const OffspringLaw& law, int z_max,
                    std::vector<double>& out) {
  const auto& lp = law.probs();
  const int out_len = std::min<long long>(static_cast<long long>(a.size()) - 1 +
                                              static_cast<long long>(lp.size()) - 1,
                                          z_max) +
                      1;
  out.assign(static_cast<std::size_t>(out_len), 0.0);
  double lost = 0.0;
  for (std::size_t za = 0; za < a.size(); ++za) {
    const double pa = a[za];
    if (pa == 0.0) continue;
    for (std::size_t j = 1; j < lp.size(); ++j) {
      if (lp[j] == 0.0) continue;
      const long long z = static_cast<long long>(za) + static_cast<long long>(j);
      if (z <= z_max)
        out[static_cast<std::size_t>(z)] += pa * lp[j];
      else
        lost += pa * lp[j];
    }
  }
  return lost;
}

}  // namespace

PmfVector step_quenched(const PmfVector& pmf, const OffspringLaw& law, int z_max) {
  PmfVector result;
  result.lost_mass = pmf.lost_mass;
  result.z_trunc = pmf.z_trunc;
  const int zsup = pmf.max_support();
  if (zsup == 0) {
    result.masses.assign(1, 0.0);
    return result;
  }

  if (law.deterministic()) {
    const long long j = law.min_support();
    const long long top = std::min<long long>(static_cast<long long>(zsup) * j, z_max);
    result.masses.assign(static_cast<std::size_t>(top) + 1, 0.0);
    for (long long z = 1; z <= zsup; ++z) {
      const double pz = pmf.at(z);
      if (pz == 0.0) continue;
      const long long dst = z * j;
      if (dst <= z_max)
        result.masses[static_cast<std::size_t>(dst)] += pz;
      else
        result.lost_mass += pz;
    }
    if (result.lost_mass > 0.0) result.z_trunc = z_max;
    return result;
  }

  const long long top =
      std::min<long long>(static_cast<long long>(zsup) * law.max_support(), z_max);
  result.masses.assign(static_cast<std::size_t>(top) + 1, 0.0);

  // power = law^{*z}, advanced one convolution per z; power_lost tracks the
  // mass of law^{*z} already truncated (it can only move further up).
  std::vector<double> power(law.probs());
  std::vector<double> scratch;
  double power_lost = 0.0;
  for (long long z = 1; z <= zsup; ++z) {
    if (z > 1) {
      power_lost += convolve_law(power, law, z_max, scratch);
      power.swap(scratch);
    }
    const double pz = pmf.at(z);
    if (pz == 0.0) continue;
    for (std::size_t y = 0; y < power.size(); ++y)
      if (power[y] != 0.0) result.masses[y] += pz * power[y];
    result.lost_mass += pz * power_lost;
  }
  if (result.lost_mass > 0.0) result.z_trunc = z_max;
  return result;
}

PmfVector annealed_pmf(const EnvModel& env, int n, int z_max, double trunc_budget) {
  if (n < 0) throw Error(errc::precondition_violated, "n must be >= 0");
  PmfVector pmf = PmfVector::delta(1);
  for (int gen = 0; gen < n; ++gen) {
    PmfVector next;
    next.masses.assign(1, 0.0);
    next.lost_mass = 0.0;
    for (std::size_t k = 0; k < env.size(); ++k) {
      const PmfVector part = step_quenched(pmf, env.law(k), z_max);
      if (part.masses.size() > next.masses.size()) next.masses.resize(part.masses.size(), 0.0);
      const double w = env.weight(k);
      for (std::size_t z = 0; z < part.masses.size(); ++z)
        if (part.masses[z] != 0.0) next.masses[z] += w * part.masses[z];
      next.lost_mass += w * part.lost_mass;
      next.z_trunc = std::max(next.z_trunc, part.z_trunc);
    }
    pmf = std::move(next);
    if (pmf.lost_mass > trunc_budget)
      throw Error(errc::truncation_exceeded,
                  "lost mass " + std::to_string(pmf.lost_mass) + " exceeds budget at generation " +
                      std::to_string(gen + 1));
  }
  return pmf;
}

std::vector<JointEntry> enumerate_joint(const EnvModel& env, int n, int z_max, long long cap,
                                        int workers) {
  if (n < 0) throw Error(errc::precondition_violated, "n must be >= 0");
  const long long k = static_cast<long long>(env.size());
  long long count = 1;
  for (int i = 0; i < n; ++i) {
    count *= k;
    if (count > cap)
      throw Error(errc::enumeration_too_large,
                  std::to_string(k) + "^" + std::to_string(n) + " sequences exceed cap " +
                      std::to_string(cap));
  }
  std::vector<JointEntry> entries(static_cast<std::size_t>(count));
  par::parallel_for(count, workers, [&](std::int64_t seq) {
    JointEntry& e = entries[static_cast<std::size_t>(seq)];
    e.env_indices.resize(static_cast<std::size_t>(n));
    long long rem = seq;
    for (int i = 0; i < n; ++i) {  // base-k digits, most recent generation last
      e.env_indices[static_cast<std::size_t>(i)] = static_cast<int>(rem % k);
      rem /= k;
    }
    e.weight = 1.0;
    CompensatedSum lp;
    PmfVector pmf = PmfVector::delta(1);
    for (int i = 0; i < n; ++i) {
      const int idx = e.env_indices[static_cast<std::size_t>(i)];
      e.weight *= env.weight(static_cast<std::size_t>(idx));
      lp.add(std::log(env.law(static_cast<std::size_t>(idx)).mean()));
      pmf = step_quenched(pmf, env.law(static_cast<std::size_t>(idx)), z_max);
    }
    e.log_pi = lp.value();
    e.pmf = std::move(pmf);
  });
  return entries;
}

MomentResult exact_moment(const PmfVector& pmf, double t) {
  MomentResult r;
  CompensatedSum s;
  for (std::size_t z = 1; z < pmf.masses.size(); ++z)
    if (pmf.masses[z] > 0.0) s.add(std::pow(static_cast<double>(z), t) * pmf.masses[z]);
  r.value = s.value();
  if (t > 0.0) {
    // lost mass sits just above the truncation bound
    const double z_cut = static_cast<double>(pmf.z_trunc > 0 ? pmf.z_trunc : 1);
    r.error_bound = pmf.lost_mass == 0.0 ? 0.0 : pmf.lost_mass * std::pow(z_cut, t);
  } else {
    r.error_bound = pmf.lost_mass;  // z >= 1 makes z^t <= 1
  }
  return r;
}

double exact_w_moment(const EnvModel& env, int n, double t, int z_max, long long cap,
                      int workers) {
  const auto entries = enumerate_joint(env, n, z_max, cap, workers);
  std::vector<double> contrib(entries.size());
  par::parallel_for(static_cast<std::int64_t>(entries.size()), workers, [&](std::int64_t i) {
    const JointEntry& e = entries[static_cast<std::size_t>(i)];
    const double pi_n = std::exp(e.log_pi);
    CompensatedSum s;
    for (std::size_t z = 1; z < e.pmf.masses.size(); ++z)
      if (e.pmf.masses[z] > 0.0)
        s.add(e.pmf.masses[z] * std::pow(static_cast<double>(z) / pi_n, t));
    contrib[static_cast<std::size_t>(i)] = e.weight * s.value();
  });
  return compensated_total(contrib);
}

DeltaInfSq delta_inf_sq(const EnvModel& env, const std::function<int(int)>& law_index_at,
                        double tol, int k_max) {
  const double a1 = env.min_mean();
  double worst_excess = 0.0;
  for (const auto& law : env.laws()) {
    const double m = law.mean();
    worst_excess = std::max(worst_excess, law.second_moment() / (m * m) - 1.0);
  }

  DeltaInfSq out;
  CompensatedSum sum;
  double inv_pi = 1.0;
  double term = 0.0;
  double first_term = -1.0;
  for (int k = 0; k < k_max; ++k) {
    const int idx = law_index_at(k);
    const OffspringLaw& law = env.law(static_cast<std::size_t>(idx));
    const double m = law.mean();
    const double excess = law.second_moment() / (m * m) - 1.0;
    if (excess < 0.0 || m <= 0.0)
      throw Error(errc::divergent_series, "law " + std::to_string(idx) + " is not usable");
    term = inv_pi * excess;
    sum.add(term);
    out.terms = k + 1;
    if (first_term < 0.0 && term > 0.0) first_term = term;
    inv_pi /= m;
    // worst-case bound on everything past this term
    const double tail = a1 > 1.0 ? inv_pi * worst_excess * a1 / (a1 - 1.0)
                                 : std::numeric_limits<double>::infinity();
    if (tail <= tol * std::max(sum.value(), tol)) {
      out.value = sum.value();
      out.tail_bound = term * (a1 > 1.0 ? a1 / (a1 - 1.0) : 0.0);
      return out;
    }
  }
  if (first_term > 0.0 && term >= first_term)
    throw Error(errc::divergent_series,
                "terms failed to decrease after " + std::to_string(k_max) + " terms");
  out.value = sum.value();
  out.tail_bound = term * (a1 > 1.0 ? a1 / (a1 - 1.0) : term);
  return out;
}

}  // namespace bpre
