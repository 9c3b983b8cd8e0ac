#pragma once

#include <functional>
#include <vector>

#include "bpre/env_model.hpp"

namespace bpre {

// Truncated exact distribution of a population size. masses[z] is P(Z = z);
// mass that would land above the truncation bound is accounted in lost_mass,
// which is nondecreasing under propagation.
struct PmfVector {
  std::vector<double> masses;  // index = population size; masses[0] == 0
  double lost_mass = 0.0;
  int z_trunc = 0;  // truncation bound in effect when mass was lost (0: none)

  static PmfVector delta(long long z);
  double total() const;                 // sum of retained masses
  int max_support() const;              // largest z with positive mass (0 if none)
  double at(long long z) const {
    return (z >= 0 && z < static_cast<long long>(masses.size()))
               ? masses[static_cast<std::size_t>(z)]
               : 0.0;
  }
};

inline constexpr int kDefaultZMax = 1 << 16;
inline constexpr double kDefaultTruncBudget = 1e-10;
inline constexpr long long kDefaultEnumerationCap = 100000;

// One generation under a fixed offspring law: mass at z spreads to the z-fold
// convolution of the law. Convolution powers are built incrementally
// (law^{*z} = law^{*(z-1)} (*) law); deterministic laws take the O(support)
// shortcut law^{*z} = delta_{jz}.
PmfVector step_quenched(const PmfVector& pmf, const OffspringLaw& law, int z_max);

// Exact annealed law of Z_n via the averaged one-step kernel (valid because
// the environment entry of each generation is independent of the past).
// Throws TruncationExceeded when lost_mass exceeds the budget.
PmfVector annealed_pmf(const EnvModel& env, int n, int z_max = kDefaultZMax,
                       double trunc_budget = kDefaultTruncBudget);

struct JointEntry {
  std::vector<int> env_indices;
  double weight = 0.0;   // environment-sequence probability
  double log_pi = 0.0;   // log of the quenched mean of Z_n
  PmfVector pmf;         // quenched law of Z_n given the sequence
};

// Every environment sequence of length n with its quenched population law.
// Joint environment/population quantities must go through this enumeration;
// the averaged kernel above is only valid for annealed marginals.
std::vector<JointEntry> enumerate_joint(const EnvModel& env, int n, int z_max = kDefaultZMax,
                                        long long cap = kDefaultEnumerationCap, int workers = 1);

struct MomentResult {
  double value = 0.0;
  double error_bound = 0.0;  // from the truncated mass
};

// sum_z z^t masses[z]; error bound lost_mass * z_max^t for t > 0, lost_mass
// for t <= 0 (supports start at z = 1).
MomentResult exact_moment(const PmfVector& pmf, double t);

// Exact E W_n^t = E (Z_n / Pi_n)^t by environment-sequence enumeration.
double exact_w_moment(const EnvModel& env, int n, double t, int z_max = kDefaultZMax,
                      long long cap = kDefaultEnumerationCap, int workers = 1);

struct DeltaInfSq {
  double value = 0.0;
  double tail_bound = 0.0;
  int terms = 0;
};

// Quenched variance series of W along an environment sequence:
// sum_k (1/Pi_k)(m_k(2)/m_k^2 - 1). law_index_at(k) supplies the k-th entry
// and may extend the sequence lazily. Terms are accumulated until the
// geometric tail bound drops below tol * current value (the bound uses the
// env-wide worst-case variance ratio, so zero terms cannot stop the series
// early); reported tail bound follows term_k * A1 / (A1 - 1).
DeltaInfSq delta_inf_sq(const EnvModel& env, const std::function<int(int)>& law_index_at,
                        double tol = 1e-12, int k_max = 400);

}  // namespace bpre
