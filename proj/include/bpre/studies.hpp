#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bpre/env_model.hpp"

namespace bpre {

enum class Verdict { pass, fail, inconclusive };

const char* verdict_name(Verdict v);

struct StudyRow {
  std::string key;       // row kind ("log_p", "slope", "ks", "ratio", ...)
  double key_value = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
  double theory_value = 0.0;
  double abs_gap = 0.0;
  bool designated = false;  // participates in the verdict
  std::string note;
};

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct SampleDump {
  std::string name;
  std::vector<double> samples;
};

struct StudyResult {
  std::string study_id;
  std::string env_hash;
  std::uint64_t seed = 0;
  std::vector<StudyRow> rows;
  Verdict verdict = Verdict::inconclusive;
  std::map<std::string, double> tolerances;
  std::map<std::string, double> gates;  // hypothesis gate values backing the run
  double runtime_s = 0.0;
  std::vector<PlotSeries> series;
  std::vector<SampleDump> dumps;
};

using Tolerances = std::map<std::string, double>;

// a_n = n^beta with beta in (1/2, 1), so that a_n/n -> 0 and a_n/sqrt(n) -> inf.
struct MdpSchedule {
  double beta = 0.75;
  double a_n(int n) const;
};

struct LdpParams {
  std::vector<double> x_grid;
  std::vector<int> n_list;
  long long m_samples = 0;
  long long z_cap = 1'000'000'000;
};

struct MdpParams {
  MdpSchedule schedule;
  std::vector<double> x_grid;           // tail levels (x > 0, upper tail)
  std::vector<double> t_grid{-1.0, 1.0};  // moment-ratio exponents
  std::vector<int> n_list;
  long long m_samples = 0;
  int n_oracle = 6;
  long long z_cap = 1'000'000'000;
};

struct CltParams {
  std::vector<int> n_list;
  long long m_samples = 0;
  long long z_cap = 1'000'000'000;
  bool dump_samples = false;
};

struct MomentParams {
  std::vector<double> t_grid;
  std::vector<int> n_list;
  long long m_samples = 0;
  int n_oracle = 6;
  long long z_cap = 1'000'000'000;
};

struct HarmonicParams {
  std::vector<double> a_grid;
  std::vector<int> n_list;
  long long m_samples = 0;
  int n_total_tail = 0;   // 0: derived from E log m0 so that Pi_n >= 1e12
  double fit_cap = 4.0;
  double h_delta = 1e6;   // delta used for the (H) report backing gamma
  long long z_cap = 1'000'000'000;
  bool dump_samples = false;
};

struct BerryEsseenParams {
  double epsilon = 1.0;
  std::vector<int> n_list;
  int horizon = 30;
  long long m_samples = 0;
  long long z_cap = 1ll << 40;
  bool dump_samples = false;
};

StudyResult run_ldp_study(const EnvModel& env, const LdpParams& p, const Tolerances& tol,
                          std::uint64_t seed, std::uint64_t stream_ns, int workers);
StudyResult run_mdp_study(const EnvModel& env, const MdpParams& p, const Tolerances& tol,
                          std::uint64_t seed, std::uint64_t stream_ns, int workers);
StudyResult run_clt_study(const EnvModel& env, const CltParams& p, const Tolerances& tol,
                          std::uint64_t seed, std::uint64_t stream_ns, int workers);
StudyResult run_moment_study(const EnvModel& env, const MomentParams& p, const Tolerances& tol,
                             std::uint64_t seed, std::uint64_t stream_ns, int workers);
StudyResult run_harmonic_study(const EnvModel& env, const HarmonicParams& p, const Tolerances& tol,
                               std::uint64_t seed, std::uint64_t stream_ns, int workers);
StudyResult run_berry_esseen_study(const EnvModel& env, const BerryEsseenParams& p,
                                   const Tolerances& tol, std::uint64_t seed,
                                   std::uint64_t stream_ns, int workers);

}  // namespace bpre
