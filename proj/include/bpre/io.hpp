#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpre/env_model.hpp"
#include "bpre/studies.hpp"

namespace bpre {

struct StudySpec {
  std::string study_id;
  nlohmann::json params;
};

struct RateGridSpec {
  double t_min = -5.0;
  double t_max = 5.0;
  int t_count = 101;
  int x_count = 51;
};

struct ExactSpec {
  int n = 4;
  int z_max = 1 << 16;
  std::vector<double> t_grid{-1.0, -0.5, 0.5, 1.0, 2.0};
};

struct ExperimentConfig {
  EnvModel env;
  std::vector<StudySpec> studies;
  std::uint64_t seed = 0;
  int workers = 1;
  std::optional<std::string> output_dir;
  std::map<std::string, Tolerances> tolerances;
  RateGridSpec rate;
  ExactSpec exact;
};

// Strict parse: unknown keys are rejected with the JSON-pointer path of the
// offending node; the seed is mandatory (no wall-clock default).
ExperimentConfig parse_config(const std::string& bytes);
ExperimentConfig load_config_file(const std::string& path);

// Parses a study's params and runs it. stream_ns must be distinct per study.
StudyResult dispatch_study(const EnvModel& env, const StudySpec& spec,
                           const Tolerances& tolerance_overrides, std::uint64_t seed,
                           std::uint64_t stream_ns, int workers);

// Full experiment run: per-study JSON + CSV + plot data under out_dir,
// summary.json written last via atomic rename. Exit code 0 when every study
// passes, 2 when some are inconclusive and none fail, 1 otherwise.
int run_experiment(const ExperimentConfig& config, const std::string& out_dir,
                   std::optional<std::uint64_t> seed_override, std::optional<int> workers_override,
                   std::ostream& log);

// Subcommand bodies (shared between the CLI binary and the tests).
int cmd_validate(const ExperimentConfig& config, double delta, std::ostream& out);
int cmd_rate(const ExperimentConfig& config, const std::string& out_dir);
int cmd_exact(const ExperimentConfig& config, const std::string& out_dir);

// 17-significant-digit decimal rendering used for all CSV/TSV output.
std::string fmt17(double v);

nlohmann::json study_result_to_json(const StudyResult& r);
std::string rows_to_csv(const StudyResult& r);
void write_study_outputs(const StudyResult& r, const std::string& study_dir);
nlohmann::json hypothesis_report_to_json(const HypothesisHReport& h);

}  // namespace bpre
