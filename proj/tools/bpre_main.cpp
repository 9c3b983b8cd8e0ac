#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bpre/errors.hpp"
#include "bpre/io.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> workers_override;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool out_required) {
  cmd->add_option("--config", args.config_path, "experiment config (JSON)")->required();
  auto* out = cmd->add_option("--out", args.out_dir, "output directory");
  if (out_required) out->required();
  cmd->add_option_function<std::uint64_t>(
      "--seed-override", [&args](std::uint64_t s) { args.seed_override = s; },
      "replace the config seed");
  cmd->add_option_function<int>(
      "--workers", [&args](int w) { args.workers_override = w; },
      "worker count (0 = all available)");
}

std::string resolve_out(const bpre::ExperimentConfig& cfg, const CommonArgs& args) {
  if (!args.out_dir.empty()) return args.out_dir;
  if (cfg.output_dir) return *cfg.output_dir;
  throw bpre::Error(bpre::errc::io_error, "no output directory: pass --out or set output_dir");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deviation studies for branching processes in i.i.d. random environments"};
  app.require_subcommand(1);

  CommonArgs validate_args, rate_args, exact_args, study_args;
  double delta = 1.0;

  auto* validate = app.add_subcommand("validate", "check a config and report hypothesis (H)");
  add_common(validate, validate_args, /*out_required=*/false);
  validate->add_option("--delta", delta, "delta used for the (H) constants (default 1)");

  auto* rate = app.add_subcommand("rate", "dump Lambda / Lambda* grids as CSV");
  add_common(rate, rate_args, /*out_required=*/false);

  auto* exact = app.add_subcommand("exact", "dump exact small-n distributions and moments");
  add_common(exact, exact_args, /*out_required=*/false);

  auto* study = app.add_subcommand("study", "run the configured studies");
  add_common(study, study_args, /*out_required=*/false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      const auto cfg = bpre::load_config_file(validate_args.config_path);
      return bpre::cmd_validate(cfg, delta, std::cout);
    }
    if (rate->parsed()) {
      const auto cfg = bpre::load_config_file(rate_args.config_path);
      return bpre::cmd_rate(cfg, resolve_out(cfg, rate_args));
    }
    if (exact->parsed()) {
      const auto cfg = bpre::load_config_file(exact_args.config_path);
      return bpre::cmd_exact(cfg, resolve_out(cfg, exact_args));
    }
    const auto cfg = bpre::load_config_file(study_args.config_path);
    return bpre::run_experiment(cfg, resolve_out(cfg, study_args), study_args.seed_override,
                                study_args.workers_override, std::cout);
  } catch (const bpre::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
