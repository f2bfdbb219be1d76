#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedbias/errors.hpp"
#include "fedbias/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNotFound = 3;
constexpr int kExitNumeric = 4;

int exit_code(fedbias::ErrorKind kind) {
  using fedbias::ErrorKind;
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kSchema:
    case ErrorKind::kValue:
      return kExitConfig;
    case ErrorKind::kNotFound:
      return kExitNotFound;
    case ErrorKind::kNumeric:
      return kExitNumeric;
    case ErrorKind::kIo:
      return kExitFailure;
  }
  return kExitFailure;
}

struct Args {
  std::string config;
  std::string out;
  std::vector<std::uint64_t> seeds;
  std::size_t stride = 0;
  bool parallel_seeds = false;
};

void add_common(CLI::App* cmd, Args& args) {
  cmd->add_option("--config", args.config, "Experiment config (JSON)")->required();
  cmd->add_option("--out", args.out, "Output directory (overrides the config)");
  cmd->add_option("--seeds", args.seeds, "Comma-separated seeds (overrides the config)")
      ->delimiter(',');
  cmd->add_option("--stride", args.stride, "Influence audit stride (overrides the config)")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--parallel-seeds", args.parallel_seeds, "Run seeds concurrently");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audit how bias propagates through federated learning."};
  app.require_subcommand(1);
  Args args;
  CLI::App* generate = app.add_subcommand("generate", "Write the party datasets as CSV");
  CLI::App* run = app.add_subcommand("run", "Train every regime and persist the traces");
  CLI::App* audit = app.add_subcommand("audit", "Compute the report bundle from a finished run");
  CLI::App* sweep = app.add_subcommand("sweep", "Scaling sweeps of the federated model");
  for (CLI::App* cmd : {generate, run, audit, sweep}) add_common(cmd, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    fedbias::ExperimentConfig config = fedbias::load_config(args.config);
    if (!args.out.empty()) config.output = args.out;
    if (!args.seeds.empty()) config.seeds = args.seeds;
    if (args.stride > 0) config.audit.stride = args.stride;
    fedbias::CommandOptions options;
    options.parallel_seeds = args.parallel_seeds;

    if (generate->parsed()) {
      fedbias::cmd_generate(config);
    } else if (run->parsed()) {
      fedbias::cmd_run(config, options);
    } else if (audit->parsed()) {
      fedbias::cmd_audit(config, options);
    } else if (sweep->parsed()) {
      fedbias::cmd_sweep(config, options);
    }
  } catch (const fedbias::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}
