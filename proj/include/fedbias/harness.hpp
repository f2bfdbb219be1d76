#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedbias/data.hpp"
#include "fedbias/intervention.hpp"
#include "fedbias/metrics.hpp"
#include "fedbias/training.hpp"

namespace fedbias {

struct CsvSource {
  std::filesystem::path path;
  CsvSpec spec;
  // Share of each party's rows held out as its local test split.
  double test_fraction = 0.3;
};

struct DataSource {
  std::optional<SyntheticConfig> synthetic;  // the seed field is ignored
  std::optional<CsvSource> csv;
};

struct AuditOptions {
  GapMetric metric = GapMetric::kDemographicParity;
  std::size_t min_cell = kDefaultMinCell;
  std::size_t stride = 5;
  bool benefits = true;
  bool influence = true;
  bool dynamics = true;
  bool attribution = true;
  std::size_t attribution_steps = 64;
  bool norms = true;
  bool sweeps = true;
  std::vector<double> sweep_factors = {0.1, 0.5, 1.0, 2.0, 10.0};
  bool reweigh = true;
};

struct ExperimentConfig {
  DataSource data;
  PartitionSpec partition;  // csv sources only; num_parties also sizes synthetic runs
  TrainingConfig training;  // the seed field is ignored
  // Extra federated runs next to plain FedAvg.
  std::vector<ReweighScope> reweigh_scopes;
  std::optional<double> fedprox_mu;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  AuditOptions audit;
  std::filesystem::path output = "out";
};

// Parses and validates a config document. Unknown keys and bad values throw
// ConfigError naming the offending field path (e.g. "training.lr").
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

// The fields that determine a run's artifacts (data, partition, training,
// variants), with defaults filled in.
nlohmann::json canonical_run_json(const ExperimentConfig& config);

// Hex SHA-256 of the canonical run JSON; seeds, output and audit options do
// not take part.
std::string config_hash(const ExperimentConfig& config);

std::filesystem::path run_directory(const ExperimentConfig& config, std::uint64_t seed);
std::filesystem::path report_directory(const ExperimentConfig& config);

// Deterministic in (config, seed).
std::vector<PartyDataset> build_parties(const ExperimentConfig& config, std::uint64_t seed);

inline constexpr const char* kCompleteMarker = "COMPLETE";
std::string reweighed_model_name(ReweighScope scope);
inline constexpr const char* kFedProxModel = "fedprox";

struct CommandOptions {
  bool parallel_seeds = false;
};

// Trains every regime for every seed; completed runs are skipped. Returns the
// run directories in seed order.
std::vector<std::filesystem::path> cmd_run(const ExperimentConfig& config,
                                           const CommandOptions& options = {});

// Writes the report bundle for every seed plus summary.json; returns the
// summary path.
std::filesystem::path cmd_audit(const ExperimentConfig& config,
                                const CommandOptions& options = {});

// One CSV per party plus manifest.json, per seed. Returns the directories.
std::vector<std::filesystem::path> cmd_generate(const ExperimentConfig& config);

// Scaling sweeps of the federated model only; returns the written files.
std::vector<std::filesystem::path> cmd_sweep(const ExperimentConfig& config,
                                             const CommandOptions& options = {});

// {mean, stdev, per_seed}; stdev is the sample deviation (0 for one value).
// Undefined per-seed values are kept as null and skipped by the statistics.
nlohmann::json seed_statistics(const std::vector<std::optional<double>>& values);

}  // namespace fedbias
