#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedbias/matrix.hpp"

namespace fedbias {

// Describes how raw columns map onto the encoded feature matrix.
struct FeatureSchema {
  // Source features in encoding order; the sensitive attribute is one of them.
  std::vector<std::string> feature_names;
  // One name per encoded column ("age", "sex=F", ...).
  std::vector<std::string> column_names;
  // Categorical features and their one-hot level order.
  std::map<std::string, std::vector<std::string>> categorical_levels;
  std::string sensitive_name;
  // Encoded columns of the sensitive one-hot block; column i <-> group id i.
  std::vector<std::size_t> sensitive_columns;
  bool sensitive_is_binary = false;

  std::size_t width() const { return column_names.size(); }
  std::size_t num_groups() const { return sensitive_columns.size(); }
  const std::vector<std::string>& group_names() const {
    return categorical_levels.at(sensitive_name);
  }

  // Throws SchemaError when the invariants do not hold.
  void validate() const;
};

// Features, binary labels and sensitive group ids for a set of examples.
struct Split {
  Matrix x;
  std::vector<int> y;
  std::vector<int> a;

  std::size_t size() const { return y.size(); }
  bool empty() const { return y.empty(); }
  Split subset(const std::vector<std::size_t>& rows) const;
  bool operator==(const Split&) const = default;
};

// Concatenates splits with equal widths, in order.
Split concat(const std::vector<const Split*>& parts);

struct PartyDataset {
  int party_id = 0;
  Split train;
  Split test;
  std::shared_ptr<const FeatureSchema> schema;

  std::size_t n_train() const { return train.size(); }
};

// Declares how a CSV file is parsed.
struct CsvSpec {
  std::string label_column;
  // When set, label = (value == positive_label); otherwise the value must be
  // 0 or 1.
  std::optional<std::string> positive_label;
  std::string sensitive_column;
  std::vector<std::string> sensitive_levels;
  // Input features in encoding order. The sensitive column is appended when
  // it is not listed.
  std::vector<std::string> features;
  std::map<std::string, std::vector<std::string>> categorical;
};

struct LoadedTable {
  Split data;
  FeatureSchema schema;
};

// Parses a CSV with a header row. Categoricals are one-hot encoded in the
// declared level order, numerics standardized with the file's own mean and
// standard deviation.
LoadedTable load_csv(const std::filesystem::path& path, const CsvSpec& spec);

// Recovers a row's group id from its sensitive one-hot block, or -1 when the
// block is not a valid one-hot row.
int group_from_onehot(const FeatureSchema& schema, std::span<const double> row);

struct SyntheticConfig {
  std::size_t num_numeric = 12;
  std::size_t num_parties = 20;
  std::size_t n_train = 1000;
  std::size_t n_test = 2000;
  // Per-party probability that a training label is replaced by 1[a == 0].
  std::vector<double> bias_levels;
  std::uint64_t seed = 0;
  // Share of examples in group 1 (the disfavoured group).
  double group1_fraction = 0.5;
  // Standard deviation of the clean-label logit.
  double signal_scale = 8.0;
  // Intercept of the clean-label logit.
  double intercept = 0.0;

  void validate() const;
};

// Linearly spaced bias levels from `low` to `high` inclusive.
std::vector<double> linear_bias_levels(std::size_t num_parties, double low, double high);

struct SyntheticBenchmark {
  std::vector<PartyDataset> parties;
  std::shared_ptr<const FeatureSchema> schema;
  // Clean-label logit is truth_weights . x_numeric + truth_intercept.
  std::vector<double> truth_weights;
  double truth_intercept = 0.0;
};

// Per-party datasets whose clean labels follow one shared random logistic
// function of the numeric features. Training labels are corrupted towards
// group 0 at each party's bias level; test labels stay clean.
SyntheticBenchmark generate_synthetic(const SyntheticConfig& config);

enum class PartitionMode { kIid, kMinorityRatioSplit, kSingleHolder };

struct PartitionSpec {
  PartitionMode mode = PartitionMode::kIid;
  std::size_t num_parties = 1;
  double minority_ratio = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
};

PartitionMode parse_partition_mode(const std::string& name);
std::string to_string(PartitionMode mode);

// The (group, label) cell with the fewest rows; ties go to the lowest
// (group, label).
std::pair<int, int> minority_cell(const Split& data, std::size_t num_groups);

// Assigns every row of `data` to exactly one party's train split.
std::vector<PartyDataset> partition(const Split& data, const PartitionSpec& spec,
                                    std::shared_ptr<const FeatureSchema> schema);

// Disjoint, exhaustive split; returns (train, test).
std::pair<Split, Split> train_test_split(const Split& data, double test_fraction,
                                         std::uint64_t seed);

// counts[group][label] over a split.
std::vector<std::array<std::size_t, 2>> cell_counts(const Split& data, std::size_t num_groups);

// Per-party sizes and per-(group, label) cell counts.
nlohmann::json dataset_manifest(const std::vector<PartyDataset>& parties);

// One CSV per party: raw feature columns (sensitive as its level name), the
// label, and a `split` column holding `train` or `test`.
void write_party_csv(const std::filesystem::path& path, const PartyDataset& party);

}  // namespace fedbias
