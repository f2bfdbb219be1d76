#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedbias/data.hpp"
#include "fedbias/nn.hpp"

namespace fedbias {

// Which gap an analysis is run on.
enum class GapMetric { kDemographicParity, kEqualizedOdds, kAccuracyGap };

GapMetric parse_gap_metric(const std::string& name);  // "dp" | "eo" | "acc_gap"
std::string to_string(GapMetric metric);

inline constexpr std::size_t kDefaultMinCell = 5;

struct GroupCell {
  std::size_t count = 0;
  std::size_t predicted_positive = 0;
  std::size_t correct = 0;
};

// cells[group][label].
struct GroupStats {
  std::vector<std::array<GroupCell, 2>> cells;

  std::size_t total() const;
  std::size_t group_count(std::size_t group) const;
};

struct FairnessReport {
  double accuracy = 0.0;
  // Empty when fewer than two groups (or cells) have enough support.
  std::optional<double> dp_gap;
  std::optional<double> eo_gap;
  std::optional<double> acc_gap;
  GroupStats group_stats;
  std::vector<int> skipped_groups;

  std::optional<double> gap(GapMetric metric) const;
};

// Gaps from hard predictions. A group with fewer than `min_cell` rows is
// skipped everywhere; for the equalized-odds gap an individual (group, label)
// cell below `min_cell` is also left out.
FairnessReport evaluate_predictions(std::span<const int> predictions, std::span<const int> labels,
                                    std::span<const int> groups, std::size_t num_groups,
                                    std::size_t min_cell = kDefaultMinCell);

// Thresholds model probabilities at 0.5.
FairnessReport evaluate(const MlpModel& model, const Split& data, std::size_t num_groups,
                        std::size_t min_cell = kDefaultMinCell);

// Empty when either side has zero variance.
std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys);

nlohmann::json to_json(const FairnessReport& report);

// std::nullopt serializes as null.
inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace fedbias
