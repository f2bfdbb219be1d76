#include "fedbias/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "fedbias/errors.hpp"

namespace fedbias {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return static_cast<double>(num) / static_cast<double>(den);
}

// max - min over a set of rates; empty below two entries.
std::optional<double> spread(const std::vector<double>& rates) {
  if (rates.size() < 2) return std::nullopt;
  const auto [lo, hi] = std::minmax_element(rates.begin(), rates.end());
  return *hi - *lo;
}

}  // namespace

GapMetric parse_gap_metric(const std::string& name) {
  if (name == "dp") return GapMetric::kDemographicParity;
  if (name == "eo") return GapMetric::kEqualizedOdds;
  if (name == "acc_gap") return GapMetric::kAccuracyGap;
  throw InvalidArgument("unknown metric '" + name + "' (expected dp, eo or acc_gap)");
}

std::string to_string(GapMetric metric) {
  switch (metric) {
    case GapMetric::kDemographicParity: return "dp";
    case GapMetric::kEqualizedOdds: return "eo";
    case GapMetric::kAccuracyGap: return "acc_gap";
  }
  return "dp";
}

std::size_t GroupStats::total() const {
  std::size_t n = 0;
  for (const auto& g : cells) n += g[0].count + g[1].count;
  return n;
}

std::size_t GroupStats::group_count(std::size_t group) const {
  return cells[group][0].count + cells[group][1].count;
}

std::optional<double> FairnessReport::gap(GapMetric metric) const {
  switch (metric) {
    case GapMetric::kDemographicParity: return dp_gap;
    case GapMetric::kEqualizedOdds: return eo_gap;
    case GapMetric::kAccuracyGap: return acc_gap;
  }
  return std::nullopt;
}

FairnessReport evaluate_predictions(std::span<const int> predictions, std::span<const int> labels,
                                    std::span<const int> groups, std::size_t num_groups,
                                    std::size_t min_cell) {
  const std::size_t n = predictions.size();
  if (n == 0) throw InvalidArgument("cannot evaluate on an empty dataset");
  if (labels.size() != n || groups.size() != n) {
    throw InvalidArgument("predictions, labels and groups differ in length");
  }
  FairnessReport report;
  report.group_stats.cells.assign(num_groups, {});
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int g = groups[i];
    if (g < 0 || static_cast<std::size_t>(g) >= num_groups) {
      throw InvalidArgument("group id " + std::to_string(g) + " out of range");
    }
    const int y = labels[i] != 0 ? 1 : 0;
    const int p = predictions[i] != 0 ? 1 : 0;
    GroupCell& cell = report.group_stats.cells[g][y];
    ++cell.count;
    cell.predicted_positive += p;
    cell.correct += p == y ? 1 : 0;
    correct += p == y ? 1 : 0;
  }
  report.accuracy = ratio(correct, n);

  const auto& cells = report.group_stats.cells;
  std::vector<std::size_t> retained;
  for (std::size_t g = 0; g < num_groups; ++g) {
    const std::size_t count = report.group_stats.group_count(g);
    if (count >= std::max<std::size_t>(min_cell, 1)) {
      retained.push_back(g);
    } else {
      report.skipped_groups.push_back(static_cast<int>(g));
    }
  }
  if (retained.size() < 2) return report;

  std::vector<double> positive_rate;
  std::vector<double> accuracy;
  for (std::size_t g : retained) {
    const std::size_t count = report.group_stats.group_count(g);
    positive_rate.push_back(
        ratio(cells[g][0].predicted_positive + cells[g][1].predicted_positive, count));
    accuracy.push_back(ratio(cells[g][0].correct + cells[g][1].correct, count));
  }
  report.dp_gap = spread(positive_rate);
  report.acc_gap = spread(accuracy);

  for (int y = 0; y < 2; ++y) {
    std::vector<double> conditional;
    for (std::size_t g : retained) {
      const GroupCell& cell = cells[g][y];
      if (cell.count >= std::max<std::size_t>(min_cell, 1)) {
        conditional.push_back(ratio(cell.predicted_positive, cell.count));
      }
    }
    if (auto gap = spread(conditional)) {
      report.eo_gap = report.eo_gap ? std::max(*report.eo_gap, *gap) : *gap;
    }
  }
  return report;
}

FairnessReport evaluate(const MlpModel& model, const Split& data, std::size_t num_groups,
                        std::size_t min_cell) {
  std::vector<int> predictions(data.size());
  ScoreWorkspace ws(model);
  for (std::size_t r = 0; r < data.size(); ++r) {
    // sigmoid(z) >= 0.5 exactly when z >= 0.
    predictions[r] = ws.score(data.x.row(r)) >= 0.0 ? 1 : 0;
  }
  return evaluate_predictions(predictions, data.y, data.a, num_groups, min_cell);
}

std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("pearson inputs differ in length");
  if (xs.size() < 3) throw InvalidArgument("pearson needs at least 3 points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

nlohmann::json to_json(const FairnessReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t g = 0; g < report.group_stats.cells.size(); ++g) {
    for (int y = 0; y < 2; ++y) {
      const auto& c = report.group_stats.cells[g][y];
      cells.push_back({{"group", g},
                       {"label", y},
                       {"count", c.count},
                       {"predicted_positive", c.predicted_positive},
                       {"correct", c.correct}});
    }
  }
  return {{"accuracy", report.accuracy},
          {"dp_gap", optional_json(report.dp_gap)},
          {"eo_gap", optional_json(report.eo_gap)},
          {"acc_gap", optional_json(report.acc_gap)},
          {"skipped_groups", report.skipped_groups},
          {"group_stats", std::move(cells)}};
}

}  // namespace fedbias
