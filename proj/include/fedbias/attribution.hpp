#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedbias/data.hpp"
#include "fedbias/kernels.hpp"
#include "fedbias/nn.hpp"

namespace fedbias {

inline constexpr std::size_t kDefaultIgSteps = 64;

enum class BaselineMode { kDatasetMean, kOppositeOneHot };

// Per-column baseline rule plus the reference statistics it needs.
struct BaselineSpec {
  std::vector<BaselineMode> modes;
  std::vector<double> column_means;
  std::vector<std::size_t> sensitive_columns;
};

// Column means come from `reference` (normally the party's test split). A
// binary sensitive attribute uses the flipped one-hot pair, every other
// column its mean.
BaselineSpec make_baseline_spec(const FeatureSchema& schema, const Matrix& reference);

// Baseline for one example. Throws InvalidArgument when the example's
// sensitive one-hot block names no valid group and the flip rule applies.
std::vector<double> build_baseline(const BaselineSpec& spec, std::span<const double> x);

// Midpoint Riemann approximation of the path integral from `baseline` to `x`:
// a_i = (x_i - b_i) * (1/m) * sum_{s=1..m} df/dx_i(b + (s - 0.5)/m * (x - b)).
std::vector<double> integrated_gradients(const MlpModel& model, std::span<const double> x,
                                         std::span<const double> baseline,
                                         std::size_t steps = kDefaultIgSteps,
                                         OutputTarget target = OutputTarget::kLogit);

// f(x) - f(baseline) for the chosen output.
double output_difference(const MlpModel& model, std::span<const double> x,
                         std::span<const double> baseline, OutputTarget target);

struct ExampleAttribution {
  std::vector<double> attributions;
  double completeness_residual = 0.0;  // sum(a) - (f(x) - f(x'))
};

// Attributions for every row, each against its own baseline.
std::vector<ExampleAttribution> attribute_rows(const MlpModel& model, const Matrix& rows,
                                               const BaselineSpec& spec, std::size_t steps,
                                               OutputTarget target,
                                               Execution exec = Execution::kParallel);

inline constexpr std::size_t kHistogramBins = 40;
inline constexpr double kHistogramLow = -1.0;
inline constexpr double kHistogramHigh = 1.0;

struct GroupAttribution {
  int group = 0;
  std::size_t count = 0;
  double mean_sensitive = 0.0;           // mean of the summed sensitive-column attribution
  double mean_abs_sensitive = 0.0;
  std::vector<double> feature_means;     // per encoded column
  std::vector<double> feature_abs_means;
  // [underflow, 40 uniform bins over [-1, 1), overflow] of the sensitive
  // attribution; the value 1.0 falls in the last uniform bin.
  std::vector<std::size_t> histogram;
};

struct AttributionSummary {
  std::vector<std::string> column_names;
  std::vector<GroupAttribution> groups;  // groups present in the data only
  std::vector<std::string> notices;      // e.g. groups omitted for lack of examples
  double mean_abs_sensitive = 0.0;       // over all examples
  double max_abs_residual = 0.0;
  double mean_abs_residual = 0.0;
  std::size_t steps = 0;
  OutputTarget target = OutputTarget::kLogit;
};

// Integrated-gradients attributions of every test example, grouped by the
// sensitive attribute.
AttributionSummary group_attribution_summary(const MlpModel& model, const PartyDataset& party,
                                             std::size_t steps = kDefaultIgSteps,
                                             OutputTarget target = OutputTarget::kLogit,
                                             Execution exec = Execution::kParallel);

nlohmann::json to_json(const AttributionSummary& summary);

}  // namespace fedbias
