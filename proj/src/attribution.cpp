#include "fedbias/attribution.hpp"

#include <cmath>

#include "fedbias/errors.hpp"

namespace fedbias {

namespace {

double output_value(const MlpModel& model, std::span<const double> x, OutputTarget target) {
  const double z = score(model, x);
  return target == OutputTarget::kLogit ? z : sigmoid(z);
}

std::size_t histogram_bin(double v) {
  if (v < kHistogramLow) return 0;
  if (v > kHistogramHigh) return kHistogramBins + 1;
  const double width = (kHistogramHigh - kHistogramLow) / static_cast<double>(kHistogramBins);
  auto bin = static_cast<std::size_t>((v - kHistogramLow) / width);
  if (bin >= kHistogramBins) bin = kHistogramBins - 1;
  return bin + 1;
}

}  // namespace

BaselineSpec make_baseline_spec(const FeatureSchema& schema, const Matrix& reference) {
  if (reference.rows == 0) throw InvalidArgument("baseline statistics need at least one row");
  if (reference.cols != schema.width()) {
    throw InvalidArgument("reference data width does not match the schema");
  }
  BaselineSpec spec;
  spec.sensitive_columns = schema.sensitive_columns;
  spec.modes.assign(schema.width(), BaselineMode::kDatasetMean);
  if (schema.sensitive_is_binary) {
    for (std::size_t c : schema.sensitive_columns) spec.modes[c] = BaselineMode::kOppositeOneHot;
  }
  spec.column_means.assign(schema.width(), 0.0);
  for (std::size_t r = 0; r < reference.rows; ++r) {
    const auto row = reference.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) spec.column_means[c] += row[c];
  }
  for (double& m : spec.column_means) m /= static_cast<double>(reference.rows);
  return spec;
}

std::vector<double> build_baseline(const BaselineSpec& spec, std::span<const double> x) {
  if (x.size() != spec.modes.size()) throw InvalidArgument("example width does not match");
  std::vector<double> baseline(spec.column_means);
  bool flips = false;
  for (BaselineMode m : spec.modes) flips |= m == BaselineMode::kOppositeOneHot;
  if (!flips) return baseline;

  int group = -1;
  for (std::size_t g = 0; g < spec.sensitive_columns.size(); ++g) {
    const double v = x[spec.sensitive_columns[g]];
    if (v == 1.0 && group < 0) {
      group = static_cast<int>(g);
    } else if (v != 0.0) {
      group = -2;
      break;
    }
  }
  if (group < 0) throw InvalidArgument("example has no valid sensitive group");
  // Move the one-hot to the other level of the pair.
  for (std::size_t g = 0; g < spec.sensitive_columns.size(); ++g) {
    baseline[spec.sensitive_columns[g]] = static_cast<int>(g) == group ? 0.0 : 1.0;
  }
  return baseline;
}

std::vector<double> integrated_gradients(const MlpModel& model, std::span<const double> x,
                                         std::span<const double> baseline, std::size_t steps,
                                         OutputTarget target) {
  if (steps == 0) throw InvalidArgument("integrated gradients needs at least one step");
  if (x.size() != model.input_dim() || baseline.size() != x.size()) {
    throw InvalidArgument("example and baseline must match the model input width");
  }
  const std::size_t d = x.size();
  std::vector<double> sum(d, 0.0);
  std::vector<double> point(d);
  for (std::size_t s = 1; s <= steps; ++s) {
    const double alpha = (static_cast<double>(s) - 0.5) / static_cast<double>(steps);
    for (std::size_t i = 0; i < d; ++i) point[i] = baseline[i] + alpha * (x[i] - baseline[i]);
    const auto g = input_gradient(model, point, target);
    for (std::size_t i = 0; i < d; ++i) sum[i] += g[i];
  }
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = (x[i] - baseline[i]) * sum[i] / static_cast<double>(steps);
  }
  return out;
}

double output_difference(const MlpModel& model, std::span<const double> x,
                         std::span<const double> baseline, OutputTarget target) {
  return output_value(model, x, target) - output_value(model, baseline, target);
}

std::vector<ExampleAttribution> attribute_rows(const MlpModel& model, const Matrix& rows,
                                               const BaselineSpec& spec, std::size_t steps,
                                               OutputTarget target, Execution exec) {
  std::vector<ExampleAttribution> out(rows.rows);
  parallel_for(rows.rows, exec, [&](std::size_t r) {
    const auto x = rows.row(r);
    const auto baseline = build_baseline(spec, x);
    ExampleAttribution& e = out[r];
    e.attributions = integrated_gradients(model, x, baseline, steps, target);
    double total = 0.0;
    for (double a : e.attributions) total += a;
    e.completeness_residual = total - output_difference(model, x, baseline, target);
  });
  return out;
}

AttributionSummary group_attribution_summary(const MlpModel& model, const PartyDataset& party,
                                             std::size_t steps, OutputTarget target,
                                             Execution exec) {
  if (!party.schema) throw InvalidArgument("party needs a feature schema");
  const FeatureSchema& schema = *party.schema;
  const Split& test = party.test;
  if (test.empty()) throw InvalidArgument("attribution needs a non-empty test split");
  const BaselineSpec spec = make_baseline_spec(schema, test.x);
  const auto rows = attribute_rows(model, test.x, spec, steps, target, exec);

  AttributionSummary summary;
  summary.column_names = schema.column_names;
  summary.steps = steps;
  summary.target = target;
  const std::size_t d = schema.width();
  std::vector<GroupAttribution> acc(schema.num_groups());
  for (std::size_t g = 0; g < acc.size(); ++g) {
    acc[g].group = static_cast<int>(g);
    acc[g].feature_means.assign(d, 0.0);
    acc[g].feature_abs_means.assign(d, 0.0);
    acc[g].histogram.assign(kHistogramBins + 2, 0);
  }
  double abs_total = 0.0;
  double residual_total = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& e = rows[r];
    GroupAttribution& g = acc[test.a[r]];
    double sensitive = 0.0;
    for (std::size_t c : schema.sensitive_columns) sensitive += e.attributions[c];
    ++g.count;
    g.mean_sensitive += sensitive;
    g.mean_abs_sensitive += std::abs(sensitive);
    for (std::size_t c = 0; c < d; ++c) {
      g.feature_means[c] += e.attributions[c];
      g.feature_abs_means[c] += std::abs(e.attributions[c]);
    }
    ++g.histogram[histogram_bin(sensitive)];
    abs_total += std::abs(sensitive);
    residual_total += std::abs(e.completeness_residual);
    summary.max_abs_residual = std::max(summary.max_abs_residual, std::abs(e.completeness_residual));
  }
  const double n = static_cast<double>(rows.size());
  summary.mean_abs_sensitive = abs_total / n;
  summary.mean_abs_residual = residual_total / n;
  for (auto& g : acc) {
    if (g.count == 0) {
      summary.notices.push_back("group " + schema.group_names()[g.group] +
                                " has no test examples; omitted");
      continue;
    }
    const double c = static_cast<double>(g.count);
    g.mean_sensitive /= c;
    g.mean_abs_sensitive /= c;
    for (double& v : g.feature_means) v /= c;
    for (double& v : g.feature_abs_means) v /= c;
    summary.groups.push_back(std::move(g));
  }
  return summary;
}

nlohmann::json to_json(const AttributionSummary& summary) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : summary.groups) {
    groups.push_back({{"group", g.group},
                      {"count", g.count},
                      {"mean_sensitive", g.mean_sensitive},
                      {"mean_abs_sensitive", g.mean_abs_sensitive},
                      {"feature_means", g.feature_means},
                      {"feature_abs_means", g.feature_abs_means},
                      {"histogram", g.histogram}});
  }
  return {{"columns", summary.column_names},
          {"target", summary.target == OutputTarget::kLogit ? "logit" : "probability"},
          {"steps", summary.steps},
          {"histogram",
           {{"bins", kHistogramBins},
            {"low", kHistogramLow},
            {"high", kHistogramHigh},
            {"layout", "underflow, uniform bins, overflow"}}},
          {"groups", std::move(groups)},
          {"mean_abs_sensitive", summary.mean_abs_sensitive},
          {"completeness_residual",
           {{"max_abs", summary.max_abs_residual}, {"mean_abs", summary.mean_abs_residual}}},
          {"notices", summary.notices}};
}

}  // namespace fedbias
