#include "fedbias/intervention.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fedbias/errors.hpp"
#include "fedbias/metrics.hpp"

namespace fedbias {

namespace {

void check_schema(const MlpModel& model, const FeatureSchema& schema) {
  if (model.input_dim() != schema.width()) {
    throw InvalidArgument("model input width " + std::to_string(model.input_dim()) +
                          " does not match schema width " + std::to_string(schema.width()));
  }
}

std::vector<bool> sensitive_mask(const FeatureSchema& schema) {
  std::vector<bool> mask(schema.width(), false);
  for (std::size_t c : schema.sensitive_columns) mask.at(c) = true;
  return mask;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::optional<double> mean_defined(const std::vector<std::optional<double>>& xs) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& x : xs) {
    if (x) {
      sum += *x;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace

double sensitive_param_norm(const MlpModel& model, const FeatureSchema& schema) {
  check_schema(model, schema);
  const auto mask = sensitive_mask(schema);
  const std::size_t in = model.dims()[0];
  const std::size_t out = model.dims()[1];
  double sens = 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < out; ++r) {
    for (std::size_t c = 0; c < in; ++c) {
      const double w = model.weight(0, r, c);
      total += w * w;
      if (mask[c]) sens += w * w;
    }
  }
  if (total == 0.0) return 0.0;
  return std::sqrt(sens) / std::sqrt(total);
}

ScaleTarget parse_scale_target(const std::string& name) {
  if (name == "sensitive") return ScaleTarget::kSensitive;
  if (name == "other") return ScaleTarget::kOther;
  throw InvalidArgument("unknown scaling target '" + name + "'");
}

std::string to_string(ScaleTarget target) {
  return target == ScaleTarget::kSensitive ? "sensitive" : "other";
}

MlpModel scale_params(const MlpModel& model, const FeatureSchema& schema, double factor,
                      ScaleTarget target) {
  check_schema(model, schema);
  if (target != ScaleTarget::kSensitive && target != ScaleTarget::kOther) {
    throw InvalidArgument("invalid scaling target");
  }
  // 0 is accepted: it severs the path, which is what the probes need.
  if (!(factor >= 0.0) || !std::isfinite(factor)) {
    throw InvalidArgument("scaling factor must be finite and >= 0");
  }
  MlpModel scaled = model;
  if (factor == 1.0) return scaled;
  const auto mask = sensitive_mask(schema);
  const bool want = target == ScaleTarget::kSensitive;
  const std::size_t in = model.dims()[0];
  const std::size_t out = model.dims()[1];
  auto p = scaled.params();
  const std::size_t w0 = scaled.weight_offset(0);
  for (std::size_t r = 0; r < out; ++r) {
    for (std::size_t c = 0; c < in; ++c) {
      if (mask[c] == want) p[w0 + r * in + c] *= factor;
    }
  }
  return scaled;
}

ScalingSweep scaling_sweep(const MlpModel& model, const std::vector<PartyDataset>& parties,
                           std::span<const double> factors, ScaleTarget target,
                           std::size_t min_cell, Execution exec) {
  if (factors.empty()) throw InvalidArgument("scaling sweep needs at least one factor");
  if (parties.empty() || !parties.front().schema) {
    throw InvalidArgument("scaling sweep needs parties with a schema");
  }
  const FeatureSchema& schema = *parties.front().schema;
  std::vector<MlpModel> models;
  models.reserve(factors.size());
  for (double f : factors) models.push_back(scale_params(model, schema, f, target));
  std::vector<const Split*> tests;
  for (const auto& p : parties) tests.push_back(&p.test);
  const auto grid = evaluate_grid(models, tests, schema.num_groups(), min_cell, exec);

  ScalingSweep sweep;
  sweep.target = target;
  for (const auto& p : parties) sweep.party_ids.push_back(p.party_id);
  for (std::size_t f = 0; f < factors.size(); ++f) {
    SweepPoint pt;
    pt.factor = factors[f];
    double acc = 0.0;
    for (const auto& report : grid[f]) {
      pt.accuracy.push_back(report.accuracy);
      pt.dp.push_back(report.dp_gap);
      pt.eo.push_back(report.eo_gap);
      acc += report.accuracy;
    }
    pt.mean_accuracy = acc / static_cast<double>(parties.size());
    pt.mean_dp = mean_defined(pt.dp);
    pt.mean_eo = mean_defined(pt.eo);
    sweep.points.push_back(std::move(pt));
  }
  return sweep;
}

void write_sweep_csv(const std::filesystem::path& path, const ScalingSweep& sweep) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "factor,mean_accuracy,mean_dp,mean_eo";
  for (int id : sweep.party_ids) {
    out << ",accuracy_" << id << ",dp_" << id << ",eo_" << id;
  }
  out << '\n';
  for (const auto& pt : sweep.points) {
    out << fmt(pt.factor) << ',' << fmt(pt.mean_accuracy) << ',' << fmt(pt.mean_dp) << ','
        << fmt(pt.mean_eo);
    for (std::size_t k = 0; k < pt.accuracy.size(); ++k) {
      out << ',' << fmt(pt.accuracy[k]) << ',' << fmt(pt.dp[k]) << ',' << fmt(pt.eo[k]);
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ReweighTable reweigh_weights(const std::vector<std::array<std::size_t, 2>>& counts) {
  std::size_t n = 0;
  std::array<std::size_t, 2> by_label{0, 0};
  std::vector<std::size_t> by_group(counts.size(), 0);
  for (std::size_t g = 0; g < counts.size(); ++g) {
    for (int y = 0; y < 2; ++y) {
      n += counts[g][y];
      by_label[y] += counts[g][y];
      by_group[g] += counts[g][y];
    }
  }
  if (n == 0) throw InvalidArgument("cannot reweigh an empty dataset");
  ReweighTable table;
  table.weights.assign(counts.size(), {1.0, 1.0});
  for (std::size_t g = 0; g < counts.size(); ++g) {
    for (int y = 0; y < 2; ++y) {
      if (counts[g][y] == 0) {
        table.notices.push_back("cell (group " + std::to_string(g) + ", label " +
                                std::to_string(y) + ") is empty; weight 1");
        continue;
      }
      // P(a)P(y)/P(a,y) = n_a n_y / (n n_ay)
      table.weights[g][y] = static_cast<double>(by_group[g]) * static_cast<double>(by_label[y]) /
                            (static_cast<double>(n) * static_cast<double>(counts[g][y]));
    }
  }
  return table;
}

ReweighScope parse_reweigh_scope(const std::string& name) {
  if (name == "local") return ReweighScope::kLocal;
  if (name == "global") return ReweighScope::kGlobal;
  throw InvalidArgument("unknown reweighing scope '" + name + "'");
}

std::string to_string(ReweighScope scope) {
  return scope == ReweighScope::kLocal ? "local" : "global";
}

std::vector<std::vector<double>> reweigh_sample_weights(const std::vector<PartyDataset>& parties,
                                                        ReweighScope scope,
                                                        std::vector<std::string>* notices) {
  if (parties.empty() || !parties.front().schema) {
    throw InvalidArgument("reweighing needs parties with a schema");
  }
  const std::size_t groups = parties.front().schema->num_groups();
  std::optional<ReweighTable> pooled;
  if (scope == ReweighScope::kGlobal) {
    std::vector<std::array<std::size_t, 2>> total(groups, {0, 0});
    for (const auto& p : parties) {
      const auto c = cell_counts(p.train, groups);
      for (std::size_t g = 0; g < groups; ++g) {
        total[g][0] += c[g][0];
        total[g][1] += c[g][1];
      }
    }
    pooled = reweigh_weights(total);
    if (notices) notices->insert(notices->end(), pooled->notices.begin(), pooled->notices.end());
  }
  std::vector<std::vector<double>> out;
  out.reserve(parties.size());
  for (const auto& p : parties) {
    ReweighTable table;
    if (pooled) {
      table = *pooled;
    } else {
      table = reweigh_weights(cell_counts(p.train, groups));
      if (notices) {
        for (const auto& n : table.notices) {
          notices->push_back("party " + std::to_string(p.party_id) + ": " + n);
        }
      }
    }
    std::vector<double> w(p.train.size());
    for (std::size_t r = 0; r < w.size(); ++r) w[r] = table.at(p.train.a[r], p.train.y[r]);
    out.push_back(std::move(w));
  }
  return out;
}

FederatedResult run_federated_reweighed(const std::vector<PartyDataset>& parties,
                                        const TrainingConfig& config, ReweighScope scope,
                                        FederatedOptions options) {
  options.sample_weights = reweigh_sample_weights(parties, scope);
  return run_federated(parties, config, options);
}

std::vector<NormRow> norms_over_traces(const TraceSource& traces, const FeatureSchema& schema,
                                       std::size_t stride) {
  if (stride == 0) throw InvalidArgument("stride must be >= 1");
  std::vector<NormRow> rows;
  const std::size_t total = traces.num_rounds();
  for (std::size_t t = 1; t <= total; t += stride) {
    const RoundTrace trace = traces.load(t);
    rows.push_back({t, "global", sensitive_param_norm(trace.global_after, schema)});
    for (std::size_t k = 0; k < trace.locals.size(); ++k) {
      rows.push_back({t, "party_" + std::to_string(k), sensitive_param_norm(trace.locals[k], schema)});
    }
  }
  return rows;
}

void write_norms_csv(const std::filesystem::path& path, const std::vector<NormRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "round,model,norm\n";
  for (const auto& r : rows) out << r.round << ',' << r.model << ',' << fmt(r.norm) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace fedbias
