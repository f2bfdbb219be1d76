#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedbias/data.hpp"
#include "fedbias/kernels.hpp"
#include "fedbias/nn.hpp"
#include "fedbias/run_store.hpp"
#include "fedbias/training.hpp"

namespace fedbias {

// ||W1[:, sensitive]|| / ||W1||, where W1 is the first-layer weight matrix.
// "Sensitive parameters" are first-layer weight columns over the sensitive
// one-hot inputs; biases are excluded.
double sensitive_param_norm(const MlpModel& model, const FeatureSchema& schema);

enum class ScaleTarget { kSensitive, kOther };

ScaleTarget parse_scale_target(const std::string& name);  // "sensitive" | "other"
std::string to_string(ScaleTarget target);

// Copy with the first-layer weight columns of `target` multiplied by factor.
MlpModel scale_params(const MlpModel& model, const FeatureSchema& schema, double factor,
                      ScaleTarget target);

struct SweepPoint {
  double factor = 1.0;
  std::vector<double> accuracy;             // per party
  std::vector<std::optional<double>> dp;    // per party
  std::vector<std::optional<double>> eo;    // per party
  double mean_accuracy = 0.0;
  std::optional<double> mean_dp;            // over parties with a defined gap
  std::optional<double> mean_eo;
};

struct ScalingSweep {
  ScaleTarget target = ScaleTarget::kSensitive;
  std::vector<int> party_ids;
  std::vector<SweepPoint> points;
};

// Evaluates the scaled model on every party's test split, per factor.
ScalingSweep scaling_sweep(const MlpModel& model, const std::vector<PartyDataset>& parties,
                           std::span<const double> factors, ScaleTarget target,
                           std::size_t min_cell = kDefaultMinCell,
                           Execution exec = Execution::kParallel);

void write_sweep_csv(const std::filesystem::path& path, const ScalingSweep& sweep);

// w[group][label] = P(a) P(y) / P(a, y).
struct ReweighTable {
  std::vector<std::array<double, 2>> weights;
  std::vector<std::string> notices;  // cells absent from the data (weight 1)

  double at(int group, int label) const { return weights[group][label]; }
};

ReweighTable reweigh_weights(const std::vector<std::array<std::size_t, 2>>& counts);

enum class ReweighScope { kLocal, kGlobal };

ReweighScope parse_reweigh_scope(const std::string& name);  // "local" | "global"
std::string to_string(ReweighScope scope);

// Per-party, per-train-row weights: from each party's own cell counts (local)
// or from the pooled counts (global).
std::vector<std::vector<double>> reweigh_sample_weights(const std::vector<PartyDataset>& parties,
                                                        ReweighScope scope,
                                                        std::vector<std::string>* notices = nullptr);

// run_federated with every local loss weighted by w(a_i, y_i).
FederatedResult run_federated_reweighed(const std::vector<PartyDataset>& parties,
                                        const TrainingConfig& config, ReweighScope scope,
                                        FederatedOptions options = {});

struct NormRow {
  std::size_t round = 0;
  std::string model;  // "global" or "party_<k>"
  double norm = 0.0;
};

// Sensitive-parameter norms of the aggregated model and every local update,
// every `stride`-th round starting at round 1.
std::vector<NormRow> norms_over_traces(const TraceSource& traces, const FeatureSchema& schema,
                                       std::size_t stride = 1);

void write_norms_csv(const std::filesystem::path& path, const std::vector<NormRow>& rows);

}  // namespace fedbias
