#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedbias/data.hpp"
#include "fedbias/kernels.hpp"
#include "fedbias/metrics.hpp"
#include "fedbias/nn.hpp"
#include "fedbias/run_store.hpp"

namespace fedbias {

// Model names inside a run directory.
inline constexpr const char* kFederatedModel = "federated";
inline constexpr const char* kCentralizedModel = "centralized";
std::string standalone_model_name(std::size_t party_index);

struct PartyBenefit {
  int party_id = 0;
  std::optional<double> standalone_gap;
  std::optional<double> fl_gap;
  std::optional<double> centralized_gap;
  double standalone_accuracy = 0.0;
  double fl_accuracy = 0.0;
  double centralized_accuracy = 0.0;
  double acc_benefit_fl = 0.0;              // Acc(fl) - Acc(standalone)
  double acc_benefit_collab = 0.0;          // Acc(centralized) - Acc(standalone)
  std::optional<double> fairness_benefit_fl;      // gap(standalone) - gap(fl)
  std::optional<double> fairness_benefit_collab;  // gap(standalone) - gap(centralized)
};

// Means over parties; optional fields average only the defined entries.
struct BenefitAverages {
  std::optional<double> standalone_gap;
  std::optional<double> fl_gap;
  std::optional<double> centralized_gap;
  double standalone_accuracy = 0.0;
  double fl_accuracy = 0.0;
  double centralized_accuracy = 0.0;
  double acc_benefit_fl = 0.0;
  double acc_benefit_collab = 0.0;
  std::optional<double> fairness_benefit_fl;
  std::optional<double> fairness_benefit_collab;
};

struct BenefitReport {
  GapMetric metric = GapMetric::kDemographicParity;
  std::vector<PartyBenefit> parties;
  BenefitAverages average;
};

// Every model is evaluated on every party's local test split.
BenefitReport compute_benefits(std::span<const MlpModel> standalone, const MlpModel& centralized,
                               const MlpModel& federated,
                               const std::vector<PartyDataset>& parties, GapMetric metric,
                               std::size_t min_cell = kDefaultMinCell,
                               Execution exec = Execution::kParallel);

// Loads standalone_<k>, centralized and federated from the run directory.
// Throws NotFound listing every missing artifact.
BenefitReport compute_benefits(const std::filesystem::path& run_dir,
                               const std::vector<PartyDataset>& parties, GapMetric metric,
                               std::size_t min_cell = kDefaultMinCell);

// Size-weighted mean of every local except `excluded`, with weights
// renormalized to n_k / (N - n_excluded).
MlpModel leave_one_out_aggregate(std::span<const MlpModel> locals,
                                 std::span<const std::size_t> sizes, std::size_t excluded);

// I[i][j] = sum over evaluated rounds t of gap(theta_{t,-i}, D_j) - gap(theta_t, D_j)
// on party j's test split. Positive means removing i raises j's gap, i.e. i
// was improving j's fairness.
struct InfluenceMatrix {
  GapMetric metric = GapMetric::kDemographicParity;
  std::size_t num_parties = 0;
  std::size_t stride = 1;
  std::vector<std::size_t> rounds;              // evaluated rounds, ascending
  std::vector<std::vector<double>> per_round;   // per_round[r][i*K + j]
  std::vector<double> total;                    // total[i*K + j]
  std::vector<double> mean_influence;           // sum_j I[i][j] / K
  std::vector<std::vector<double>> cumulative;  // cumulative[i][r] = sum_{s<=r} sum_j I^s[i][j]
  std::vector<std::vector<double>> cumulative_mean;  // cumulative / K
  // (round, i, j) evaluations where a gap was undefined; they contribute 0.
  std::size_t undefined_evaluations = 0;

  double at(std::size_t i, std::size_t j) const { return total[i * num_parties + j]; }
};

// Evaluates rounds 1, 1+stride, 1+2*stride, ... up to the last round.
InfluenceMatrix compute_influence(const TraceSource& traces,
                                  const std::vector<PartyDataset>& parties, GapMetric metric,
                                  std::size_t stride = 1, std::size_t min_cell = kDefaultMinCell,
                                  Execution exec = Execution::kParallel);

struct InfluencePair {
  std::size_t influencer = 0;
  std::size_t influenced = 0;
  double value = 0.0;
};

struct TopPairs {
  std::vector<InfluencePair> positive;  // largest values first
  std::vector<InfluencePair> negative;  // most negative first
};

// Off-diagonal pairs ranked by value, ties broken by (i, j). Requests larger
// than the number of pairs are truncated.
TopPairs influence_top_pairs(const InfluenceMatrix& matrix, std::size_t n_positive,
                             std::size_t n_negative);

struct DynamicsSeries {
  std::size_t party_index = 0;
  std::vector<std::size_t> rounds;
  std::vector<std::optional<double>> global_gap;  // gap(global_after_t)
  std::vector<std::optional<double>> local_gap;   // gap(local_k_t)
};

// Per-round gaps of the aggregated model and of the party's own local update,
// both on the party's test split.
DynamicsSeries fairness_dynamics(const TraceSource& traces, const PartyDataset& party,
                                 std::size_t party_index, GapMetric metric,
                                 std::size_t min_cell = kDefaultMinCell);

nlohmann::json to_json(const BenefitReport& report);
nlohmann::json to_json(const InfluenceMatrix& matrix);
nlohmann::json to_json(const TopPairs& pairs);
void write_influence_rounds_csv(const std::filesystem::path& path, const InfluenceMatrix& matrix);
void write_dynamics_csv(const std::filesystem::path& path, const DynamicsSeries& series);

}  // namespace fedbias
