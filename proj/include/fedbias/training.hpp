#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fedbias/data.hpp"
#include "fedbias/kernels.hpp"
#include "fedbias/nn.hpp"

namespace fedbias {

struct TrainingConfig {
  // FL rounds; also the epoch count of standalone and centralized training.
  std::size_t rounds = 200;
  std::size_t local_epochs = 1;
  std::size_t batch_size = 32;
  double lr = 0.1;
  double centralized_lr = 0.1;
  // Weight of the proximal term mu/2 * ||theta - theta_global||^2; 0 is FedAvg.
  double fedprox_mu = 0.0;
  std::uint64_t seed = 0;
  std::size_t hidden_width = 32;

  // Throws InvalidArgument.
  void validate() const;
  std::vector<std::size_t> layer_dims(std::size_t input_dim) const;
};

// Snapshot of one FL round.
struct RoundTrace {
  std::size_t round = 0;  // 1-based
  MlpModel global_before;
  std::vector<MlpModel> locals;  // indexed like the party list
  MlpModel global_after;
};

// The shared starting point of every regime for a given seed.
MlpModel initial_model(std::size_t input_dim, const TrainingConfig& config);

// local_epochs of minibatch SGD on the party's train split starting from
// `global`. Batches are drawn from a shuffle seeded by (seed, party_id,
// round). `sample_weights`, when non-empty, has one entry per train row.
MlpModel local_update(const MlpModel& global, const PartyDataset& party,
                      const TrainingConfig& config, std::size_t round,
                      std::span<const double> sample_weights = {});

// Size-weighted parameter mean with weights n_k / sum(n). Accumulated as
// locals[0] + sum_k w_k (locals[k] - locals[0]) in ascending index order, so
// identical inputs are returned exactly.
MlpModel aggregate(std::span<const MlpModel> locals, std::span<const std::size_t> sizes);

struct FederatedOptions {
  Execution execution = Execution::kParallel;
  bool keep_traces = true;
  // Called after every round, in round order.
  std::function<void(const RoundTrace&)> on_round;
  // Optional per-party, per-train-row weights (reweighed training).
  std::vector<std::vector<double>> sample_weights;
};

struct FederatedResult {
  MlpModel final_model;
  std::vector<RoundTrace> traces;
};

// FedAvg (FedProx when fedprox_mu > 0) with every party participating in
// every round.
FederatedResult run_federated(const std::vector<PartyDataset>& parties,
                              const TrainingConfig& config, const FederatedOptions& options = {});

MlpModel train_standalone(const PartyDataset& party, const TrainingConfig& config,
                          std::span<const double> sample_weights = {});

// Standalone models for every party.
std::vector<MlpModel> train_standalone_all(const std::vector<PartyDataset>& parties,
                                           const TrainingConfig& config,
                                           Execution exec = Execution::kParallel);

// Trains on the pooled train splits (in party order) with centralized_lr. The
// pooled set reuses the first party's id for its shuffle seed.
MlpModel train_centralized(const std::vector<PartyDataset>& parties,
                           const TrainingConfig& config);

std::vector<std::size_t> train_sizes(const std::vector<PartyDataset>& parties);

}  // namespace fedbias
