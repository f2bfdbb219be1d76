#include "fedbias/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "fedbias/errors.hpp"

namespace fedbias {

void TrainingConfig::validate() const {
  if (local_epochs == 0) throw InvalidArgument("local_epochs must be >= 1");
  if (batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
  if (hidden_width == 0) throw InvalidArgument("hidden_width must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument("lr must be >= 0");
  if (!(centralized_lr >= 0.0) || !std::isfinite(centralized_lr)) {
    throw InvalidArgument("centralized_lr must be >= 0");
  }
  if (!(fedprox_mu >= 0.0) || !std::isfinite(fedprox_mu)) {
    throw InvalidArgument("fedprox_mu must be >= 0");
  }
}

std::vector<std::size_t> TrainingConfig::layer_dims(std::size_t input_dim) const {
  return {input_dim, hidden_width, 1};
}

MlpModel initial_model(std::size_t input_dim, const TrainingConfig& config) {
  return init_model(config.layer_dims(input_dim), config.seed);
}

MlpModel local_update(const MlpModel& global, const PartyDataset& party,
                      const TrainingConfig& config, std::size_t round,
                      std::span<const double> sample_weights) {
  config.validate();
  const Split& data = party.train;
  if (data.empty()) {
    throw InvalidArgument("party " + std::to_string(party.party_id) + " has no training data");
  }
  if (data.x.cols != global.input_dim()) {
    throw InvalidArgument("party features do not match the model input width");
  }
  std::seed_seq seq{config.seed, static_cast<std::uint64_t>(party.party_id),
                    static_cast<std::uint64_t>(round)};
  std::mt19937_64 rng(seq);

  MlpModel model = global;
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < config.local_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, order.size() - start);
      const std::span<const std::size_t> batch(order.data() + start, len);
      auto step = loss_and_gradients(model, data.x, data.y, batch, sample_weights);
      if (config.fedprox_mu > 0.0) {
        const auto current = model.params();
        const auto anchor = global.params();
        for (std::size_t i = 0; i < current.size(); ++i) {
          step.gradients.values[i] += config.fedprox_mu * (current[i] - anchor[i]);
        }
      }
      model = sgd_step(model, step.gradients, config.lr);
    }
  }
  return model;
}

MlpModel aggregate(std::span<const MlpModel> locals, std::span<const std::size_t> sizes) {
  if (locals.empty()) throw InvalidArgument("nothing to aggregate");
  if (sizes.size() != locals.size()) throw InvalidArgument("one size per local model required");
  double total = 0.0;
  for (std::size_t k = 0; k < locals.size(); ++k) {
    if (sizes[k] == 0) throw InvalidArgument("party sizes must be positive");
    if (locals[k].dims() != locals[0].dims()) {
      throw InvalidArgument("local models have different shapes");
    }
    total += static_cast<double>(sizes[k]);
  }
  MlpModel out = locals[0];
  auto acc = out.params();
  const auto anchor = locals[0].params();
  for (std::size_t k = 1; k < locals.size(); ++k) {
    const double w = static_cast<double>(sizes[k]) / total;
    const auto p = locals[k].params();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * (p[i] - anchor[i]);
  }
  return out;
}

std::vector<std::size_t> train_sizes(const std::vector<PartyDataset>& parties) {
  std::vector<std::size_t> sizes;
  sizes.reserve(parties.size());
  for (const auto& p : parties) sizes.push_back(p.n_train());
  return sizes;
}

FederatedResult run_federated(const std::vector<PartyDataset>& parties,
                              const TrainingConfig& config, const FederatedOptions& options) {
  config.validate();
  if (parties.empty()) throw InvalidArgument("federation needs at least one party");
  if (!options.sample_weights.empty() && options.sample_weights.size() != parties.size()) {
    throw InvalidArgument("sample weights must be given for every party or none");
  }
  const auto sizes = train_sizes(parties);
  FederatedResult result;
  result.final_model = initial_model(parties.front().train.x.cols, config);

  for (std::size_t t = 1; t <= config.rounds; ++t) {
    RoundTrace trace;
    trace.round = t;
    trace.global_before = result.final_model;
    trace.locals.resize(parties.size());
    parallel_for(parties.size(), options.execution, [&](std::size_t k) {
      std::span<const double> weights;
      if (!options.sample_weights.empty()) weights = options.sample_weights[k];
      trace.locals[k] = local_update(trace.global_before, parties[k], config, t, weights);
    });
    trace.global_after = aggregate(trace.locals, sizes);
    result.final_model = trace.global_after;
    if (options.on_round) options.on_round(trace);
    if (options.keep_traces) result.traces.push_back(std::move(trace));
  }
  return result;
}

MlpModel train_standalone(const PartyDataset& party, const TrainingConfig& config,
                          std::span<const double> sample_weights) {
  TrainingConfig cfg = config;
  cfg.fedprox_mu = 0.0;
  cfg.validate();
  if (party.train.empty()) throw InvalidArgument("standalone training needs data");
  MlpModel model = initial_model(party.train.x.cols, cfg);
  for (std::size_t t = 1; t <= cfg.rounds; ++t) {
    model = local_update(model, party, cfg, t, sample_weights);
  }
  return model;
}

std::vector<MlpModel> train_standalone_all(const std::vector<PartyDataset>& parties,
                                           const TrainingConfig& config, Execution exec) {
  std::vector<MlpModel> models(parties.size());
  parallel_for(parties.size(), exec,
               [&](std::size_t k) { models[k] = train_standalone(parties[k], config); });
  return models;
}

MlpModel train_centralized(const std::vector<PartyDataset>& parties,
                           const TrainingConfig& config) {
  if (parties.empty()) throw InvalidArgument("centralized training needs data");
  std::vector<const Split*> parts;
  for (const auto& p : parties) parts.push_back(&p.train);
  PartyDataset pooled;
  pooled.party_id = parties.front().party_id;
  pooled.train = concat(parts);
  pooled.schema = parties.front().schema;
  TrainingConfig cfg = config;
  cfg.lr = config.centralized_lr;
  return train_standalone(pooled, cfg);
}

}  // namespace fedbias
