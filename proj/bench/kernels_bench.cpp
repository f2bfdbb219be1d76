// Serial reference path vs OpenMP path for the hot kernels.
//   fedbias_bench --benchmark_filter=Grid

#include <benchmark/benchmark.h>

#include "fedbias/attribution.hpp"
#include "fedbias/kernels.hpp"
#include "fedbias/training.hpp"

namespace {

using namespace fedbias;

const SyntheticBenchmark& bench_data() {
  static const SyntheticBenchmark data = [] {
    SyntheticConfig c;
    c.num_parties = 20;
    c.n_train = 1000;
    c.n_test = 2000;
    c.bias_levels = linear_bias_levels(20, 0.0, 0.9);
    c.seed = 1;
    return generate_synthetic(c);
  }();
  return data;
}

MlpModel bench_model() {
  TrainingConfig c;
  return initial_model(bench_data().schema->width(), c);
}

Execution mode(const benchmark::State& state) {
  return state.range(0) ? Execution::kParallel : Execution::kSerial;
}

void BM_PredictLabels(benchmark::State& state) {
  const auto model = bench_model();
  const auto& x = bench_data().parties[0].test.x;
  for (auto _ : state) benchmark::DoNotOptimize(predict_labels(model, x, mode(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.rows));
}

// One leave-one-out round of the influence audit: K models on K test splits.
void BM_EvaluateGrid(benchmark::State& state) {
  const auto& parties = bench_data().parties;
  std::vector<MlpModel> models(parties.size(), bench_model());
  std::vector<const Split*> splits;
  for (const auto& p : parties) splits.push_back(&p.test);
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_grid(models, splits, 2, kDefaultMinCell, mode(state)));
  }
}

void BM_AttributeRows(benchmark::State& state) {
  const auto model = bench_model();
  const auto& party = bench_data().parties[0];
  const auto spec = make_baseline_spec(*party.schema, party.test.x);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        attribute_rows(model, party.test.x, spec, kDefaultIgSteps, OutputTarget::kLogit,
                       mode(state)));
  }
}

void BM_LocalUpdates(benchmark::State& state) {
  const auto& parties = bench_data().parties;
  TrainingConfig c;
  c.rounds = 1;
  FederatedOptions opts;
  opts.execution = mode(state);
  opts.keep_traces = false;
  for (auto _ : state) benchmark::DoNotOptimize(run_federated(parties, c, opts));
}

}  // namespace

// Argument 0 = serial reference, 1 = OpenMP.
BENCHMARK(BM_PredictLabels)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_EvaluateGrid)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AttributeRows)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LocalUpdates)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
