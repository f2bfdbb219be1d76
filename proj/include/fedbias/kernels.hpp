#pragma once

// Data-parallel building blocks. Every kernel has a serial reference path and
// an OpenMP path; both write results into per-index slots, so their outputs
// are bitwise identical regardless of thread count or scheduling.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "fedbias/data.hpp"
#include "fedbias/metrics.hpp"
#include "fedbias/nn.hpp"

namespace fedbias {

enum class Execution { kSerial, kParallel };

// Runs body(i) for i in [0, n). With kParallel the iterations are spread over
// OpenMP threads; the first exception thrown by any iteration is rethrown
// after the loop.
void parallel_for(std::size_t n, Execution exec, const std::function<void(std::size_t)>& body);

// Hard (threshold 0.5) predictions of one model on every row.
std::vector<int> predict_labels(const MlpModel& model, const Matrix& features,
                                Execution exec = Execution::kParallel);

// reports[m][d] = evaluate(models[m], *datasets[d]).
std::vector<std::vector<FairnessReport>> evaluate_grid(std::span<const MlpModel> models,
                                                       std::span<const Split* const> datasets,
                                                       std::size_t num_groups,
                                                       std::size_t min_cell = kDefaultMinCell,
                                                       Execution exec = Execution::kParallel);

int max_threads();

}  // namespace fedbias
