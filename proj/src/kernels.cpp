#include "fedbias/kernels.hpp"

#include <exception>
#include <mutex>

#include <omp.h>

namespace fedbias {

void parallel_for(std::size_t n, Execution exec, const std::function<void(std::size_t)>& body) {
  if (exec == Execution::kSerial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<int> predict_labels(const MlpModel& model, const Matrix& features, Execution exec) {
  std::vector<int> out(features.rows);
  if (exec == Execution::kSerial) {
    ScoreWorkspace ws(model);
    for (std::size_t r = 0; r < features.rows; ++r) out[r] = ws.score(features.row(r)) >= 0.0;
    return out;
  }
  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (features.rows + kChunk - 1) / kChunk;
  parallel_for(chunks, exec, [&](std::size_t c) {
    ScoreWorkspace ws(model);
    const std::size_t end = std::min(features.rows, (c + 1) * kChunk);
    for (std::size_t r = c * kChunk; r < end; ++r) out[r] = ws.score(features.row(r)) >= 0.0;
  });
  return out;
}

std::vector<std::vector<FairnessReport>> evaluate_grid(std::span<const MlpModel> models,
                                                       std::span<const Split* const> datasets,
                                                       std::size_t num_groups,
                                                       std::size_t min_cell, Execution exec) {
  std::vector<std::vector<FairnessReport>> out(models.size(),
                                               std::vector<FairnessReport>(datasets.size()));
  const std::size_t cells = models.size() * datasets.size();
  parallel_for(cells, exec, [&](std::size_t idx) {
    const std::size_t m = idx / datasets.size();
    const std::size_t d = idx % datasets.size();
    const Split& data = *datasets[d];
    const auto predictions = predict_labels(models[m], data.x, Execution::kSerial);
    out[m][d] = evaluate_predictions(predictions, data.y, data.a, num_groups, min_cell);
  });
  return out;
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace fedbias
