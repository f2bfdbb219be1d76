#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedbias/matrix.hpp"

namespace fedbias {

// Which output an input-space gradient is taken of.
enum class OutputTarget {
  kLogit,        // pre-sigmoid score
  kProbability,  // sigmoid(score)
};

// Dense feed-forward network: ReLU on hidden layers, a single sigmoid output.
//
// All parameters live in one flat vector. For each layer l, the weight matrix
// (dims[l+1] x dims[l], row-major) is followed by its bias vector
// (dims[l+1]). That order is also the flatten/checkpoint order.
class MlpModel {
 public:
  MlpModel() = default;
  // Zero-initialized model. Throws InvalidArgument on bad dims.
  explicit MlpModel(std::vector<std::size_t> dims);

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t num_layers() const { return dims_.size() - 1; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t num_params() const { return params_.size(); }

  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }

  // Offset of layer l's weight block inside params().
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + dims_[layer + 1] * dims_[layer];
  }

  double weight(std::size_t layer, std::size_t row, std::size_t col) const {
    return params_[weight_offset(layer) + row * dims_[layer] + col];
  }
  double& weight(std::size_t layer, std::size_t row, std::size_t col) {
    return params_[weight_offset(layer) + row * dims_[layer] + col];
  }
  double bias(std::size_t layer, std::size_t row) const {
    return params_[bias_offset(layer) + row];
  }
  double& bias(std::size_t layer, std::size_t row) {
    return params_[bias_offset(layer) + row];
  }

  bool operator==(const MlpModel& other) const {
    return dims_ == other.dims_ && params_ == other.params_;
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

// d(loss)/d(parameter), laid out exactly like MlpModel::params().
struct GradientSet {
  std::vector<std::size_t> dims;
  std::vector<double> values;
};

// Number of parameters of a network with these layer widths.
std::size_t param_count(std::span<const std::size_t> dims);

// Weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases 0. Output width must
// be 1.
MlpModel init_model(const std::vector<std::size_t>& dims, std::uint64_t seed);

// Pre-sigmoid output.
double score(const MlpModel& model, std::span<const double> x);
// sigmoid(score).
double forward(const MlpModel& model, std::span<const double> x);

double sigmoid(double z);

// Scores many inputs against one model without reallocating per call. Holds a
// reference to the model, which must outlive it.
class ScoreWorkspace {
 public:
  explicit ScoreWorkspace(const MlpModel& model);
  double score(std::span<const double> x);

 private:
  const MlpModel& model_;
  std::vector<std::vector<double>> acts_;
};

struct LossAndGradients {
  double loss = 0.0;
  GradientSet gradients;
};

// Mean binary cross-entropy over `rows` of (features, labels), each example's
// term multiplied by its sample weight when weights are given. Weights are
// indexed by dataset row, like labels. An empty `rows` span means every row.
LossAndGradients loss_and_gradients(const MlpModel& model, const Matrix& features,
                                    std::span<const int> labels,
                                    std::span<const std::size_t> rows = {},
                                    std::span<const double> sample_weights = {});

// d(target)/dx for a single input.
std::vector<double> input_gradient(const MlpModel& model, std::span<const double> x,
                                   OutputTarget target = OutputTarget::kLogit);

// p <- p - lr * g for every parameter.
MlpModel sgd_step(const MlpModel& model, const GradientSet& grads, double lr);

std::vector<double> flatten(const MlpModel& model);
MlpModel unflatten(const std::vector<std::size_t>& dims, std::span<const double> values);

}  // namespace fedbias
