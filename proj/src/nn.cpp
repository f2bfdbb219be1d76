#include "fedbias/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "fedbias/errors.hpp"

namespace fedbias {

namespace {

void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) {
    throw InvalidArgument("layer dims need at least an input and an output width");
  }
  for (std::size_t width : dims) {
    if (width == 0) throw InvalidArgument("layer widths must be >= 1");
  }
  if (dims.back() != 1) {
    throw InvalidArgument("output width must be 1, got " + std::to_string(dims.back()));
  }
}

void check_input(const MlpModel& model, std::size_t len) {
  if (model.num_params() == 0) throw InvalidArgument("model is empty");
  if (len != model.input_dim()) {
    throw InvalidArgument("input has " + std::to_string(len) + " features, model expects " +
                          std::to_string(model.input_dim()));
  }
}

// Activations of every layer for one input. acts[0] is the input, acts[l+1]
// the post-activation output of layer l (the last one holds the raw score).
struct Activations {
  std::vector<std::vector<double>> acts;

  explicit Activations(std::vector<std::vector<double>>&& buffers) : acts(std::move(buffers)) {}
  explicit Activations(const std::vector<std::size_t>& dims) : acts(dims.size()) {
    for (std::size_t l = 0; l < dims.size(); ++l) acts[l].resize(dims[l]);
  }
};

void forward_pass(const MlpModel& model, std::span<const double> x, Activations& a) {
  const auto& dims = model.dims();
  std::copy(x.begin(), x.end(), a.acts[0].begin());
  const double* p = model.params().data();
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const std::size_t in = dims[l];
    const std::size_t out = dims[l + 1];
    const double* w = p + model.weight_offset(l);
    const double* b = p + model.bias_offset(l);
    const double* src = a.acts[l].data();
    double* dst = a.acts[l + 1].data();
    const bool hidden = l + 1 < model.num_layers();
    for (std::size_t r = 0; r < out; ++r) {
      double z = b[r];
      const double* wr = w + r * in;
      for (std::size_t c = 0; c < in; ++c) z += wr[c] * src[c];
      dst[r] = hidden ? std::max(z, 0.0) : z;
    }
  }
}

// Backpropagates d(out)/d(score) = `upstream` through the network. Adds
// weight * (parameter gradient) into `grad` when non-null and writes the
// input gradient into `dx` when non-null.
void backward_pass(const MlpModel& model, const Activations& a, double upstream, double weight,
                   double* grad, double* dx, std::vector<double>& delta,
                   std::vector<double>& next_delta) {
  const auto& dims = model.dims();
  const double* p = model.params().data();
  delta.assign(1, upstream);
  for (std::size_t l = model.num_layers(); l-- > 0;) {
    const std::size_t in = dims[l];
    const std::size_t out = dims[l + 1];
    const double* src = a.acts[l].data();
    if (grad != nullptr) {
      double* gw = grad + model.weight_offset(l);
      double* gb = grad + model.bias_offset(l);
      for (std::size_t r = 0; r < out; ++r) {
        const double d = weight * delta[r];
        gb[r] += d;
        double* gwr = gw + r * in;
        for (std::size_t c = 0; c < in; ++c) gwr[c] += d * src[c];
      }
    }
    if (l == 0 && dx == nullptr) break;
    const double* w = p + model.weight_offset(l);
    next_delta.assign(in, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      const double d = delta[r];
      const double* wr = w + r * in;
      for (std::size_t c = 0; c < in; ++c) next_delta[c] += wr[c] * d;
    }
    if (l > 0) {
      // ReLU derivative, taken as 0 at the kink.
      for (std::size_t c = 0; c < in; ++c) {
        if (src[c] <= 0.0) next_delta[c] = 0.0;
      }
    }
    delta.swap(next_delta);
  }
  if (dx != nullptr) std::copy(delta.begin(), delta.end(), dx);
}

}  // namespace

MlpModel::MlpModel(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  check_dims(dims_);
  offsets_.resize(dims_.size() - 1);
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    offsets_[l] = offset;
    offset += dims_[l + 1] * dims_[l] + dims_[l + 1];
  }
  params_.assign(offset, 0.0);
}

std::size_t param_count(std::span<const std::size_t> dims) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += dims[l + 1] * dims[l] + dims[l + 1];
  return n;
}

MlpModel init_model(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  MlpModel model(dims);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t begin = model.weight_offset(l);
    const std::size_t end = model.bias_offset(l);
    for (std::size_t i = begin; i < end; ++i) model.params()[i] = dist(rng);
  }
  return model;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double score(const MlpModel& model, std::span<const double> x) {
  check_input(model, x.size());
  Activations a(model.dims());
  forward_pass(model, x, a);
  return a.acts.back()[0];
}

double forward(const MlpModel& model, std::span<const double> x) {
  return sigmoid(score(model, x));
}

ScoreWorkspace::ScoreWorkspace(const MlpModel& model) : model_(model) {
  if (model.num_params() == 0) throw InvalidArgument("model is empty");
  acts_.resize(model.dims().size());
  for (std::size_t l = 0; l < acts_.size(); ++l) acts_[l].resize(model.dims()[l]);
}

double ScoreWorkspace::score(std::span<const double> x) {
  check_input(model_, x.size());
  Activations a{std::move(acts_)};
  forward_pass(model_, x, a);
  const double z = a.acts.back()[0];
  acts_ = std::move(a.acts);
  return z;
}

LossAndGradients loss_and_gradients(const MlpModel& model, const Matrix& features,
                                    std::span<const int> labels,
                                    std::span<const std::size_t> rows,
                                    std::span<const double> sample_weights) {
  check_input(model, features.cols);
  if (labels.size() != features.rows) {
    throw InvalidArgument("label count does not match feature rows");
  }
  if (!sample_weights.empty() && sample_weights.size() != features.rows) {
    throw InvalidArgument("sample weight count does not match feature rows");
  }
  const std::size_t n = rows.empty() ? features.rows : rows.size();
  if (n == 0) throw InvalidArgument("batch is empty");

  LossAndGradients out;
  out.gradients.dims = model.dims();
  out.gradients.values.assign(model.num_params(), 0.0);

  Activations a(model.dims());
  std::vector<double> delta;
  std::vector<double> next_delta;
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t r = rows.empty() ? k : rows[k];
    if (r >= features.rows) throw InvalidArgument("batch row index out of range");
    const double y = labels[r];
    const double w = sample_weights.empty() ? 1.0 : sample_weights[r];
    if (!(w > 0.0)) throw InvalidArgument("sample weights must be positive");
    forward_pass(model, features.row(r), a);
    const double z = a.acts.back()[0];
    // softplus(z) - y*z, written to avoid overflow.
    const double term = std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
    total += w * term;
    backward_pass(model, a, sigmoid(z) - y, w, out.gradients.values.data(), nullptr, delta,
                  next_delta);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss = total * inv_n;
  for (double& g : out.gradients.values) g *= inv_n;
  if (!std::isfinite(out.loss)) throw NumericError("loss is not finite");
  return out;
}

std::vector<double> input_gradient(const MlpModel& model, std::span<const double> x,
                                   OutputTarget target) {
  check_input(model, x.size());
  Activations a(model.dims());
  forward_pass(model, x, a);
  double upstream = 1.0;
  if (target == OutputTarget::kProbability) {
    const double s = sigmoid(a.acts.back()[0]);
    upstream = s * (1.0 - s);
  }
  std::vector<double> dx(model.input_dim());
  std::vector<double> delta;
  std::vector<double> next_delta;
  backward_pass(model, a, upstream, 1.0, nullptr, dx.data(), delta, next_delta);
  return dx;
}

MlpModel sgd_step(const MlpModel& model, const GradientSet& grads, double lr) {
  if (grads.dims != model.dims() || grads.values.size() != model.num_params()) {
    throw InvalidArgument("gradient shape does not match model");
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument("learning rate must be >= 0");
  MlpModel next = model;
  auto p = next.params();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * grads.values[i];
  return next;
}

std::vector<double> flatten(const MlpModel& model) {
  return {model.params().begin(), model.params().end()};
}

MlpModel unflatten(const std::vector<std::size_t>& dims, std::span<const double> values) {
  MlpModel model(dims);
  if (values.size() != model.num_params()) {
    throw InvalidArgument("parameter vector has " + std::to_string(values.size()) +
                          " entries, dims need " + std::to_string(model.num_params()));
  }
  std::copy(values.begin(), values.end(), model.params().begin());
  return model;
}

}  // namespace fedbias
