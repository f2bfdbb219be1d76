#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "fedbias/nn.hpp"
#include "fedbias/training.hpp"

namespace fedbias {

// Read access to the per-round checkpoints of one federated run.
class TraceSource {
 public:
  virtual ~TraceSource() = default;
  virtual std::size_t num_rounds() const = 0;
  virtual std::size_t num_parties() const = 0;
  // Round numbers are 1-based.
  virtual RoundTrace load(std::size_t round) const = 0;
};

class InMemoryTraces final : public TraceSource {
 public:
  explicit InMemoryTraces(const std::vector<RoundTrace>& traces) : traces_(traces) {}
  std::size_t num_rounds() const override { return traces_.size(); }
  std::size_t num_parties() const override;
  RoundTrace load(std::size_t round) const override;

 private:
  const std::vector<RoundTrace>& traces_;
};

// A run directory:
//   <root>/round_<t>/{global_before,global_after,local_<k>}.ckpt
//   <root>/<name>.ckpt for any named model (final, centralized, ...)
class RunDirectory final : public TraceSource {
 public:
  explicit RunDirectory(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path round_dir(std::size_t round) const;
  std::filesystem::path model_path(const std::string& name) const;

  // Persists one round. Throws NumericError unless global_after is bitwise
  // equal to aggregate(locals, sizes).
  void write_round(const RoundTrace& trace, const std::vector<std::size_t>& sizes) const;
  void write_model(const std::string& name, const MlpModel& model) const;
  MlpModel read_model(const std::string& name) const;
  bool has_model(const std::string& name) const;

  // Counts round_1..round_T and the local_<k> files of round 1. Throws
  // NotFound when no rounds are present.
  std::size_t num_rounds() const override;
  std::size_t num_parties() const override;
  RoundTrace load(std::size_t round) const override;

 private:
  std::filesystem::path root_;
};

}  // namespace fedbias
