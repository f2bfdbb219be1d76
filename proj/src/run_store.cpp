#include "fedbias/run_store.hpp"

#include "fedbias/checkpoint.hpp"
#include "fedbias/errors.hpp"

namespace fedbias {

namespace fs = std::filesystem;

std::size_t InMemoryTraces::num_parties() const {
  return traces_.empty() ? 0 : traces_.front().locals.size();
}

RoundTrace InMemoryTraces::load(std::size_t round) const {
  if (round == 0 || round > traces_.size()) {
    throw NotFound("round " + std::to_string(round) + " not in memory");
  }
  return traces_[round - 1];
}

RunDirectory::RunDirectory(fs::path root) : root_(std::move(root)) {}

fs::path RunDirectory::round_dir(std::size_t round) const {
  return root_ / ("round_" + std::to_string(round));
}

fs::path RunDirectory::model_path(const std::string& name) const {
  return root_ / (name + ".ckpt");
}

void RunDirectory::write_round(const RoundTrace& trace,
                               const std::vector<std::size_t>& sizes) const {
  if (!(aggregate(trace.locals, sizes) == trace.global_after)) {
    throw NumericError("round " + std::to_string(trace.round) +
                       ": global_after is not the aggregate of its locals");
  }
  const fs::path dir = round_dir(trace.round);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_checkpoint(dir / "global_before.ckpt", trace.global_before);
  write_checkpoint(dir / "global_after.ckpt", trace.global_after);
  for (std::size_t k = 0; k < trace.locals.size(); ++k) {
    write_checkpoint(dir / ("local_" + std::to_string(k) + ".ckpt"), trace.locals[k]);
  }
}

void RunDirectory::write_model(const std::string& name, const MlpModel& model) const {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw IoError("cannot create " + root_.string() + ": " + ec.message());
  write_checkpoint(model_path(name), model);
}

MlpModel RunDirectory::read_model(const std::string& name) const {
  return read_checkpoint(model_path(name));
}

bool RunDirectory::has_model(const std::string& name) const {
  return fs::exists(model_path(name));
}

std::size_t RunDirectory::num_rounds() const {
  std::size_t t = 0;
  while (fs::exists(round_dir(t + 1) / "global_after.ckpt")) ++t;
  return t;
}

std::size_t RunDirectory::num_parties() const {
  const fs::path first = round_dir(1);
  if (!fs::exists(first)) throw NotFound("run has no round traces: " + root_.string());
  std::size_t k = 0;
  while (fs::exists(first / ("local_" + std::to_string(k) + ".ckpt"))) ++k;
  return k;
}

RoundTrace RunDirectory::load(std::size_t round) const {
  const fs::path dir = round_dir(round);
  if (!fs::exists(dir)) throw NotFound("missing trace for round " + std::to_string(round) +
                                       " in " + root_.string());
  RoundTrace trace;
  trace.round = round;
  trace.global_before = read_checkpoint(dir / "global_before.ckpt");
  trace.global_after = read_checkpoint(dir / "global_after.ckpt");
  for (std::size_t k = 0;; ++k) {
    const fs::path p = dir / ("local_" + std::to_string(k) + ".ckpt");
    if (!fs::exists(p)) break;
    trace.locals.push_back(read_checkpoint(p));
  }
  if (trace.locals.empty()) {
    throw NotFound("round " + std::to_string(round) + " has no local models");
  }
  return trace;
}

}  // namespace fedbias
