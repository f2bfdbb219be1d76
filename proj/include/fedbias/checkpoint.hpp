#pragma once

#include <filesystem>

#include "fedbias/nn.hpp"

namespace fedbias {

// Checkpoint format: an ASCII header line `dims=<d0,d1,...>\n` followed by the
// flattened parameters as little-endian IEEE-754 64-bit floats.
void write_checkpoint(const std::filesystem::path& path, const MlpModel& model);
MlpModel read_checkpoint(const std::filesystem::path& path);

}  // namespace fedbias
