#include "fedbias/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "fedbias/errors.hpp"

namespace fedbias {

namespace {

constexpr std::string_view kHeaderPrefix = "dims=";

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const MlpModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out << kHeaderPrefix;
  for (std::size_t i = 0; i < model.dims().size(); ++i) {
    if (i > 0) out << ',';
    out << model.dims()[i];
  }
  out << '\n';
  std::vector<char> bytes(model.num_params() * 8);
  for (std::size_t i = 0; i < model.num_params(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(model.params()[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

MlpModel read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("checkpoint not found: " + path.string());
  std::string header;
  std::getline(in, header);
  if (header.rfind(kHeaderPrefix, 0) != 0) {
    throw IoError("malformed checkpoint header in " + path.string());
  }
  std::vector<std::size_t> dims;
  std::stringstream ss(header.substr(kHeaderPrefix.size()));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      dims.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw IoError("malformed checkpoint dims in " + path.string());
    }
  }
  MlpModel model(dims);
  std::vector<char> bytes(model.num_params() * 8);
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()) || in.peek() != EOF) {
    throw IoError("checkpoint payload length does not match dims: " + path.string());
  }
  for (std::size_t i = 0; i < model.num_params(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    }
    model.params()[i] = std::bit_cast<double>(bits);
  }
  return model;
}

}  // namespace fedbias
