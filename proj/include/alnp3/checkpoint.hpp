#pragma once

// Named-tensor container shared by every model component.
//
// Layout (little-endian): "ALNT", u16 version, u32 tensor count, then per
// tensor in name order: u32 name length, name bytes, u32 rank, u64 extents,
// f64 values in row-major order.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "alnp3/nn.hpp"

namespace alnp3::checkpoint {

inline constexpr std::uint16_t kFormatVersion = 1;

struct Entry {
  Shape shape;
  std::vector<double> values;
  bool operator==(const Entry&) const = default;
};

using TensorMap = std::map<std::string, Entry>;

TensorMap snapshot(const nn::ParameterSet& params);
std::vector<std::uint8_t> encode(const TensorMap& tensors);
TensorMap decode(std::span<const std::uint8_t> data);

void save(const nn::ParameterSet& params, const std::filesystem::path& path);
TensorMap load(const std::filesystem::path& path);

// Overwrites every leaf of params from tensors; names and shapes must match
// exactly in both directions.
void restore(nn::ParameterSet& params, const TensorMap& tensors);

}  // namespace alnp3::checkpoint
