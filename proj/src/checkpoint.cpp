#include "alnp3/checkpoint.hpp"

#include <algorithm>

#include "alnp3/bytes.hpp"

namespace alnp3::checkpoint {

namespace {

constexpr char kMagic[] = "ALNT";

}  // namespace

TensorMap snapshot(const nn::ParameterSet& params) {
  TensorMap out;
  for (const auto& [name, t] : params.all()) {
    auto v = t.values();
    out.emplace(name, Entry{t.shape(), std::vector<double>(v.begin(), v.end())});
  }
  return out;
}

std::vector<std::uint8_t> encode(const TensorMap& tensors) {
  bytes::Writer w;
  w.raw(std::string_view(kMagic, 4));
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, e] : tensors) {
    if (shape_numel(e.shape) != e.values.size())
      throw ShapeError("checkpoint: tensor '" + name + "' has " + std::to_string(e.values.size()) +
                       " values for shape " + shape_str(e.shape));
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name);
    w.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) w.u64(d);
    for (double x : e.values) w.f64(x);
  }
  return std::move(w.buffer());
}

TensorMap decode(std::span<const std::uint8_t> data) {
  bytes::Reader r(data);
  if (r.str(4) != std::string_view(kMagic, 4)) throw IoError("checkpoint: bad magic");
  const auto version = r.u16();
  if (version != kFormatVersion) throw IoError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = r.u32();
  TensorMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    Entry e;
    const auto rank = r.u32();
    if (rank == 0 || rank > 8) throw IoError("checkpoint: tensor '" + name + "' has bad rank");
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.u64();
      if (d == 0 || d > (1u << 24)) throw IoError("checkpoint: tensor '" + name + "' has bad extent");
      e.shape.push_back(static_cast<std::size_t>(d));
    }
    const std::size_t n = shape_numel(e.shape);
    if (n > r.remaining() / 8) throw IoError("truncated input");
    e.values.resize(n);
    for (auto& x : e.values) x = r.f64();
    if (!out.emplace(std::move(name), std::move(e)).second) throw IoError("checkpoint: duplicate tensor name");
  }
  if (!r.done()) throw IoError("checkpoint: trailing bytes");
  return out;
}

void save(const nn::ParameterSet& params, const std::filesystem::path& path) {
  bytes::write_file(path, encode(snapshot(params)));
}

TensorMap load(const std::filesystem::path& path) { return decode(bytes::read_file(path)); }

void restore(nn::ParameterSet& params, const TensorMap& tensors) {
  for (const auto& [name, e] : tensors)
    if (!params.contains(name)) throw ContractError("checkpoint: unexpected tensor '" + name + "'");
  for (auto& [name, t] : params.all()) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ContractError("checkpoint: missing tensor '" + name + "'");
    if (it->second.shape != t.shape())
      throw ShapeError("checkpoint: tensor '" + name + "' shape mismatch " + shape_str(it->second.shape) + " vs " +
                       shape_str(t.shape()));
    auto dst = t.mutable_values();
    std::copy(it->second.values.begin(), it->second.values.end(), dst.begin());
  }
}

}  // namespace alnp3::checkpoint
