#pragma once

// The full model: fast driving stack, slow language head and, optionally,
// the alignment banks and heads. Parameters live in one ParameterSet.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>

#include "alnp3/alignment.hpp"
#include "alnp3/checkpoint.hpp"
#include "alnp3/fast_stack.hpp"
#include "alnp3/slow_head.hpp"

namespace alnp3 {

class Model {
 public:
  Model(const ModelConfig& mc, const world::WorldConfig& wc, std::uint64_t seed, bool with_alignment);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const FastStack& fast() const { return *fast_; }
  const SlowHead& slow() const { return *slow_; }

  bool has_alignment() const { return align_.has_value(); }
  const align::AlignmentCore& alignment() const;
  // Adds freshly initialized alignment tensors to a model without them.
  void attach_alignment(std::uint64_t seed);

  const align::TextEmbedder& text_embedder() const { return *embedder_; }

  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  const ModelConfig& model_config() const { return mc_; }
  const world::WorldConfig& world_config() const { return wc_; }

  void save(const std::filesystem::path& path) const;
  std::vector<std::uint8_t> checkpoint_bytes() const;
  // Alignment is present iff the container holds "align." tensors.
  static Model from_tensors(const checkpoint::TensorMap& tensors, const ModelConfig& mc = {},
                            const world::WorldConfig& wc = {});
  static Model load(const std::filesystem::path& path, const ModelConfig& mc = {},
                    const world::WorldConfig& wc = {});

 private:
  ModelConfig mc_;
  world::WorldConfig wc_;
  nn::ParameterSet params_;
  std::unique_ptr<FastStack> fast_;
  std::unique_ptr<SlowHead> slow_;
  std::optional<align::AlignmentCore> align_;
  std::shared_ptr<const align::TextEmbedder> embedder_;
};

bool is_alignment_tensor(const std::string& name);

}  // namespace alnp3
