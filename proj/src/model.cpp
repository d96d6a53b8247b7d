#include "alnp3/model.hpp"

#include <algorithm>

namespace alnp3 {

bool is_alignment_tensor(const std::string& name) { return name.rfind("align.", 0) == 0; }

Model::Model(const ModelConfig& mc, const world::WorldConfig& wc, std::uint64_t seed, bool with_alignment)
    : mc_(mc), wc_(wc) {
  Rng rng(seed);
  fast_ = std::make_unique<FastStack>(params_, mc_, wc_, rng);
  slow_ = std::make_unique<SlowHead>(params_, mc_, wc_, rng);
  embedder_ = std::make_shared<const align::TextEmbedder>(vocab::size(), mc_.text_dim);
  if (with_alignment) attach_alignment(seed);
}

const align::AlignmentCore& Model::alignment() const {
  if (!align_) throw ContractError("model has no alignment modules");
  return *align_;
}

void Model::attach_alignment(std::uint64_t seed) {
  if (align_) throw ContractError("model already has alignment modules");
  align_.emplace(params_, mc_, wc_, vocab::size(), seed);
}

std::vector<std::uint8_t> Model::checkpoint_bytes() const { return checkpoint::encode(checkpoint::snapshot(params_)); }

void Model::save(const std::filesystem::path& path) const { checkpoint::save(params_, path); }

Model Model::from_tensors(const checkpoint::TensorMap& tensors, const ModelConfig& mc, const world::WorldConfig& wc) {
  const bool with_align =
      std::any_of(tensors.begin(), tensors.end(), [](const auto& kv) { return is_alignment_tensor(kv.first); });
  Model m(mc, wc, 0, with_align);
  checkpoint::restore(m.params_, tensors);
  return m;
}

Model Model::load(const std::filesystem::path& path, const ModelConfig& mc, const world::WorldConfig& wc) {
  return from_tensors(checkpoint::load(path), mc, wc);
}

}  // namespace alnp3
