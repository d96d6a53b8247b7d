#pragma once

// Cross-modal alignment between the driving stack and the language head:
// a frozen text embedder, learnable prompt banks with attention pooling,
// and the perception (MSE), prediction (contrastive) and planning (cosine)
// alignment losses with their category router.

#include <cstdint>
#include <vector>

#include "alnp3/model_config.hpp"
#include "alnp3/nn.hpp"
#include "alnp3/vocab.hpp"
#include "alnp3/world.hpp"

namespace alnp3::align {

using ad::Tensor;
using vocab::Token;

inline constexpr double kNormEpsilon = 1e-12;
inline constexpr std::uint64_t kTextEmbedderSeed = 0x7E47E3BEDull;

// Frozen bag-of-tokens text embedding: unit-norm mean of table rows.
class TextEmbedder {
 public:
  TextEmbedder(std::size_t vocab_size, std::size_t dim, std::uint64_t seed = kTextEmbedderSeed);

  // 1 x D constant.
  Tensor embed(const std::vector<Token>& tokens) const;
  // One row per sequence.
  Tensor embed_all(const std::vector<std::vector<Token>>& sequences) const;

  std::size_t dim() const { return dim_; }
  std::size_t vocab_size() const { return vocab_; }
  // Raw table row of one token.
  std::vector<double> row(Token t) const;
  std::uint64_t fingerprint() const;

 private:
  std::size_t vocab_;
  std::size_t dim_;
  std::vector<double> table_;
};

// Softmax weights (rows x N) of already projected features against the bank.
Tensor pool_weights(const Tensor& bank, const Tensor& projected);
// Pool already projected rows: softmax(projected . bank^T) . bank.
Tensor attention_pool(const Tensor& bank, const Tensor& projected);
// Pool raw feature rows through the projection head phi.
Tensor attention_pool(const Tensor& bank, const Tensor& features, const nn::FeedForward& phi);

// Symmetric InfoNCE over the cosine similarity matrix of matched rows.
Tensor clip_loss(const Tensor& za, const Tensor& zb, double tau);

// -(a . b) / ((|a| + eps)(|b| + eps)) for two 1 x D rows. A norm that is
// exactly zero is a domain error.
Tensor negative_cosine(const Tensor& a, const Tensor& b);

struct PromptBank {
  Tensor p2;  // N2 x D2
  Tensor p3;  // N3 x D3
  nn::FeedForward phi_p1, phi_pred, phi_llm2, phi_plan, phi_llm3;
};

struct PlanEmbeddings {
  Tensor z_plan;  // 1 x D3
  Tensor z_llm;   // 1 x D3
};

class AlignmentCore {
 public:
  // Registers every tensor under "align." drawn from its own seeded stream.
  AlignmentCore(nn::ParameterSet& params, const ModelConfig& mc, const world::WorldConfig& wc,
                std::size_t vocab_size, std::uint64_t seed);

  // Element-mean squared error between phi_p1(q_instance) and the caption
  // embeddings (one caption per row).
  Tensor p1a_loss(const Tensor& q_instance, const std::vector<std::vector<Token>>& captions,
                  const TextEmbedder& embedder) const;

  // v_agents: N_a x 2T_f; answer_logits[k]: L_k x V teacher-forced logits of agent k.
  Tensor p2a_loss(const Tensor& v_agents, const std::vector<Tensor>& answer_logits, double tau) const;
  Tensor pred_embedding(const Tensor& v_agents) const;
  Tensor llm2_embedding(const std::vector<Tensor>& answer_logits) const;

  // v_ego: 1 x 2T_f; answer_logits: L x V.
  PlanEmbeddings plan_embeddings(const Tensor& v_ego, const Tensor& answer_logits) const;
  Tensor p3a_loss(const Tensor& v_ego, const Tensor& answer_logits) const;

  const PromptBank& bank() const { return bank_; }

 private:
  ModelConfig mc_;
  PromptBank bank_;
};

struct ActiveLosses {
  bool lm = true;
  bool p1a = false;
  bool p2a = false;
  bool p3a = false;
};

ActiveLosses route(world::Category category);

}  // namespace alnp3::align
