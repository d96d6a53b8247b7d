#pragma once

// Language side: the token mixer projecting driving context into the
// language width, and a small causal decoder conditioned on that context
// through cross-attention.

#include <vector>

#include "alnp3/fast_stack.hpp"
#include "alnp3/vocab.hpp"

namespace alnp3 {

using vocab::Token;

struct DrivingContext {
  Tensor b_ctx;       // K_b x D_l, pooled BEV patches
  Tensor q_instance;  // N_a x D_l, fused track + motion per agent
  Tensor q_ego_ctx;   // 1 x D_l
  Tensor v_plan_ctx;  // 1 x D_l, projected ego plan

  // All rows stacked for cross-attention.
  Tensor rows() const;
};

struct DecoderOutput {
  Tensor logits;              // generated length x V
  std::vector<Token> tokens;  // greedy picks, EOS included when emitted
};

class SlowHead {
 public:
  SlowHead(nn::ParameterSet& params, const ModelConfig& mc, const world::WorldConfig& wc, Rng& rng);

  DrivingContext token_mixer(const Tensor& bev, const Tensor& q_track, const Tensor& q_motion, const Tensor& q_ego,
                             const Tensor& v_ego) const;
  DrivingContext token_mixer(const StackOutput& stack) const;

  // Logits for every position of `sequence` (len x V), causal.
  Tensor forward_tokens(const std::vector<Token>& sequence, const Tensor& context_rows) const;

  // Logits predicting each target token given the prompt and the preceding
  // target tokens (target.size() x V).
  Tensor teacher_forced(const std::vector<Token>& prompt, const std::vector<Token>& target,
                        const DrivingContext& ctx) const;

  // Greedy decoding until EOS or max_len tokens.
  DecoderOutput decode(const std::vector<Token>& prompt, const DrivingContext& ctx, std::size_t max_len) const;

  std::size_t vocab_size() const { return vocab_; }

 private:
  struct Layer {
    nn::Linear self_q, self_k, self_v, self_o;
    nn::Linear cross_q, cross_k, cross_v, cross_o;
    nn::FeedForward ffn;
  };

  ModelConfig mc_;
  world::WorldConfig wc_;
  std::size_t vocab_;

  nn::FeedForward instance_ffn_;
  nn::Linear bev_proj_, ego_proj_, plan_proj_;
  Tensor pool_matrix_;

  Tensor token_embed_;     // V x D_l
  Tensor position_embed_;  // max_positions x D_l
  std::vector<Layer> layers_;
  nn::Linear out_;
};

// Mean token-level cross-entropy of logits (L x V) against L target tokens.
Tensor lm_loss(const Tensor& logits, const std::vector<Token>& target);

}  // namespace alnp3
