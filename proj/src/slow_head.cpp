#include "alnp3/slow_head.hpp"

#include <algorithm>
#include <numeric>

namespace alnp3 {

using namespace ad;

Tensor DrivingContext::rows() const { return concat_rows({b_ctx, q_instance, q_ego_ctx, v_plan_ctx}); }

SlowHead::SlowHead(nn::ParameterSet& params, const ModelConfig& mc, const world::WorldConfig& wc, Rng& rng)
    : mc_(mc), wc_(wc), vocab_(vocab::size()) {
  const std::size_t d = mc.d_lang;
  instance_ffn_ = nn::make_feed_forward(params, "slow.mixer.instance", 2 * mc.d_query, d, d, rng);
  bev_proj_ = nn::make_linear(params, "slow.mixer.bev", 4, d, rng);
  ego_proj_ = nn::make_linear(params, "slow.mixer.ego", mc.d_query, d, rng);
  plan_proj_ = nn::make_linear(params, "slow.mixer.plan", 2 * wc.future_steps, d, rng);
  pool_matrix_ = make_pool_matrix(wc.grid, mc.pool);

  token_embed_ = params.normal("slow.decoder.tokens", {vocab_, d}, rng, 0.5);
  position_embed_ = params.normal("slow.decoder.positions", {mc.max_positions, d}, rng, 0.1);
  for (std::size_t l = 0; l < mc.decoder_layers; ++l) {
    const std::string p = "slow.decoder.layer" + std::to_string(l);
    Layer layer;
    layer.self_q = nn::make_linear(params, p + ".self.q", d, d, rng, false);
    layer.self_k = nn::make_linear(params, p + ".self.k", d, d, rng, false);
    layer.self_v = nn::make_linear(params, p + ".self.v", d, d, rng, false);
    layer.self_o = nn::make_linear(params, p + ".self.o", d, d, rng, true, 0.5);
    layer.cross_q = nn::make_linear(params, p + ".cross.q", d, d, rng, false);
    layer.cross_k = nn::make_linear(params, p + ".cross.k", d, d, rng, false);
    layer.cross_v = nn::make_linear(params, p + ".cross.v", d, d, rng, false);
    layer.cross_o = nn::make_linear(params, p + ".cross.o", d, d, rng, true, 0.5);
    layer.ffn = nn::make_feed_forward(params, p + ".ffn", d, mc.ffn_hidden, d, rng, 0.5);
    layers_.push_back(std::move(layer));
  }
  out_ = nn::make_linear(params, "slow.decoder.out", d, vocab_, rng);
}

DrivingContext SlowHead::token_mixer(const Tensor& bev, const Tensor& q_track, const Tensor& q_motion,
                                     const Tensor& q_ego, const Tensor& v_ego) const {
  if (q_track.shape() != q_motion.shape())
    throw ShapeError("token_mixer: shape mismatch " + shape_str(q_track.shape()) + " vs " + shape_str(q_motion.shape()));
  const Shape grid{wc_.grid, wc_.grid, 4};
  if (bev.shape() != grid) throw ShapeError("token_mixer: shape mismatch " + shape_str(bev.shape()) + " vs " + shape_str(grid));
  DrivingContext ctx;
  ctx.q_instance = instance_ffn_(concat({q_track, q_motion}));
  ctx.b_ctx = bev_proj_(matmul(pool_matrix_, reshape(bev, {wc_.grid * wc_.grid, 4})));
  ctx.q_ego_ctx = ego_proj_(q_ego);
  ctx.v_plan_ctx = plan_proj_(scale(v_ego, mc_.position_scale));
  return ctx;
}

DrivingContext SlowHead::token_mixer(const StackOutput& s) const {
  return token_mixer(s.bev, s.tokens.q_track, s.tokens.q_motion, s.tokens.q_ego, s.traj.v_ego);
}

Tensor SlowHead::forward_tokens(const std::vector<Token>& sequence, const Tensor& context_rows) const {
  const std::size_t n = sequence.size();
  if (n == 0) throw ContractError("decoder: empty sequence");
  if (n > mc_.max_positions)
    throw ContractError("decoder: sequence of " + std::to_string(n) + " exceeds " + std::to_string(mc_.max_positions) +
                        " positions");
  std::vector<std::size_t> ids;
  for (Token t : sequence) {
    if (!vocab::valid(t)) throw ContractError("decoder: unknown token index " + std::to_string(t));
    ids.push_back(t);
  }
  std::vector<std::size_t> pos(n);
  std::iota(pos.begin(), pos.end(), 0);

  Tensor h = add(gather_rows(token_embed_, ids), gather_rows(position_embed_, pos));
  const Tensor mask = nn::causal_mask(n);
  for (const auto& l : layers_) {
    h = add(h, l.self_o(nn::attend(l.self_q(h), l.self_k(h), l.self_v(h), &mask)));
    h = add(h, l.cross_o(nn::attend(l.cross_q(h), l.cross_k(context_rows), l.cross_v(context_rows))));
    h = add(h, l.ffn(h));
  }
  return out_(h);
}

Tensor SlowHead::teacher_forced(const std::vector<Token>& prompt, const std::vector<Token>& target,
                                const DrivingContext& ctx) const {
  if (prompt.empty() || target.empty()) throw ContractError("teacher_forced: prompt and target must be nonempty");
  std::vector<Token> seq = prompt;
  seq.insert(seq.end(), target.begin(), target.end() - 1);
  Tensor logits = forward_tokens(seq, ctx.rows());
  std::vector<std::size_t> rows(target.size());
  std::iota(rows.begin(), rows.end(), prompt.size() - 1);
  return gather_rows(logits, rows);
}

DecoderOutput SlowHead::decode(const std::vector<Token>& prompt, const DrivingContext& ctx, std::size_t max_len) const {
  if (prompt.empty()) throw ContractError("decode: empty prompt");
  if (max_len == 0) throw ContractError("decode: max_len must be at least 1");
  const Tensor rows = ctx.rows();
  std::vector<Token> seq = prompt;
  DecoderOutput out;
  std::vector<Tensor> picked;
  for (std::size_t step = 0; step < max_len && seq.size() <= mc_.max_positions; ++step) {
    Tensor logits = forward_tokens(seq, rows);
    Tensor last = gather_rows(logits, {seq.size() - 1});
    auto v = last.values();
    const Token best = static_cast<Token>(std::max_element(v.begin(), v.end()) - v.begin());
    picked.push_back(last);
    out.tokens.push_back(best);
    if (best == vocab::kEos) break;
    seq.push_back(best);
  }
  out.logits = concat_rows(picked);
  return out;
}

Tensor lm_loss(const Tensor& logits, const std::vector<Token>& target) {
  if (logits.dim() != 2 || logits.shape()[0] != target.size())
    throw ContractError("lm_loss: " + shape_str(logits.shape()) + " logits for " + std::to_string(target.size()) +
                        " target tokens");
  const std::size_t v = logits.cols();
  std::vector<double> onehot(logits.numel(), 0.0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] >= v) throw ContractError("lm_loss: target token out of range");
    onehot[i * v + target[i]] = 1.0;
  }
  Tensor picked = sum(mul(log_softmax(logits), Tensor::constant(logits.shape(), std::move(onehot))));
  return scale(picked, -1.0 / static_cast<double>(target.size()));
}

}  // namespace alnp3
