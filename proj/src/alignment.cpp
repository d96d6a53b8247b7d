#include "alnp3/alignment.hpp"

#include <cmath>
#include <cstring>

#include "alnp3/bytes.hpp"

namespace alnp3::align {

using namespace ad;

namespace {

constexpr std::uint64_t kAlignStream = 0xA11C0DE5EEDull;

Tensor normalize_rows(const Tensor& z) {
  Tensor norms = add_scalar(l2_norm(z), kNormEpsilon);
  return div(z, nn::repeat_cols(norms, z.cols()));
}

Tensor identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor::constant({n, n}, std::move(v));
}

}  // namespace

TextEmbedder::TextEmbedder(std::size_t vocab_size, std::size_t dim, std::uint64_t seed)
    : vocab_(vocab_size), dim_(dim), table_(vocab_size * dim) {
  if (vocab_size == 0 || dim == 0) throw ContractError("text embedder: empty table");
  Rng rng(seed);
  for (auto& x : table_) x = rng.normal();
}

Tensor TextEmbedder::embed(const std::vector<Token>& tokens) const {
  if (tokens.empty()) throw ContractError("text_embed: empty token sequence");
  std::vector<double> acc(dim_, 0.0);
  for (Token t : tokens) {
    if (t >= vocab_) throw ContractError("text_embed: unknown token index " + std::to_string(t));
    for (std::size_t j = 0; j < dim_; ++j) acc[j] += table_[t * dim_ + j];
  }
  double norm = 0.0;
  for (double x : acc) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw DomainError("text_embed: zero-norm embedding");
  for (auto& x : acc) x /= norm;
  return Tensor::constant({1, dim_}, std::move(acc));
}

Tensor TextEmbedder::embed_all(const std::vector<std::vector<Token>>& sequences) const {
  if (sequences.empty()) throw ContractError("text_embed: no sequences");
  std::vector<Tensor> rows;
  rows.reserve(sequences.size());
  for (const auto& s : sequences) rows.push_back(embed(s));
  return concat_rows(rows);
}

std::vector<double> TextEmbedder::row(Token t) const {
  if (t >= vocab_) throw ContractError("text_embed: unknown token index " + std::to_string(t));
  return {table_.begin() + static_cast<std::ptrdiff_t>(t * dim_), table_.begin() + static_cast<std::ptrdiff_t>((t + 1) * dim_)};
}

std::uint64_t TextEmbedder::fingerprint() const {
  std::vector<std::uint8_t> raw(table_.size() * sizeof(double));
  std::memcpy(raw.data(), table_.data(), raw.size());
  return bytes::fnv1a(raw);
}

Tensor pool_weights(const Tensor& bank, const Tensor& projected) {
  if (bank.dim() != 2 || projected.dim() != 2 || projected.cols() != bank.cols())
    throw ShapeError("attention_pool: shape mismatch " + shape_str(projected.shape()) + " vs " +
                     shape_str(bank.shape()));
  return softmax(matmul(projected, transpose(bank)));
}

Tensor attention_pool(const Tensor& bank, const Tensor& projected) {
  return matmul(pool_weights(bank, projected), bank);
}

Tensor attention_pool(const Tensor& bank, const Tensor& features, const nn::FeedForward& phi) {
  if (phi.out() != bank.cols())
    throw ShapeError("attention_pool: head width " + std::to_string(phi.out()) + " vs bank " + shape_str(bank.shape()));
  return attention_pool(bank, phi(features));
}

Tensor clip_loss(const Tensor& za, const Tensor& zb, double tau) {
  if (!(tau > 0.0)) throw ContractError("clip_loss: temperature must be positive");
  if (za.dim() != 2 || za.shape() != zb.shape())
    throw ShapeError("clip_loss: shape mismatch " + shape_str(za.shape()) + " vs " + shape_str(zb.shape()));
  const std::size_t n = za.shape()[0];
  Tensor s = scale(matmul(normalize_rows(za), transpose(normalize_rows(zb))), 1.0 / tau);
  const Tensor eye = identity(n);
  Tensor a_to_b = sum(mul(log_softmax(s), eye));
  Tensor b_to_a = sum(mul(log_softmax(transpose(s)), eye));
  return scale(add(a_to_b, b_to_a), -0.5 / static_cast<double>(n));
}

Tensor negative_cosine(const Tensor& a, const Tensor& b) {
  if (a.dim() != 2 || a.shape()[0] != 1 || a.shape() != b.shape())
    throw ShapeError("negative_cosine: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor na = l2_norm(a);
  Tensor nb = l2_norm(b);
  if (na.item() == 0.0 || nb.item() == 0.0) throw DomainError("negative_cosine: zero-norm embedding");
  Tensor denom = mul(add_scalar(na, kNormEpsilon), add_scalar(nb, kNormEpsilon));
  return scale(div(sum(mul(a, b)), denom), -1.0);
}

AlignmentCore::AlignmentCore(nn::ParameterSet& params, const ModelConfig& mc, const world::WorldConfig& wc,
                             std::size_t vocab_size, std::uint64_t seed)
    : mc_(mc) {
  Rng rng(seed ^ kAlignStream);
  const std::size_t traj = 2 * wc.future_steps;
  const std::size_t h = mc.head_hidden;
  bank_.p2 = params.normal("align.p2", {mc.bank_size, mc.bank_dim}, rng, 1.0);
  bank_.p3 = params.normal("align.p3", {mc.bank_size, mc.bank_dim}, rng, 1.0);
  bank_.phi_p1 = nn::make_feed_forward(params, "align.phi_p1", mc.d_lang, h, mc.text_dim, rng);
  bank_.phi_pred = nn::make_feed_forward(params, "align.phi_pred", traj, h, mc.bank_dim, rng, mc.head_gain);
  bank_.phi_llm2 = nn::make_feed_forward(params, "align.phi_llm2", vocab_size, h, mc.bank_dim, rng, mc.head_gain);
  bank_.phi_plan = nn::make_feed_forward(params, "align.phi_plan", traj, h, mc.bank_dim, rng, mc.head_gain);
  bank_.phi_llm3 = nn::make_feed_forward(params, "align.phi_llm3", vocab_size, h, mc.bank_dim, rng, mc.head_gain);
  // Distinct output offsets keep the two sides off the bank mean at init.
  for (auto* phi : {&bank_.phi_pred, &bank_.phi_llm2, &bank_.phi_plan, &bank_.phi_llm3})
    for (auto& b : phi->outer.bias->mutable_values()) b = mc.head_bias_std * rng.normal();
}

Tensor AlignmentCore::p1a_loss(const Tensor& q_instance, const std::vector<std::vector<Token>>& captions,
                               const TextEmbedder& embedder) const {
  if (q_instance.dim() != 2 || q_instance.shape()[0] != captions.size())
    throw ContractError("p1a_loss: " + std::to_string(q_instance.dim() == 2 ? q_instance.shape()[0] : 0) +
                        " instances vs " + std::to_string(captions.size()) + " captions");
  Tensor target = embedder.embed_all(captions);
  return mean(square(sub(bank_.phi_p1(q_instance), target)));
}

Tensor AlignmentCore::pred_embedding(const Tensor& v_agents) const {
  return attention_pool(bank_.p2, scale(v_agents, mc_.position_scale), bank_.phi_pred);
}

Tensor AlignmentCore::llm2_embedding(const std::vector<Tensor>& answer_logits) const {
  std::vector<Tensor> rows;
  rows.reserve(answer_logits.size());
  for (const auto& l : answer_logits) rows.push_back(nn::mean_rows(l));
  return attention_pool(bank_.p2, scale(concat_rows(rows), mc_.logit_scale), bank_.phi_llm2);
}

Tensor AlignmentCore::p2a_loss(const Tensor& v_agents, const std::vector<Tensor>& answer_logits, double tau) const {
  if (!(tau > 0.0)) throw ContractError("p2a_loss: temperature must be positive");
  if (v_agents.dim() != 2 || answer_logits.empty() || v_agents.shape()[0] != answer_logits.size())
    throw ContractError("p2a_loss: " + std::to_string(v_agents.dim() == 2 ? v_agents.shape()[0] : 0) +
                        " agents vs " + std::to_string(answer_logits.size()) + " prediction samples");
  return clip_loss(pred_embedding(v_agents), llm2_embedding(answer_logits), tau);
}

PlanEmbeddings AlignmentCore::plan_embeddings(const Tensor& v_ego, const Tensor& answer_logits) const {
  if (v_ego.dim() != 2 || v_ego.shape()[0] != 1)
    throw ContractError("p3a_loss: expected one ego plan, got " + shape_str(v_ego.shape()));
  PlanEmbeddings e;
  e.z_plan = attention_pool(bank_.p3, scale(v_ego, mc_.position_scale), bank_.phi_plan);
  e.z_llm = attention_pool(bank_.p3, scale(nn::mean_rows(answer_logits), mc_.logit_scale), bank_.phi_llm3);
  return e;
}

Tensor AlignmentCore::p3a_loss(const Tensor& v_ego, const Tensor& answer_logits) const {
  auto e = plan_embeddings(v_ego, answer_logits);
  return negative_cosine(e.z_plan, e.z_llm);
}

ActiveLosses route(world::Category category) {
  ActiveLosses a;
  switch (category) {
    case world::Category::Perception: a.p1a = true; return a;
    case world::Category::Prediction: a.p2a = true; return a;
    case world::Category::Planning: a.p3a = true; return a;
  }
  throw ContractError("route: unknown category " + std::to_string(static_cast<int>(category)));
}

}  // namespace alnp3::align
