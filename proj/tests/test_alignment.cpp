#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "alnp3/corpus.hpp"
#include "alnp3/errors.hpp"
#include "alnp3/model.hpp"
#include "alnp3/trainer.hpp"
#include "constructions.hpp"

using namespace alnp3;
using namespace alnp3::align;
using ad::Tensor;
using alnp3::construct::ConstructedCore;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double sd = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = sd * rng.normal();
  return Tensor::constant(std::move(shape), std::move(v));
}

double group_norm(const ad::Gradients& g, const nn::ParameterSet& params, const std::vector<std::string>& prefixes) {
  double total = 0.0;
  for (const auto& [name, t] : params.all())
    for (const auto& p : prefixes)
      if (name.rfind(p, 0) == 0)
        for (double v : g.values_of(t)) total += v * v;
  return total;
}

const std::vector<std::string> kP1Group{"align.phi_p1."};
const std::vector<std::string> kP2Group{"align.p2", "align.phi_pred.", "align.phi_llm2."};
const std::vector<std::string> kP3Group{"align.p3", "align.phi_plan.", "align.phi_llm3."};

}  // namespace

TEST(TextEmbedder, UnitNorm) {
  const TextEmbedder e(vocab::size(), 32);
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<vocab::Token> toks(1 + rng.below(12));
    for (auto& t : toks) t = static_cast<vocab::Token>(rng.below(vocab::size()));
    const Tensor z = e.embed(toks);
    double n = 0.0;
    for (double v : z.values()) n += v * v;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-12);
  }
}

TEST(TextEmbedder, SingleTokenIsNormalizedRow) {
  const TextEmbedder e(vocab::size(), 32);
  const auto row = e.row(17);
  double n = 0.0;
  for (double v : row) n += v * v;
  n = std::sqrt(n);
  const Tensor z = e.embed({17});
  for (std::size_t j = 0; j < 32; ++j) EXPECT_NEAR(z.at(j), row[j] / n, 1e-15);
}

TEST(TextEmbedder, BagOfTokens) {
  const TextEmbedder e(vocab::size(), 32);
  const Tensor a = e.embed(vocab::encode("car about 20 meters front is moving"));
  const Tensor b = e.embed(vocab::encode("moving is front meters 20 about car"));
  for (std::size_t j = 0; j < 32; ++j) EXPECT_NEAR(a.at(j), b.at(j), 1e-15);
}

TEST(TextEmbedder, Errors) {
  const TextEmbedder e(vocab::size(), 32);
  EXPECT_THROW(e.embed({}), ContractError);
  EXPECT_THROW(e.embed({100000}), ContractError);
}

TEST(TextEmbedder, SeededAndStable) {
  EXPECT_EQ(TextEmbedder(vocab::size(), 32).fingerprint(), TextEmbedder(vocab::size(), 32).fingerprint());
  EXPECT_NE(TextEmbedder(vocab::size(), 32, 1).fingerprint(), TextEmbedder(vocab::size(), 32, 2).fingerprint());
}

TEST(P1a, ExactEmbeddingsGiveZero) {
  ConstructedCore c;
  const TextEmbedder e(vocab::size(), c.mc.text_dim);
  const auto caption = vocab::encode("barrier about 12 meters back left is not moving");
  const Tensor target = e.embed(caption);
  const auto& phi = c.bank().phi_p1;
  construct::fill(phi.outer.weight, 0.0);
  for (std::size_t j = 0; j < c.mc.text_dim; ++j) construct::set(*phi.outer.bias, j, target.at(j));
  Rng rng(3);
  const Tensor q = random_tensor({3, c.mc.d_lang}, rng);
  EXPECT_EQ(c.core->p1a_loss(q, {caption, caption, caption}, e).item(), 0.0);

  for (std::size_t j = 0; j < c.mc.text_dim; ++j) construct::set(*phi.outer.bias, j, target.at(j) + 1.0);
  EXPECT_NEAR(c.core->p1a_loss(q, {caption, caption, caption}, e).item(), 1.0, 1e-12);
}

TEST(P1a, CountMismatch) {
  ConstructedCore c;
  const TextEmbedder e(vocab::size(), c.mc.text_dim);
  EXPECT_THROW(c.core->p1a_loss(Tensor::zeros({2, 32}), {vocab::encode("car")}, e), ContractError);
}

TEST(P1a, GradientMatchesFiniteDifferences) {
  ConstructedCore c(5);
  const TextEmbedder e(vocab::size(), c.mc.text_dim);
  Rng rng(5);
  const std::vector<std::vector<vocab::Token>> caps{vocab::encode("car about 3 meters left is moving"),
                                                    vocab::encode("truck about 9 meters back is not moving")};
  const Tensor q0 = random_tensor({2, c.mc.d_lang}, rng);
  const Tensor q = Tensor::parameter(q0.shape(), {q0.values().begin(), q0.values().end()});
  const auto g = ad::backward(c.core->p1a_loss(q, caps, e));
  const Tensor num = ad::finite_diff_grad([&](const Tensor& x) { return c.core->p1a_loss(x, caps, e).item(); }, q0);
  const auto an = g.values_of(q);
  for (std::size_t i = 0; i < q0.numel(); ++i)
    EXPECT_LE(std::abs(an[i] - num.at(i)) / std::max(1.0, std::abs(an[i])), 1e-5);
}

TEST(AttentionPool, SingleRowBankReturnsThatRow) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor bank = random_tensor({1, 5}, rng);
    const Tensor out = attention_pool(bank, random_tensor({3, 5}, rng, 10.0));
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(out.at(r, j), bank.at(0, j));
  }
}

TEST(AttentionPool, ZeroProjectionGivesBankMean) {
  Rng rng(3);
  const Tensor bank = random_tensor({8, 4}, rng);
  const Tensor out = attention_pool(bank, Tensor::zeros({2, 4}));
  for (std::size_t j = 0; j < 4; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < 8; ++i) m += bank.at(i, j);
    EXPECT_NEAR(out.at(0, j), m / 8.0, 1e-15);
    EXPECT_NEAR(out.at(1, j), m / 8.0, 1e-15);
  }
}

TEST(AttentionPool, LogThreeExample) {
  const Tensor bank = Tensor::constant({2, 2}, {1, 0, 0, 1});
  const Tensor out = attention_pool(bank, Tensor::constant({1, 2}, {std::log(3.0), 0.0}));
  EXPECT_NEAR(out.at(0), 0.75, 1e-15);
  EXPECT_NEAR(out.at(1), 0.25, 1e-15);
}

TEST(AttentionPool, OutputsLieInTheConvexHull) {
  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(10), d = 1 + rng.below(8), rows = 1 + rng.below(4);
    const Tensor bank = random_tensor({n, d}, rng);
    const Tensor proj = random_tensor({rows, d}, rng, 3.0);
    const Tensor w = pool_weights(bank, proj);
    const Tensor out = attention_pool(bank, proj);
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        ASSERT_GE(w.at(r, i), 0.0);
        total += w.at(r, i);
      }
      ASSERT_NEAR(total, 1.0, 1e-12);
      for (std::size_t j = 0; j < d; ++j) {
        double rebuilt = 0.0;
        for (std::size_t i = 0; i < n; ++i) rebuilt += w.at(r, i) * bank.at(i, j);
        ASSERT_NEAR(out.at(r, j), rebuilt, 1e-9);
      }
    }
  }
}

TEST(AttentionPool, WidthMismatch) {
  EXPECT_THROW(attention_pool(Tensor::zeros({4, 3}), Tensor::zeros({1, 2})), ShapeError);
  ConstructedCore c;
  EXPECT_THROW(attention_pool(c.bank().p2, Tensor::zeros({1, 12}), c.bank().phi_p1), ShapeError);
}

TEST(Contrastive, MatchedOrthogonalPairs) {
  const Tensor z = Tensor::constant({2, 3}, {1, 0, 0, 0, 1, 0});
  EXPECT_NEAR(clip_loss(z, z, 1.0).item(), construct::expected_matched_pair_loss(), 1e-9);
  EXPECT_NEAR(construct::expected_matched_pair_loss(), 0.3132616875182228, 1e-15);
}

TEST(Contrastive, MatchedPairsThroughTheCore) {
  ConstructedCore c;
  const auto m = construct::matched_pair(c);
  const Tensor zp = c.core->pred_embedding(m.v_agents);
  const Tensor zl = c.core->llm2_embedding(m.logits);
  for (std::size_t j = 0; j < zp.numel(); ++j) EXPECT_EQ(zp.at(j), zl.at(j));
  EXPECT_EQ(zp.at(0, 0), 1.0);
  EXPECT_EQ(zp.at(1, 1), 1.0);
  EXPECT_NEAR(c.core->p2a_loss(m.v_agents, m.logits, 1.0).item(), construct::expected_matched_pair_loss(), 1e-9);
}

TEST(Contrastive, SingleAgentIsExactlyZero) {
  ConstructedCore c(2);
  Rng rng(6);
  const Tensor v = random_tensor({1, 12}, rng);
  EXPECT_EQ(c.core->p2a_loss(v, {random_tensor({4, vocab::size()}, rng)}, 0.07).item(), 0.0);
  EXPECT_EQ(clip_loss(random_tensor({1, 5}, rng), random_tensor({1, 5}, rng), 0.3).item(), 0.0);
}

TEST(Contrastive, JointPermutationInvariance) {
  ConstructedCore c(3);
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(5);
    const Tensor v = random_tensor({n, 12}, rng, 5.0);
    std::vector<Tensor> logits;
    for (std::size_t k = 0; k < n; ++k) logits.push_back(random_tensor({1 + rng.below(5), vocab::size()}, rng, 3.0));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    std::vector<Tensor> permuted;
    for (auto p : perm) permuted.push_back(logits[p]);
    const double a = c.core->p2a_loss(v, logits, 0.07).item();
    const double b = c.core->p2a_loss(ad::gather_rows(v, perm), permuted, 0.07).item();
    EXPECT_NEAR(a, b, 1e-12);
    EXPECT_GE(a, 0.0);
  }
}

TEST(Contrastive, Errors) {
  ConstructedCore c;
  Rng rng(8);
  const Tensor v = random_tensor({2, 12}, rng);
  const std::vector<Tensor> l{random_tensor({2, vocab::size()}, rng), random_tensor({2, vocab::size()}, rng)};
  EXPECT_THROW(c.core->p2a_loss(v, l, 0.0), ContractError);
  EXPECT_THROW(c.core->p2a_loss(v, l, -1.0), ContractError);
  EXPECT_THROW(c.core->p2a_loss(v, {l[0]}, 0.07), ContractError);
  EXPECT_THROW(clip_loss(Tensor::zeros({2, 3}), Tensor::zeros({3, 3}), 1.0), ShapeError);
}

TEST(Cosine, ConstructedRelations) {
  using construct::Relation;
  const std::pair<Relation, double> cases[] = {
      {Relation::Colinear, -1.0}, {Relation::Orthogonal, 0.0}, {Relation::AntiParallel, 1.0}};
  Rng rng(9);
  for (const auto& [rel, expected] : cases) {
    ConstructedCore c;
    construct::plan_construction(c, rel);
    const Tensor v_ego = random_tensor({1, 12}, rng);
    const Tensor logits = random_tensor({5, vocab::size()}, rng);
    EXPECT_NEAR(c.core->p3a_loss(v_ego, logits).item(), expected, 1e-9);
  }
}

TEST(Cosine, DirectValuesAndScaling) {
  const Tensor a = Tensor::constant({1, 3}, {1, 2, 3});
  const Tensor o = Tensor::constant({1, 3}, {3, 0, -1});
  EXPECT_NEAR(negative_cosine(a, a).item(), -1.0, 1e-9);
  EXPECT_NEAR(negative_cosine(a, o).item(), 0.0, 1e-9);
  EXPECT_NEAR(negative_cosine(a, ad::scale(a, -1.0)).item(), 1.0, 1e-9);
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor({1, 16}, rng), y = random_tensor({1, 16}, rng);
    const double base = negative_cosine(x, y).item();
    EXPECT_GE(base, -1.0);
    EXPECT_LE(base, 1.0);
    for (double s : {0.5, 2.0, 10.0}) {
      EXPECT_NEAR(negative_cosine(ad::scale(x, s), y).item(), base, 1e-9);
      EXPECT_NEAR(negative_cosine(x, ad::scale(y, s)).item(), base, 1e-9);
    }
  }
}

TEST(Cosine, ZeroNormIsDomainError) {
  EXPECT_THROW(negative_cosine(Tensor::zeros({1, 4}), Tensor::full({1, 4}, 1.0)), DomainError);
  EXPECT_THROW(negative_cosine(Tensor::zeros({1, 4}), Tensor::zeros({1, 3})), ShapeError);
}

TEST(Route, OneAlignmentLossPerCategory) {
  const auto p = route(world::Category::Perception);
  const auto r = route(world::Category::Prediction);
  const auto l = route(world::Category::Planning);
  EXPECT_TRUE(p.lm && p.p1a && !p.p2a && !p.p3a);
  EXPECT_TRUE(r.lm && !r.p1a && r.p2a && !r.p3a);
  EXPECT_TRUE(l.lm && !l.p1a && !l.p2a && l.p3a);
  EXPECT_THROW(route(static_cast<world::Category>(7)), ContractError);
}

class RoutingGradients : public ::testing::Test {
 protected:
  RoutingGradients()
      : model(ModelConfig{}, world::WorldConfig{}, 11, true),
        corpus(corpus::make_dataset({{corpus::Split::Train, 40, 41}}, 3)) {}

  std::array<double, 3> norms(train::SampleKind kind) {
    train::TrainConfig cfg;
    cfg.n_agents = 3;
    const auto obj = train::scene_objective(model, corpus.scenes[0], kind, 1, cfg);
    const auto g = ad::backward(obj.total);
    return {group_norm(g, model.params(), kP1Group), group_norm(g, model.params(), kP2Group),
            group_norm(g, model.params(), kP3Group)};
  }

  Model model;
  corpus::Corpus corpus;
};

TEST_F(RoutingGradients, PerceptionReachesOnlyTheCaptionHead) {
  const auto n = norms(train::SampleKind::Perception);
  EXPECT_GT(n[0], 0.0);
  EXPECT_EQ(n[1], 0.0);
  EXPECT_EQ(n[2], 0.0);
}

TEST_F(RoutingGradients, PredictionReachesOnlyThePredictionBank) {
  const auto n = norms(train::SampleKind::Prediction);
  EXPECT_EQ(n[0], 0.0);
  EXPECT_GT(n[1], 0.0);
  EXPECT_EQ(n[2], 0.0);
}

TEST_F(RoutingGradients, PlanningReachesOnlyThePlanningBank) {
  const auto n = norms(train::SampleKind::Planning);
  EXPECT_EQ(n[0], 0.0);
  EXPECT_EQ(n[1], 0.0);
  EXPECT_GT(n[2], 0.0);
}

TEST_F(RoutingGradients, QuestionsReachNoAlignmentTensor) {
  const auto n = norms(train::SampleKind::QA);
  EXPECT_EQ(n[0], 0.0);
  EXPECT_EQ(n[1], 0.0);
  EXPECT_EQ(n[2], 0.0);
}

TEST(AlignmentCore, TensorsLiveUnderTheirOwnPrefix) {
  Model m(ModelConfig{}, world::WorldConfig{}, 0, true);
  Model n(ModelConfig{}, world::WorldConfig{}, 0, false);
  std::size_t align_count = 0;
  for (const auto& [name, t] : m.params().all()) {
    if (is_alignment_tensor(name)) {
      ++align_count;
      EXPECT_FALSE(n.params().contains(name));
    } else {
      ASSERT_TRUE(n.params().contains(name));
      EXPECT_TRUE(std::equal(t.values().begin(), t.values().end(), n.params().get(name).values().begin())) << name;
    }
  }
  EXPECT_EQ(align_count, 2u + 5u * 4u);
  EXPECT_EQ(m.params().get("align.p2").shape(), (Shape{8, 16}));
}
