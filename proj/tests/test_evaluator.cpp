#include <gtest/gtest.h>

#include <cmath>

#include "alnp3/errors.hpp"
#include "alnp3/evaluator.hpp"
#include "alnp3/rng.hpp"

using namespace alnp3;
using namespace alnp3::eval;
using world::Vec2;

namespace {

std::vector<const world::Scene*> pointers(const std::vector<world::Scene>& scenes) {
  std::vector<const world::Scene*> out;
  for (const auto& s : scenes) out.push_back(&s);
  return out;
}

// Squared distances against squared reach, scanning agents outermost.
bool oracle_collides(const std::vector<Vec2>& plan, const world::Scene& s, const world::WorldConfig& wc,
                     std::size_t steps) {
  bool hit = false;
  for (const auto& a : s.agents) {
    const double reach = wc.ego_radius + wc.radius[static_cast<std::size_t>(a.cls)];
    for (std::size_t t = 0; t < steps; ++t) {
      const double dx = plan[t].x - a.future_gt[t].x, dy = plan[t].y - a.future_gt[t].y;
      hit = hit || dx * dx + dy * dy <= reach * reach;
    }
  }
  return hit;
}

const corpus::Corpus& small_corpus() {
  static const corpus::Corpus c = corpus::make_dataset({{corpus::Split::Val, 900, 903}}, 2);
  return c;
}

}  // namespace

TEST(Collision, GroundTruthPlanIsCollisionFree) {
  std::vector<world::Scene> scenes;
  std::vector<std::vector<Vec2>> plans;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    scenes.push_back(world::generate_scene(seed, 6));
    plans.push_back(scenes.back().ego_future_gt);
  }
  const auto r = collision_rate(plans, pointers(scenes), world::WorldConfig{});
  for (double v : r.by_horizon) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(r.avg, 0.0);
}

TEST(Collision, PlanOnAnAgentAtStepTwoCountsAtOneSecond) {
  const world::WorldConfig wc;
  std::vector<world::Scene> scenes{world::generate_scene(3, 4), world::generate_scene(4, 4)};
  std::vector<std::vector<Vec2>> plans{scenes[0].ego_future_gt, scenes[1].ego_future_gt};
  plans[0][1] = scenes[0].agents[2].future_gt[1];
  const auto r = collision_rate(plans, pointers(scenes), wc);
  EXPECT_EQ(r.by_horizon[0], 0.5);
  EXPECT_EQ(r.by_horizon[1], 0.5);
  EXPECT_EQ(r.by_horizon[2], 0.5);
  EXPECT_EQ(r.avg, 0.5);
  EXPECT_TRUE(collides(plans[0], scenes[0], wc, 2));
  EXPECT_FALSE(collides(plans[0], scenes[0], wc, 1));
}

TEST(Collision, MatchesBruteForceOracle) {
  const world::WorldConfig wc;
  Rng rng(77);
  std::vector<world::Scene> scenes;
  std::vector<std::vector<Vec2>> plans;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    scenes.push_back(world::generate_scene(1000 + seed, 1 + seed % 8));
    const auto& target = scenes.back().agents[rng.below(scenes.back().agents.size())];
    std::vector<Vec2> plan;
    for (std::size_t t = 0; t < wc.future_steps; ++t)
      plan.push_back({target.future_gt[t].x + rng.uniform(-4.0, 4.0), target.future_gt[t].y + rng.uniform(-4.0, 4.0)});
    plans.push_back(plan);
  }
  const auto r = collision_rate(plans, pointers(scenes), wc);
  double sum = 0.0;
  for (std::size_t h = 0; h < 3; ++h) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < scenes.size(); ++i) hits += oracle_collides(plans[i], scenes[i], wc, kHorizonSteps[h]);
    EXPECT_EQ(r.by_horizon[h], static_cast<double>(hits) / 50.0);
    sum += r.by_horizon[h];
  }
  EXPECT_GT(r.avg, 0.0);
  EXPECT_LT(r.avg, 1.0);
  EXPECT_EQ(r.avg, sum / 3.0);
}

TEST(Collision, HorizonBeyondPlanIsContractError) {
  const world::WorldConfig wc;
  std::vector<world::Scene> scenes{world::generate_scene(1, 2)};
  std::vector<std::vector<Vec2>> plans{scenes[0].ego_future_gt};
  EXPECT_THROW(collision_rate(plans, pointers(scenes), wc, {2, 4, 7}), ContractError);
  EXPECT_THROW(collides(plans[0], scenes[0], wc, 7), ContractError);
  EXPECT_THROW(collision_rate({}, pointers(scenes), wc), ContractError);
}

TEST(Bleu, IdenticalCorpusScoresOne) {
  const std::vector<std::vector<vocab::Token>> s{{5, 6, 7, 8, 9}, {10, 11, 12, 13}};
  EXPECT_NEAR(bleu4(s, s), 1.0, 1e-15);
}

TEST(Bleu, NoFourGramOverlapIsSmall) {
  std::vector<std::vector<vocab::Token>> c, r;
  for (int i = 0; i < 5; ++i) {
    c.push_back({});
    r.push_back({});
    for (vocab::Token t = 0; t < 20; ++t) {
      c.back().push_back(t % 2 ? 5 : 6);
      r.back().push_back(t % 2 ? 7 : 5);
    }
  }
  EXPECT_LT(bleu4(c, r), 0.1);
}

TEST(Bleu, HandComputedThreeSentenceCorpus) {
  const std::vector<std::vector<vocab::Token>> cand{{1, 2, 3, 4, 5}, {7, 8, 9}, {1, 1, 1}};
  const std::vector<std::vector<vocab::Token>> ref{{1, 2, 3, 4, 6}, {7, 8, 9, 10}, {1, 2, 1}};
  // Clipped matches / totals: 1-grams 9/11, 2-grams 5/8, 3-grams 3/5, 4-grams 1/2.
  // Candidate length 11, reference length 12.
  const double p1 = 9.0 / 11.0, p2 = 6.0 / 9.0, p3 = 4.0 / 6.0, p4 = 2.0 / 3.0;
  const double expected = std::exp(1.0 - 12.0 / 11.0) * std::pow(p1 * p2 * p3 * p4, 0.25);
  EXPECT_NEAR(bleu4(cand, ref), expected, 1e-9);
}

TEST(Bleu, Errors) {
  EXPECT_THROW(bleu4({}, {}), ContractError);
  EXPECT_THROW(bleu4({{1}}, {{1}, {2}}), ContractError);
  EXPECT_THROW(bleu4({{1}}, {{}}), ContractError);
}

TEST(QaAccuracy, ArithmeticOnConstructedSet) {
  std::vector<QaOutcome> outcomes;
  for (int i = 0; i < 10; ++i) outcomes.push_back({world::Hop::H0, i < 6});
  for (int i = 0; i < 10; ++i) outcomes.push_back({world::Hop::H1, i < 4});
  const auto a = qa_accuracy(outcomes);
  EXPECT_DOUBLE_EQ(a.h0, 0.6);
  EXPECT_DOUBLE_EQ(a.h1, 0.4);
  EXPECT_DOUBLE_EQ(a.all, 0.5);
}

TEST(QaAccuracy, AllRightAndAllWrong) {
  std::vector<QaOutcome> right, wrong;
  for (int i = 0; i < 7; ++i) {
    right.push_back({i % 2 ? world::Hop::H1 : world::Hop::H0, true});
    wrong.push_back({i % 2 ? world::Hop::H1 : world::Hop::H0, false});
  }
  const auto r = qa_accuracy(right), w = qa_accuracy(wrong);
  EXPECT_EQ(r.h0, 1.0);
  EXPECT_EQ(r.h1, 1.0);
  EXPECT_EQ(r.all, 1.0);
  EXPECT_EQ(w.all, 0.0);
  EXPECT_EQ(qa_accuracy(std::vector<QaOutcome>{}).all, 0.0);
}

TEST(Consistency, SingleRowBanksGiveOne) {
  ModelConfig mc;
  mc.bank_size = 1;
  const auto scenes = small_corpus().split(corpus::Split::Val);
  Model with(mc, small_corpus().config, 5, true);
  Model without(mc, small_corpus().config, 5, false);
  EXPECT_NEAR(consistency_probe(with, scenes, 0), 1.0, 1e-9);
  EXPECT_NEAR(consistency_probe(without, scenes, 9), 1.0, 1e-9);
}

TEST(Consistency, InRangeAndSeededForModelsWithoutBanks) {
  const auto scenes = small_corpus().split(corpus::Split::Val);
  Model without(ModelConfig{}, small_corpus().config, 5, false);
  const double a = consistency_probe(without, scenes, 3);
  EXPECT_EQ(a, consistency_probe(without, scenes, 3));
  EXPECT_GE(a, -1.0);
  EXPECT_LE(a, 1.0);
}

TEST(Evaluate, IsSideEffectFreeAndInRange) {
  const auto scenes = small_corpus().split(corpus::Split::Val);
  Model m(ModelConfig{}, small_corpus().config, 2, true);
  const auto before = m.checkpoint_bytes();
  const auto a = evaluate(m, scenes, 0);
  const auto b = evaluate(m, scenes, 0);
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(m.checkpoint_bytes(), before);
  EXPECT_EQ(a.n_scenes, 3u);
  for (double v : {a.collision.avg, a.bleu4, a.qa.h0, a.qa.h1, a.qa.all}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(a.collision.avg, (a.collision.by_horizon[0] + a.collision.by_horizon[1] + a.collision.by_horizon[2]) / 3.0);
}

TEST(Evaluate, JsonRoundTrip) {
  EvalReport r;
  r.collision = {{0.25, 0.5, 0.75}, 0.5};
  r.bleu4 = 0.125;
  r.qa = {0.6, 0.4, 0.5};
  r.consistency = -0.3;
  r.n_scenes = 16;
  const std::string text = to_json(r);
  for (const char* key : {"collision_rate", "\"1s\"", "\"2s\"", "\"3s\"", "\"avg\"", "bleu4", "qa_acc", "\"H0\"",
                          "\"H1\"", "\"All\"", "consistency", "n_scenes"})
    EXPECT_NE(text.find(key), std::string::npos) << key;
  EXPECT_EQ(to_json(report_from_json(text)), text);
  EXPECT_THROW(report_from_json("{}"), IoError);
}
