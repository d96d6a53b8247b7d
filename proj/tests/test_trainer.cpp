#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

#include "alnp3/config.hpp"
#include "alnp3/errors.hpp"
#include "alnp3/trainer.hpp"

using namespace alnp3;
using namespace alnp3::train;

namespace {

const corpus::Corpus& small_corpus() {
  static const corpus::Corpus c =
      corpus::make_dataset({{corpus::Split::Train, 0, 6}, {corpus::Split::Val, 500, 502}}, 2);
  return c;
}

TrainConfig small_config(std::size_t steps) {
  TrainConfig cfg;
  cfg.n_agents = 2;
  cfg.steps = steps;
  cfg.learning_rate = 1e-3;
  return cfg;
}

class ThreadsEnv {
 public:
  explicit ThreadsEnv(const char* value) {
    if (const char* old = std::getenv("ALNP3_THREADS")) saved_ = old;
    ::setenv("ALNP3_THREADS", value, 1);
  }
  ~ThreadsEnv() {
    if (saved_.empty())
      ::unsetenv("ALNP3_THREADS");
    else
      ::setenv("ALNP3_THREADS", saved_.c_str(), 1);
  }

 private:
  std::string saved_;
};

}  // namespace

TEST(Train, ZeroStepsKeepsInitialization) {
  auto r = train::train(small_corpus(), small_config(0));
  EXPECT_TRUE(r.reports.empty());
  EXPECT_EQ(r.model.checkpoint_bytes(), r.initial_checkpoint);
  Model fresh(ModelConfig{}, small_corpus().config, 0, true);
  EXPECT_EQ(fresh.checkpoint_bytes(), r.initial_checkpoint);
  EXPECT_EQ(r.initial.task, r.final.task);
}

TEST(Train, SameSeedIsBitwiseIdentical) {
  auto a = train::train(small_corpus(), small_config(6), {}, false);
  auto b = train::train(small_corpus(), small_config(6), {}, false);
  EXPECT_EQ(a.model.checkpoint_bytes(), b.model.checkpoint_bytes());
  for (std::size_t s = 0; s < 6; ++s) EXPECT_EQ(to_json_line(a.reports[s]), to_json_line(b.reports[s]));
  auto cfg = small_config(6);
  cfg.seed = 1;
  auto c = train::train(small_corpus(), cfg, {}, false);
  EXPECT_NE(a.model.checkpoint_bytes(), c.model.checkpoint_bytes());
}

TEST(Train, ThreadedGradientsMatchSerial) {
  auto serial = train::train(small_corpus(), small_config(4), {}, false);
  ThreadsEnv env("2");
  EXPECT_EQ(worker_threads(), 2u);
  auto threaded = train::train(small_corpus(), small_config(4), {}, false);
  EXPECT_EQ(serial.model.checkpoint_bytes(), threaded.model.checkpoint_bytes());
}

TEST(Train, BadThreadCountIsRejected) {
  ThreadsEnv env("zero");
  EXPECT_THROW(worker_threads(), ContractError);
}

TEST(Train, TotalRecomposesEveryStep) {
  auto cfg = small_config(8);
  cfg.loss_weights[Loss::Lm] = 0.5;
  cfg.loss_weights[Loss::P2a] = 2.0;
  std::size_t seen = 0;
  auto r = train::train(small_corpus(), cfg, [&](const StepReport& rep) {
    double total = 0.0;
    for (std::size_t i = 0; i < kNumLosses; ++i) total += cfg.loss_weights.w[i] * rep.losses[i];
    EXPECT_NEAR(rep.total, total, 1e-9);
    EXPECT_TRUE(std::isfinite(rep.grad_norm));
    ++seen;
  }, false);
  EXPECT_EQ(seen, 8u);
}

TEST(Train, EachAlignmentLossFiresOncePerBatch) {
  auto r = train::train(small_corpus(), small_config(3), {}, false);
  for (const auto& rep : r.reports) {
    EXPECT_EQ(rep.active[static_cast<std::size_t>(Loss::Task)], 4u);
    EXPECT_EQ(rep.active[static_cast<std::size_t>(Loss::Lm)], 4u);
    EXPECT_EQ(rep.active[static_cast<std::size_t>(Loss::P1a)], 1u);
    EXPECT_EQ(rep.active[static_cast<std::size_t>(Loss::P2a)], 1u);
    EXPECT_EQ(rep.active[static_cast<std::size_t>(Loss::P3a)], 1u);
  }
}

TEST(Train, NoAlignmentArmNeverFiresAlignmentLosses) {
  auto cfg = small_config(3);
  cfg.align_enabled = false;
  auto r = train::train(small_corpus(), cfg, {}, false);
  for (const auto& rep : r.reports)
    for (Loss l : {Loss::P1a, Loss::P2a, Loss::P3a}) {
      EXPECT_EQ(rep.active[static_cast<std::size_t>(l)], 0u);
      EXPECT_EQ(rep.losses[static_cast<std::size_t>(l)], 0.0);
    }
  for (const auto& [name, t] : r.model.params().all()) EXPECT_FALSE(is_alignment_tensor(name)) << name;
}

TEST(Train, ArmsShareStepZeroTaskAndLanguageLoss) {
  auto on = small_config(1);
  auto off = small_config(1);
  off.align_enabled = false;
  auto a = train::train(small_corpus(), on);
  auto b = train::train(small_corpus(), off);
  EXPECT_EQ(a.reports[0].losses[static_cast<std::size_t>(Loss::Task)],
            b.reports[0].losses[static_cast<std::size_t>(Loss::Task)]);
  EXPECT_EQ(a.reports[0].losses[static_cast<std::size_t>(Loss::Lm)],
            b.reports[0].losses[static_cast<std::size_t>(Loss::Lm)]);
  EXPECT_EQ(a.initial.task, b.initial.task);
  EXPECT_EQ(a.initial.lm, b.initial.lm);
}

TEST(Train, AgentCountMismatchIsContractError) {
  auto cfg = small_config(1);
  cfg.n_agents = 3;
  EXPECT_THROW(train::train(small_corpus(), cfg), ContractError);
  corpus::Corpus val_only = corpus::make_dataset({{corpus::Split::Val, 0, 2}}, 2);
  EXPECT_THROW(train::train(val_only, small_config(1)), ContractError);
}

TEST(Train, SceneObjectiveNeedsAlignmentModules) {
  Model m(ModelConfig{}, small_corpus().config, 0, false);
  EXPECT_THROW(scene_objective(m, small_corpus().scenes[0], SampleKind::Planning, 0, small_config(1)), ContractError);
}

TEST(Train, SampleKindsCycle) {
  EXPECT_EQ(sample_kind(0, 4, 0), SampleKind::Perception);
  EXPECT_EQ(sample_kind(0, 4, 3), SampleKind::QA);
  EXPECT_EQ(sample_kind(1, 3, 0), SampleKind::QA);
  EXPECT_EQ(sample_kind(1, 3, 2), SampleKind::Prediction);
}

TEST(Train, LossesFallOnATinyCorpus) {
  auto r = train::train(small_corpus(), small_config(40));
  EXPECT_LT(r.final.task, r.initial.task);
  EXPECT_LT(r.final.lm, r.initial.lm);
}

TEST(Adam, MatchesHandComputedUpdates) {
  nn::ParameterSet p;
  p.add("x", {2}, {1.0, -2.0});
  Adam adam;
  adam.lr = 0.1;
  const std::vector<std::vector<double>> g1{{0.5, -1.0}}, g2{{0.25, 2.0}};
  adam.step(p, g1);
  // Step 1: m = 0.1 g, v = 0.001 g^2, bias-corrected m/sqrt(v) = sign(g).
  EXPECT_NEAR(p.get("x").at(0), 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p.get("x").at(1), -2.0 + 0.1 * 1.0 / (1.0 + 1e-8), 1e-15);
  const double x0 = p.get("x").at(0);
  adam.step(p, g2);
  const double m = (0.9 * 0.05 + 0.1 * 0.25) / (1 - 0.81);
  const double v = (0.999 * 0.001 * 0.25 + 0.001 * 0.0625) / (1 - 0.999 * 0.999);
  EXPECT_NEAR(p.get("x").at(0), x0 - 0.1 * m / (std::sqrt(v) + 1e-8), 1e-14);
  EXPECT_THROW(adam.step(p, {}), ContractError);
}

TEST(StepReport, JsonLineHasEveryField) {
  StepReport r;
  r.step = 3;
  r.losses = {1, 2, 3, 4, 5};
  r.total = 15;
  r.grad_norm = 0.5;
  const std::string line = to_json_line(r);
  for (const char* key : {"\"step\":3", "\"task\"", "\"lm\"", "\"p1a\"", "\"p2a\"", "\"p3a\"", "\"total\"", "\"grad_norm\""})
    EXPECT_NE(line.find(key), std::string::npos) << key;
  EXPECT_EQ(line.find('\n'), std::string::npos);
}
