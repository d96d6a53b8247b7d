#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "alnp3/errors.hpp"
#include "alnp3/model.hpp"

using namespace alnp3;
using ad::Tensor;

namespace {

struct Stack {
  nn::ParameterSet params;
  std::unique_ptr<FastStack> fast;
  explicit Stack(std::uint64_t seed) {
    Rng rng(seed);
    fast = std::make_unique<FastStack>(params, ModelConfig{}, world::WorldConfig{}, rng);
  }
};

Tensor random_tensor(Shape shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor::constant(std::move(shape), std::move(v));
}

void zero_prefix(nn::ParameterSet& params, const std::string& prefix) {
  for (auto& [name, t] : params.all())
    if (name.rfind(prefix, 0) == 0) std::fill(t.mutable_values().begin(), t.mutable_values().end(), 0.0);
}

Trajectories ground_truth(const world::Scene& s, double dx = 0.0) {
  std::vector<double> agents, ego;
  for (const auto& a : s.agents)
    for (const auto& p : a.future_gt) {
      agents.push_back(p.x + dx);
      agents.push_back(p.y);
    }
  for (const auto& p : s.ego_future_gt) {
    ego.push_back(p.x + dx);
    ego.push_back(p.y);
  }
  const std::size_t n = s.agents.size();
  return {Tensor::constant({n, agents.size() / std::max<std::size_t>(n, 1)}, agents),
          Tensor::constant({1, ego.size()}, ego)};
}

}  // namespace

TEST(Perceive, ZeroBevGivesEqualRows) {
  Stack s(3);
  const Tensor bev = Tensor::zeros({32, 32, 4});
  const Tensor q = s.fast->perceive(bev, {5, 100, 700, 1023});
  ASSERT_EQ(q.shape(), (Shape{4, 32}));
  for (std::size_t r = 1; r < 4; ++r)
    for (std::size_t c = 0; c < 32; ++c) EXPECT_EQ(q.at(r, c), q.at(0, c));
}

TEST(Perceive, ShapeForEveryAgentCount) {
  Stack s(1);
  for (std::size_t n : {1u, 2u, 4u, 16u}) {
    const world::Scene scene = world::generate_scene(n, n);
    const auto out = s.fast->forward(scene);
    EXPECT_EQ(out.tokens.q_track.shape(), (Shape{n, 32}));
    EXPECT_EQ(out.tokens.q_motion.shape(), (Shape{n, 32}));
    EXPECT_EQ(out.tokens.q_ego.shape(), (Shape{1, 32}));
    EXPECT_EQ(out.traj.v_agents.shape(), (Shape{n, 12}));
    EXPECT_EQ(out.traj.v_ego.shape(), (Shape{1, 12}));
    for (double v : out.traj.v_agents.values()) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Perceive, BadBevShapeIsShapeError) {
  Stack s(1);
  EXPECT_THROW(s.fast->perceive(Tensor::zeros({16, 16, 4}), {0}), ShapeError);
  EXPECT_THROW(s.fast->perceive(Tensor::zeros({32, 32, 4}), {}), ContractError);
}

TEST(Perceive, CellOrderDoesNotMatter) {
  Stack s(9);
  Rng rng(21);
  const std::size_t m = 1024;
  const Tensor cells = random_tensor({m, 4}, rng);
  const Tensor& pos = s.fast->cell_positions();
  const std::vector<std::size_t> slots{17, 400, 901};

  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = m - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  std::vector<std::size_t> inverse(m);
  for (std::size_t k = 0; k < m; ++k) inverse[perm[k]] = k;
  std::vector<std::size_t> moved_slots;
  for (auto sl : slots) moved_slots.push_back(inverse[sl]);

  const Tensor a = s.fast->perceive_cells(cells, pos, slots);
  const Tensor b = s.fast->perceive_cells(ad::gather_rows(cells, perm), ad::gather_rows(pos, perm), moved_slots);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.at(i), b.at(i), 1e-9);
}

TEST(Predict, SingleAgentIsFinite) {
  Stack s(2);
  const world::Scene scene = world::generate_scene(12, 1);
  const auto out = s.fast->forward(scene);
  EXPECT_EQ(out.traj.v_agents.shape(), (Shape{1, 12}));
  for (double v : out.traj.v_agents.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Heads, ZeroHeadsHoldLastPositions) {
  Stack s(4);
  zero_prefix(s.params, "fast.motion.head.");
  zero_prefix(s.params, "fast.plan.head.");
  const world::Scene scene = world::generate_scene(31, 4);
  const auto out = s.fast->forward(scene);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t t = 0; t < 6; ++t) {
      EXPECT_EQ(out.traj.v_agents.at(a, 2 * t), scene.agents[a].past.back().x);
      EXPECT_EQ(out.traj.v_agents.at(a, 2 * t + 1), scene.agents[a].past.back().y);
    }
  for (std::size_t t = 0; t < 6; ++t) {
    EXPECT_EQ(out.traj.v_ego.at(0, 2 * t), scene.ego_past.back().x);
    EXPECT_EQ(out.traj.v_ego.at(0, 2 * t + 1), scene.ego_past.back().y);
  }
}

TEST(TaskLoss, ExactMatchIsZero) {
  const world::Scene scene = world::generate_scene(5, 3);
  EXPECT_EQ(stack_task_loss(ground_truth(scene), scene).item(), 0.0);
}

TEST(TaskLoss, UnitOffsetIsOne) {
  const world::Scene scene = world::generate_scene(5, 3);
  EXPECT_NEAR(stack_task_loss(ground_truth(scene, 1.0), scene).item(), 1.0, 1e-12);
}

TEST(TaskLoss, MatchesDirectMeanOfSquaredDistances) {
  Rng rng(8);
  const world::Scene scene = world::generate_scene(6, 4);
  const Trajectories t{random_tensor({4, 12}, rng), random_tensor({1, 12}, rng)};
  double total = 0.0;
  int points = 0;
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t k = 0; k < 6; ++k, ++points)
      total += std::pow(t.v_agents.at(a, 2 * k) - scene.agents[a].future_gt[k].x, 2) +
               std::pow(t.v_agents.at(a, 2 * k + 1) - scene.agents[a].future_gt[k].y, 2);
  for (std::size_t k = 0; k < 6; ++k, ++points)
    total += std::pow(t.v_ego.at(0, 2 * k) - scene.ego_future_gt[k].x, 2) +
             std::pow(t.v_ego.at(0, 2 * k + 1) - scene.ego_future_gt[k].y, 2);
  const double loss = stack_task_loss(t, scene).item();
  EXPECT_NEAR(loss, total / points, 1e-12);
  EXPECT_GE(loss, 0.0);
}

TEST(TaskLoss, SwappingAgentsWithTheirTruthIsSymmetric) {
  Rng rng(10);
  world::Scene scene = world::generate_scene(6, 4);
  const Tensor va = random_tensor({4, 12}, rng);
  const Tensor ve = random_tensor({1, 12}, rng);
  const double before = stack_task_loss({va, ve}, scene).item();
  std::swap(scene.agents[0], scene.agents[2]);
  const double after = stack_task_loss({ad::gather_rows(va, {2, 1, 0, 3}), ve}, scene).item();
  EXPECT_NEAR(before, after, 1e-12);
}

TEST(TaskLoss, AgentCountMismatchIsContractError) {
  const world::Scene scene = world::generate_scene(5, 3);
  const world::Scene other = world::generate_scene(5, 2);
  EXPECT_THROW(stack_task_loss(ground_truth(other), scene), ContractError);
}

TEST(TrainingOnly, NodeCountIdenticalWithAndWithoutAlignment) {
  const world::Scene scene = world::generate_scene(44, 4);
  Model with(ModelConfig{}, world::WorldConfig{}, 0, true);
  Model without(ModelConfig{}, world::WorldConfig{}, 0, false);
  std::size_t n_with = 0, n_without = 0;
  {
    ad::OpCounter c;
    with.fast().forward(scene);
    n_with = c.count();
  }
  {
    ad::OpCounter c;
    without.fast().forward(scene);
    n_without = c.count();
  }
  EXPECT_GT(n_with, 0u);
  EXPECT_EQ(n_with, n_without);
  const auto a = with.fast().forward(scene);
  const auto b = without.fast().forward(scene);
  EXPECT_TRUE(std::equal(a.traj.v_ego.values().begin(), a.traj.v_ego.values().end(), b.traj.v_ego.values().begin()));
}

TEST(Gradients, ReachEveryFastParameter) {
  Stack s(6);
  const world::Scene scene = world::generate_scene(70, 4);
  const auto out = s.fast->forward(scene);
  const auto g = ad::backward(stack_task_loss(out.traj, scene));
  for (const auto& [name, t] : s.params.all()) {
    double norm = 0.0;
    for (double v : g.values_of(t)) norm += v * v;
    EXPECT_GT(norm, 0.0) << name;
  }
}

TEST(Gradients, ReachTheBevInput) {
  Stack s(6);
  const world::Scene scene = world::generate_scene(70, 4);
  const Tensor raw = world::render_bev(scene);
  const Tensor bev = Tensor::parameter(raw.shape(), {raw.values().begin(), raw.values().end()});
  const auto out = s.fast->forward(bev, scene_inputs(scene, world::WorldConfig{}));
  const auto g = ad::backward(stack_task_loss(out.traj, scene));
  double norm = 0.0;
  for (double v : g.values_of(bev)) norm += v * v;
  EXPECT_GT(norm, 0.0);
}

TEST(PoolMatrix, RowsAverageTheirWindow) {
  const Tensor m = make_pool_matrix(8, 4);
  ASSERT_EQ(m.shape(), (Shape{4, 64}));
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 64; ++c) total += m.at(r, c);
    EXPECT_NEAR(total, 1.0, 1e-15);
  }
  EXPECT_THROW(make_pool_matrix(8, 3), ContractError);
}
