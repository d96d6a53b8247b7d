#include "alnp3/fast_stack.hpp"

#include <numeric>

namespace alnp3 {

using namespace ad;

namespace {

constexpr std::size_t kChannels = 4;
constexpr std::size_t kFeatures = 6;  // 4 channels + gated 2-D position code

}  // namespace

std::vector<double> flatten_points(const std::vector<world::Vec2>& pts) {
  std::vector<double> out;
  out.reserve(2 * pts.size());
  for (const auto& p : pts) {
    out.push_back(p.x);
    out.push_back(p.y);
  }
  return out;
}

Tensor make_pool_matrix(std::size_t grid, std::size_t window) {
  if (window == 0 || grid % window != 0) throw ContractError("pool window must divide the grid size");
  const std::size_t g = grid / window;
  const std::size_t cells = grid * grid;
  std::vector<double> m(g * g * cells, 0.0);
  const double w = 1.0 / static_cast<double>(window * window);
  for (std::size_t i = 0; i < grid; ++i)
    for (std::size_t j = 0; j < grid; ++j) {
      const std::size_t patch = (i / window) * g + (j / window);
      m[patch * cells + i * grid + j] = w;
    }
  return Tensor::constant({g * g, cells}, std::move(m));
}

SceneInputs scene_inputs(const world::Scene& scene, const world::WorldConfig& wc) {
  const std::size_t tf = wc.future_steps;
  SceneInputs in;
  std::vector<double> last;
  for (const auto& a : scene.agents) {
    const auto cell = world::cell_index(a.past.back(), wc);
    if (!cell) throw ContractError("fast stack: agent " + std::to_string(a.id) + " is outside the BEV grid");
    in.slots.push_back(*cell);
    for (std::size_t t = 0; t < tf; ++t) {
      last.push_back(a.past.back().x);
      last.push_back(a.past.back().y);
    }
  }
  if (!scene.agents.empty()) in.agent_last = Tensor::constant({scene.agents.size(), 2 * tf}, std::move(last));

  const auto& ep = scene.ego_past;
  const world::Vec2 v = world::current_velocity(ep, wc.dt);
  world::Vec2 a{};
  if (ep.size() >= 3) {
    const world::Vec2 vp = world::current_velocity({ep[ep.size() - 3], ep[ep.size() - 2]}, wc.dt);
    a = {(v.x - vp.x) / wc.dt, (v.y - vp.y) / wc.dt};
  }
  in.ego_kinematics = Tensor::constant({1, 4}, {v.x, v.y, a.x, a.y});
  std::vector<double> ego_last;
  for (std::size_t t = 0; t < tf; ++t) {
    ego_last.push_back(ep.back().x);
    ego_last.push_back(ep.back().y);
  }
  in.ego_last = Tensor::constant({1, 2 * tf}, std::move(ego_last));
  return in;
}

FastStack::FastStack(nn::ParameterSet& params, const ModelConfig& mc, const world::WorldConfig& wc, Rng& rng)
    : mc_(mc), wc_(wc) {
  const std::size_t d = mc.d_query;
  const std::size_t out = 2 * wc.future_steps;

  base_queries_ = params.normal("fast.track.queries", {wc.max_agents, d}, rng, 0.1);
  slot_embed_ = nn::make_linear(params, "fast.track.slot", kFeatures, d, rng, false);
  track_q_ = nn::make_linear(params, "fast.track.q", d, d, rng, false);
  track_k_ = nn::make_linear(params, "fast.track.k", kFeatures, d, rng, false);
  track_v_ = nn::make_linear(params, "fast.track.v", kFeatures, d, rng, false);
  track_ffn_ = nn::make_feed_forward(params, "fast.track.ffn", 2 * d, d, d, rng);

  motion_q_ = nn::make_linear(params, "fast.motion.q", d, d, rng, false);
  motion_k_ = nn::make_linear(params, "fast.motion.k", d, d, rng, false);
  motion_v_ = nn::make_linear(params, "fast.motion.v", d, d, rng, false);
  motion_o_ = nn::make_linear(params, "fast.motion.o", d, d, rng);
  motion_ffn_ = nn::make_feed_forward(params, "fast.motion.ffn", d, mc.ffn_hidden, d, rng);
  motion_head_ = nn::make_linear(params, "fast.motion.head", d, out, rng, true, 0.1);

  ego_base_ = params.normal("fast.plan.ego", {1, d}, rng, 0.1);
  ego_embed_ = nn::make_linear(params, "fast.plan.kin", 4, d, rng, false);
  pooled_embed_ = nn::make_linear(params, "fast.plan.bev", kFeatures, d, rng, false);
  plan_q_ = nn::make_linear(params, "fast.plan.q", d, d, rng, false);
  plan_k_ = nn::make_linear(params, "fast.plan.k", d, d, rng, false);
  plan_v_ = nn::make_linear(params, "fast.plan.v", d, d, rng, false);
  plan_ffn_ = nn::make_feed_forward(params, "fast.plan.ffn", d, mc.ffn_hidden, d, rng);
  plan_head_ = nn::make_linear(params, "fast.plan.head", d, out, rng, true, 0.1);

  const std::size_t g = wc.grid;
  std::vector<double> pos(g * g * 2);
  const double half = wc.half_extent();
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = 0; j < g; ++j) {
      pos[(i * g + j) * 2] = (-half + (static_cast<double>(i) + 0.5) * wc.cell) / half;
      pos[(i * g + j) * 2 + 1] = (-half + (static_cast<double>(j) + 0.5) * wc.cell) / half;
    }
  cell_positions_ = Tensor::constant({g * g, 2}, std::move(pos));
  pool_matrix_ = make_pool_matrix(g, mc.pool);

  const double vs = mc.velocity_scale;
  feature_scale_ = Tensor::constant({4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, vs, 0, 0, 0, 0, vs});
  occupancy_pick_ = Tensor::constant({4, 1}, {1, 0, 0, 0});

  std::vector<double> cum(out * out, 0.0);
  for (std::size_t s = 0; s < wc.future_steps; ++s)
    for (std::size_t t = s; t < wc.future_steps; ++t)
      for (std::size_t c = 0; c < 2; ++c) cum[(2 * s + c) * out + 2 * t + c] = 1.0;
  cumulative_ = Tensor::constant({out, out}, std::move(cum));
}

Tensor FastStack::cell_features(const Tensor& cells, const Tensor& positions) const {
  if (cells.dim() != 2 || cells.cols() != kChannels || positions.dim() != 2 || positions.cols() != 2 ||
      positions.rows() != cells.rows())
    throw ShapeError("perceive: shape mismatch " + shape_str(cells.shape()) + " vs " + shape_str(positions.shape()));
  Tensor scaled = matmul(cells, feature_scale_);
  Tensor occupancy = matmul(cells, occupancy_pick_);
  Tensor gated = mul(nn::repeat_cols(occupancy, 2), positions);
  return concat({scaled, gated});
}

Tensor FastStack::perceive_cells(const Tensor& cells, const Tensor& positions,
                                 const std::vector<std::size_t>& slots) const {
  if (slots.empty() || slots.size() > wc_.max_agents)
    throw ContractError("perceive: agent count must be in [1, " + std::to_string(wc_.max_agents) + "]");
  Tensor feats = cell_features(cells, positions);
  Tensor slot_feats = gather_rows(feats, slots);
  Tensor h = slot_embed_(slot_feats);
  std::vector<std::size_t> idx(slots.size());
  std::iota(idx.begin(), idx.end(), 0);
  Tensor queries = add(gather_rows(base_queries_, idx), h);
  Tensor attn = nn::attend(track_q_(queries), track_k_(feats), track_v_(feats));
  return track_ffn_(concat({attn, h}));
}

Tensor FastStack::perceive(const Tensor& bev, const std::vector<std::size_t>& slots) const {
  const Shape expected{wc_.grid, wc_.grid, kChannels};
  if (bev.shape() != expected) throw ShapeError("perceive: shape mismatch " + shape_str(bev.shape()) + " vs " + shape_str(expected));
  return perceive_cells(reshape(bev, {wc_.grid * wc_.grid, kChannels}), cell_positions_, slots);
}

Tensor FastStack::decode_offsets(const Tensor& steps, const Tensor& last) const {
  return add(matmul(scale(steps, mc_.trajectory_scale), cumulative_), last);
}

std::pair<Tensor, Tensor> FastStack::predict(const Tensor& q_track, const Tensor& agent_last) const {
  if (q_track.dim() != 2 || q_track.cols() != mc_.d_query)
    throw ShapeError("predict: shape mismatch " + shape_str(q_track.shape()) + " vs [N," + std::to_string(mc_.d_query) + "]");
  Tensor a = nn::attend(motion_q_(q_track), motion_k_(q_track), motion_v_(q_track));
  Tensor m = add(q_track, motion_o_(a));
  Tensor q_motion = add(m, motion_ffn_(m));
  return {q_motion, decode_offsets(motion_head_(q_motion), agent_last)};
}

Tensor FastStack::ego_query(const Tensor& ego_kinematics) const {
  return add(ego_base_, ego_embed_(scale(ego_kinematics, mc_.velocity_scale)));
}

std::pair<Tensor, Tensor> FastStack::plan(const Tensor& q_ego, const Tensor& q_motion, const Tensor& bev,
                                          const Tensor& ego_last) const {
  Tensor feats = cell_features(reshape(bev, {wc_.grid * wc_.grid, kChannels}), cell_positions_);
  Tensor pooled = pooled_embed_(matmul(pool_matrix_, feats));
  Tensor memory = concat_rows({q_motion, pooled});
  Tensor a = nn::attend(plan_q_(q_ego), plan_k_(memory), plan_v_(memory));
  Tensor e = add(q_ego, a);
  Tensor e2 = add(e, plan_ffn_(e));
  return {e2, decode_offsets(plan_head_(e2), ego_last)};
}

StackOutput FastStack::forward(const Tensor& bev, const SceneInputs& in) const {
  StackOutput out;
  out.bev = bev;
  out.tokens.q_track = perceive(bev, in.slots);
  auto [q_motion, v_agents] = predict(out.tokens.q_track, in.agent_last);
  out.tokens.q_motion = q_motion;
  out.traj.v_agents = v_agents;
  auto [q_ego, v_ego] = plan(ego_query(in.ego_kinematics), q_motion, bev, in.ego_last);
  out.tokens.q_ego = q_ego;
  out.traj.v_ego = v_ego;
  return out;
}

StackOutput FastStack::forward(const world::Scene& scene) const {
  return forward(world::render_bev(scene, wc_), scene_inputs(scene, wc_));
}

Tensor stack_task_loss(const Trajectories& traj, const world::Scene& scene) {
  const std::size_t n = scene.agents.size();
  if (traj.v_agents.dim() != 2 || traj.v_agents.shape()[0] != n)
    throw ContractError("stack_task_loss: " + std::to_string(traj.v_agents.dim() == 2 ? traj.v_agents.shape()[0] : 0) +
                        " predicted agents vs " + std::to_string(n) + " in scene");
  std::vector<double> gt;
  for (const auto& a : scene.agents) {
    auto row = flatten_points(a.future_gt);
    gt.insert(gt.end(), row.begin(), row.end());
  }
  if (gt.size() != traj.v_agents.numel())
    throw ShapeError("stack_task_loss: shape mismatch " + shape_str(traj.v_agents.shape()) + " vs ground truth");
  auto ego_gt = flatten_points(scene.ego_future_gt);
  if (ego_gt.size() != traj.v_ego.numel())
    throw ShapeError("stack_task_loss: shape mismatch " + shape_str(traj.v_ego.shape()) + " vs ego ground truth");

  Tensor agent_sq = sum(square(sub(traj.v_agents, Tensor::constant(traj.v_agents.shape(), std::move(gt)))));
  Tensor ego_sq = sum(square(sub(traj.v_ego, Tensor::constant(traj.v_ego.shape(), std::move(ego_gt)))));
  const double points = static_cast<double>(traj.v_agents.numel() + traj.v_ego.numel()) / 2.0;
  return scale(add(agent_sq, ego_sq), 1.0 / points);
}

}  // namespace alnp3
