#pragma once

// The low-latency perception / prediction / planning pipeline.
//
// Query i is hard-assigned to agent i: its "slot" is the BEV cell holding the
// agent's current position. Trajectories are rows of 2*T_f values laid out
// x1 y1 x2 y2 ..., decoded as cumulative per-step displacements added to the
// last observed position.

#include <utility>
#include <vector>

#include "alnp3/model_config.hpp"
#include "alnp3/nn.hpp"
#include "alnp3/world.hpp"

namespace alnp3 {

using ad::Tensor;

struct StackTokens {
  Tensor q_track;   // N_a x D_q
  Tensor q_motion;  // N_a x D_q
  Tensor q_ego;     // 1 x D_q, after planning attention
};

struct Trajectories {
  Tensor v_agents;  // N_a x 2T_f
  Tensor v_ego;     // 1 x 2T_f
};

// Constant per-scene inputs besides the BEV grid.
struct SceneInputs {
  std::vector<std::size_t> slots;  // BEV cell per agent
  Tensor agent_last;               // N_a x 2T_f, current position tiled
  Tensor ego_kinematics;           // 1 x 4: vx, vy, ax, ay (m/s, m/s^2)
  Tensor ego_last;                 // 1 x 2T_f
};

SceneInputs scene_inputs(const world::Scene& scene, const world::WorldConfig& wc);

struct StackOutput {
  Tensor bev;
  StackTokens tokens;
  Trajectories traj;
};

class FastStack {
 public:
  FastStack(nn::ParameterSet& params, const ModelConfig& mc, const world::WorldConfig& wc, Rng& rng);

  // bev: grid x grid x 4.
  Tensor perceive(const Tensor& bev, const std::vector<std::size_t>& slots) const;
  // Same on an explicit cell list: cells M x 4 raw channels, positions M x 2
  // normalized cell-centre codes.
  Tensor perceive_cells(const Tensor& cells, const Tensor& positions, const std::vector<std::size_t>& slots) const;

  // Returns (q_motion, v_agents).
  std::pair<Tensor, Tensor> predict(const Tensor& q_track, const Tensor& agent_last) const;

  Tensor ego_query(const Tensor& ego_kinematics) const;
  // Returns (updated ego token, v_ego).
  std::pair<Tensor, Tensor> plan(const Tensor& q_ego, const Tensor& q_motion, const Tensor& bev,
                                 const Tensor& ego_last) const;

  StackOutput forward(const world::Scene& scene) const;
  StackOutput forward(const Tensor& bev, const SceneInputs& in) const;

  // M x 2 normalized cell-centre coordinates in row-major cell order.
  const Tensor& cell_positions() const { return cell_positions_; }
  // Average pooling matrix (K_b x M).
  const Tensor& pool_matrix() const { return pool_matrix_; }

 private:
  Tensor cell_features(const Tensor& cells, const Tensor& positions) const;
  Tensor decode_offsets(const Tensor& steps, const Tensor& last) const;

  ModelConfig mc_;
  world::WorldConfig wc_;

  // perception
  Tensor base_queries_;  // max_agents x D_q
  nn::Linear slot_embed_, track_q_, track_k_, track_v_;
  nn::FeedForward track_ffn_;
  // prediction
  nn::Linear motion_q_, motion_k_, motion_v_, motion_o_;
  nn::FeedForward motion_ffn_;
  nn::Linear motion_head_;
  // planning
  Tensor ego_base_;
  nn::Linear ego_embed_, pooled_embed_, plan_q_, plan_k_, plan_v_;
  nn::FeedForward plan_ffn_;
  nn::Linear plan_head_;

  Tensor cell_positions_;
  Tensor pool_matrix_;
  Tensor feature_scale_;  // 4 x 4 diagonal channel scaling
  Tensor occupancy_pick_; // 4 x 1
  Tensor cumulative_;     // 2T_f x 2T_f
};

// Average squared Euclidean distance over every predicted point (agents and
// ego pooled). Zero iff predictions match exactly.
Tensor stack_task_loss(const Trajectories& traj, const world::Scene& scene);

// 2T_f row of a track, for loss targets.
std::vector<double> flatten_points(const std::vector<world::Vec2>& pts);

// 2-D BEV average pooling matrix (K_b x M) for a grid and window.
Tensor make_pool_matrix(std::size_t grid, std::size_t window);

}  // namespace alnp3
