#pragma once

// Deterministic synthetic driving scenes.
//
// Frame: ego-centric bird's-eye view, x forward, y left, meters. The ego sits
// at the origin at the last observed step. Each scene follows one of three
// templates (clear-road cruise, red-light stop, pedestrian yield) and carries
// per-agent past and future tracks at a fixed step dt.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "alnp3/tensor.hpp"
#include "alnp3/vocab.hpp"

namespace alnp3::world {

using vocab::Token;

enum class AgentClass : std::uint8_t { Car = 0, Truck = 1, Pedestrian = 2, Barrier = 3 };
enum class Status : std::uint8_t { Moving = 0, Stopped = 1 };
enum class Scenario : std::uint8_t { GoStraight = 0, StopRedLight = 1, YieldPedestrian = 2 };
enum class Category : std::uint8_t { Perception = 0, Prediction = 1, Planning = 2 };
enum class Hop : std::uint8_t { H0 = 0, H1 = 1 };

const char* to_string(AgentClass c);
const char* to_string(Status s);
const char* to_string(Scenario s);
const char* to_string(Category c);
const char* to_string(Hop h);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Vec2&) const = default;
};

struct WorldConfig {
  std::size_t past_steps = 4;    // T_h, last one is "now"
  std::size_t future_steps = 6;  // T_f
  double dt = 0.5;               // seconds per step
  std::size_t grid = 32;         // BEV cells per side
  double cell = 2.0;             // meters per cell
  std::size_t max_agents = 16;

  // Indexed by AgentClass.
  std::array<double, 4> v_max{15.0, 12.0, 3.0, 0.0};
  std::array<double, 4> radius{1.0, 1.5, 0.3, 0.5};
  double ego_radius = 1.0;
  double ego_v_max = 15.0;

  double half_extent() const { return 0.5 * static_cast<double>(grid) * cell; }
  bool operator==(const WorldConfig&) const = default;
};

struct Agent {
  int id = 0;
  AgentClass cls = AgentClass::Car;
  Status status = Status::Moving;
  std::vector<Vec2> past;       // T_h points, oldest first
  std::vector<Vec2> future_gt;  // T_f points
  bool operator==(const Agent&) const = default;
};

struct Scene {
  std::uint64_t seed = 0;
  Scenario scenario = Scenario::GoStraight;
  std::vector<Agent> agents;
  std::vector<Vec2> ego_past;
  std::vector<Vec2> ego_future_gt;
  std::vector<Vec2> lane;
  bool operator==(const Scene&) const = default;
};

struct LanguageSample {
  Category category = Category::Perception;
  std::vector<Token> prompt;
  std::vector<Token> target;     // ends with EOS
  std::optional<int> agent_id;   // set iff perception or prediction
  bool operator==(const LanguageSample&) const = default;
};

struct QASample {
  std::vector<Token> question;
  std::vector<Token> answer;     // ends with EOS
  Hop hop = Hop::H0;
  bool operator==(const QASample&) const = default;
};

// 1 <= n_agents <= config.max_agents.
Scene generate_scene(std::uint64_t seed, std::size_t n_agents, const WorldConfig& config = {});

// grid x grid x 4 constant tensor: occupancy, class id ((cls+1)/4), vx, vy
// (m/s). Cell (i, j) covers x in [-L + i c, -L + (i+1) c) and likewise y.
// An agent's footprint is every cell overlapping the open square of half
// width = class radius around its current position; agents outside the grid
// are clipped. Later agents overwrite earlier ones.
ad::Tensor render_bev(const Scene& scene, const WorldConfig& config = {});

// Index of the cell containing p, or nullopt outside the grid.
std::optional<std::size_t> cell_index(Vec2 p, const WorldConfig& config);

// Velocity over the last observed step, m/s.
Vec2 current_velocity(const std::vector<Vec2>& past, double dt);

// "<class> about <d> meters <direction> is [not] moving", no EOS.
std::vector<Token> caption_agent(const Agent& agent);
// "<class> will move <heading> at <v> meters per second" / "<class> will stay stopped".
std::vector<Token> narrate_agent(const Agent& agent, double dt);
std::vector<Token> explain_plan(Scenario scenario);

// Octant of p around the ego: "front", "front left", ..., "front right".
std::string direction_words(Vec2 p);

std::vector<LanguageSample> language_samples(const Scene& scene, const WorldConfig& config = {});
std::vector<QASample> qa_samples(const Scene& scene);

}  // namespace alnp3::world
