#include "alnp3/world.hpp"

#include <cmath>
#include <numbers>

#include "alnp3/errors.hpp"
#include "alnp3/rng.hpp"

namespace alnp3::world {

namespace {

constexpr const char* kPlural[] = {"cars", "trucks", "pedestrians", "barriers"};

struct Track {
  std::vector<Vec2> past;
  std::vector<Vec2> future;
};

// Constant-velocity track through `now` at step 0.
Track linear_track(Vec2 now, Vec2 vel, const WorldConfig& cfg) {
  Track t;
  const int th = static_cast<int>(cfg.past_steps);
  for (int s = -(th - 1); s <= 0; ++s)
    t.past.push_back({now.x + vel.x * s * cfg.dt, now.y + vel.y * s * cfg.dt});
  for (std::size_t s = 1; s <= cfg.future_steps; ++s)
    t.future.push_back({now.x + vel.x * static_cast<double>(s) * cfg.dt, now.y + vel.y * static_cast<double>(s) * cfg.dt});
  return t;
}

double dist(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

bool inside(Vec2 p, double limit) { return std::abs(p.x) <= limit && std::abs(p.y) <= limit; }

double ego_stop_distance(double v0, int stop_step, double dt) { return 0.5 * v0 * stop_step * dt; }

void append(std::vector<Token>& out, std::string_view words) {
  for (Token t : vocab::encode(words)) out.push_back(t);
}

}  // namespace

const char* to_string(AgentClass c) {
  constexpr const char* names[] = {"car", "truck", "pedestrian", "barrier"};
  return names[static_cast<int>(c)];
}
const char* to_string(Status s) { return s == Status::Moving ? "moving" : "stopped"; }
const char* to_string(Scenario s) {
  constexpr const char* names[] = {"go_straight", "stop_red_light", "yield_pedestrian"};
  return names[static_cast<int>(s)];
}
const char* to_string(Category c) {
  constexpr const char* names[] = {"perception", "prediction", "planning"};
  return names[static_cast<int>(c)];
}
const char* to_string(Hop h) { return h == Hop::H0 ? "H0" : "H1"; }

Scene generate_scene(std::uint64_t seed, std::size_t n_agents, const WorldConfig& cfg) {
  if (n_agents < 1 || n_agents > cfg.max_agents)
    throw ContractError("generate_scene: n_agents must be in [1, " + std::to_string(cfg.max_agents) + "], got " +
                        std::to_string(n_agents));
  Rng rng(seed);
  Scene scene;
  scene.seed = seed;
  scene.scenario = static_cast<Scenario>(rng.below(3));

  for (int x = -30; x <= 30; x += 10) scene.lane.push_back({static_cast<double>(x), 0.0});

  // Ego along +x. Stop templates decelerate uniformly to rest at stop_step.
  const int th = static_cast<int>(cfg.past_steps);
  double v0 = 0.0;
  int stop_step = 0;
  if (scene.scenario == Scenario::GoStraight) {
    v0 = rng.uniform(4.0, 8.0);
  } else {
    stop_step = 3 + static_cast<int>(rng.below(3));
    v0 = rng.uniform(3.0, 6.0);
  }
  auto ego_x = [&](int step) {
    const double tau = step * cfg.dt;
    if (scene.scenario == Scenario::GoStraight) return v0 * tau;
    const double t_stop = stop_step * cfg.dt;
    const double decel = v0 / t_stop;
    const double t = std::min(tau, t_stop);
    return v0 * t - 0.5 * decel * t * t;
  };
  for (int s = -(th - 1); s <= 0; ++s) scene.ego_past.push_back({ego_x(s), 0.0});
  for (int s = 1; s <= static_cast<int>(cfg.future_steps); ++s) scene.ego_future_gt.push_back({ego_x(s), 0.0});

  const double limit = cfg.half_extent() - 2.0;
  std::vector<Vec2> occupied;

  std::size_t first = 0;
  if (scene.scenario == Scenario::YieldPedestrian) {
    // Crossing beyond the ego's stopping point.
    const double x_cross = ego_stop_distance(v0, stop_step, cfg.dt) + 4.0;
    const double speed = rng.uniform(1.0, 1.5);
    const Vec2 now{x_cross, rng.uniform(-3.0, -1.5)};
    Track tr = linear_track(now, {0.0, speed}, cfg);
    scene.agents.push_back({0, AgentClass::Pedestrian, Status::Moving, tr.past, tr.future});
    occupied.push_back(now);
    first = 1;
  }

  for (std::size_t i = first; i < n_agents; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      const auto roll = rng.below(10);
      const AgentClass cls = roll < 4 ? AgentClass::Car
                             : roll < 6 ? AgentClass::Truck
                             : roll < 8 ? AgentClass::Pedestrian
                                        : AgentClass::Barrier;
      const bool moving = cls != AgentClass::Barrier && rng.uniform() < 0.7;
      const double side = rng.below(2) ? 1.0 : -1.0;
      const Vec2 now{rng.uniform(-26.0, 26.0), side * rng.uniform(4.5, 26.0)};
      const double heading = rng.below(2) ? 1.0 : -1.0;
      double speed = 0.0;
      if (moving) {
        switch (cls) {
          case AgentClass::Car: speed = rng.uniform(3.0, 10.0); break;
          case AgentClass::Truck: speed = rng.uniform(2.0, 8.0); break;
          case AgentClass::Pedestrian: speed = rng.uniform(0.8, 1.8); break;
          case AgentClass::Barrier: break;
        }
      }
      Track tr = linear_track(now, {heading * speed, 0.0}, cfg);
      bool ok = inside(tr.past.front(), limit) && inside(now, limit);
      for (const Vec2& o : occupied) ok = ok && dist(o, now) >= 4.0;
      if (!ok) continue;
      occupied.push_back(now);
      scene.agents.push_back({static_cast<int>(i), cls, moving ? Status::Moving : Status::Stopped,
                              std::move(tr.past), std::move(tr.future)});
      placed = true;
    }
    if (!placed) throw ContractError("generate_scene: could not place agent " + std::to_string(i));
  }
  return scene;
}

std::optional<std::size_t> cell_index(Vec2 p, const WorldConfig& cfg) {
  const double half = cfg.half_extent();
  const double fi = std::floor((p.x + half) / cfg.cell);
  const double fj = std::floor((p.y + half) / cfg.cell);
  const double g = static_cast<double>(cfg.grid);
  if (fi < 0 || fj < 0 || fi >= g || fj >= g) return std::nullopt;
  return static_cast<std::size_t>(fi) * cfg.grid + static_cast<std::size_t>(fj);
}

Vec2 current_velocity(const std::vector<Vec2>& past, double dt) {
  if (past.size() < 2) return {};
  const Vec2 a = past[past.size() - 2];
  const Vec2 b = past.back();
  return {(b.x - a.x) / dt, (b.y - a.y) / dt};
}

ad::Tensor render_bev(const Scene& scene, const WorldConfig& cfg) {
  const std::size_t g = cfg.grid;
  const double half = cfg.half_extent();
  std::vector<double> grid(g * g * 4, 0.0);
  auto clamp_range = [&](double lo, double hi) {
    // Cells overlapping the open interval (lo, hi).
    long a = static_cast<long>(std::floor((lo + half) / cfg.cell));
    long b = static_cast<long>(std::ceil((hi + half) / cfg.cell)) - 1;
    a = std::max(a, 0L);
    b = std::min(b, static_cast<long>(g) - 1);
    return std::pair{a, b};
  };
  for (const Agent& agent : scene.agents) {
    const Vec2 p = agent.past.back();
    const Vec2 v = current_velocity(agent.past, cfg.dt);
    const double r = cfg.radius[static_cast<int>(agent.cls)];
    const auto [i0, i1] = clamp_range(p.x - r, p.x + r);
    const auto [j0, j1] = clamp_range(p.y - r, p.y + r);
    for (long i = i0; i <= i1; ++i)
      for (long j = j0; j <= j1; ++j) {
        double* c = grid.data() + (static_cast<std::size_t>(i) * g + static_cast<std::size_t>(j)) * 4;
        c[0] = 1.0;
        c[1] = (static_cast<double>(agent.cls) + 1.0) / 4.0;
        c[2] = v.x;
        c[3] = v.y;
      }
  }
  return ad::Tensor::constant({g, g, 4}, std::move(grid));
}

std::string direction_words(Vec2 p) {
  constexpr const char* octants[] = {"front", "front left", "left", "back left",
                                     "back", "back right", "right", "front right"};
  double deg = std::atan2(p.y, p.x) * 180.0 / std::numbers::pi;
  if (deg < 0) deg += 360.0;
  const int idx = static_cast<int>(std::floor((deg + 22.5) / 45.0)) % 8;
  return octants[idx];
}

std::vector<Token> caption_agent(const Agent& agent) {
  const Vec2 p = agent.past.back();
  const int d = static_cast<int>(std::lround(std::hypot(p.x, p.y)));
  std::vector<Token> out;
  append(out, to_string(agent.cls));
  append(out, "about");
  out.push_back(vocab::number(d));
  append(out, "meters");
  append(out, direction_words(p));
  append(out, agent.status == Status::Moving ? "is moving" : "is not moving");
  return out;
}

std::vector<Token> narrate_agent(const Agent& agent, double dt) {
  std::vector<Token> out;
  append(out, to_string(agent.cls));
  if (agent.status == Status::Stopped) {
    append(out, "will stay stopped");
    return out;
  }
  const Vec2 v = current_velocity(agent.past, dt);
  const char* heading = std::abs(v.x) >= std::abs(v.y) ? (v.x >= 0 ? "front" : "back") : (v.y >= 0 ? "left" : "right");
  append(out, "will move");
  append(out, heading);
  append(out, "at");
  out.push_back(vocab::number(static_cast<int>(std::lround(std::hypot(v.x, v.y)))));
  append(out, "meters per second");
  return out;
}

std::vector<Token> explain_plan(Scenario scenario) {
  switch (scenario) {
    case Scenario::GoStraight: return vocab::encode("ego continues straight because the road ahead is clear");
    case Scenario::StopRedLight: return vocab::encode("ego stops because the traffic light is red");
    case Scenario::YieldPedestrian: return vocab::encode("ego stops because a pedestrian is crossing ahead");
  }
  throw ContractError("explain_plan: unknown scenario");
}

std::vector<LanguageSample> language_samples(const Scene& scene, const WorldConfig& cfg) {
  std::vector<LanguageSample> out;
  auto with_eos = [](std::vector<Token> t) {
    t.push_back(vocab::kEos);
    return t;
  };
  auto agent_prompt = [](const char* verb, int id) {
    std::vector<Token> p{vocab::kBos, vocab::id(verb), vocab::id("agent"), vocab::agent_tag(id), vocab::kQuery};
    return p;
  };
  for (const Agent& a : scene.agents)
    out.push_back({Category::Perception, agent_prompt("describe", a.id), with_eos(caption_agent(a)), a.id});
  for (const Agent& a : scene.agents)
    out.push_back({Category::Prediction, agent_prompt("predict", a.id), with_eos(narrate_agent(a, cfg.dt)), a.id});
  std::vector<Token> plan_prompt{vocab::kBos};
  append(plan_prompt, "what should ego do ?");
  out.push_back({Category::Planning, plan_prompt, with_eos(explain_plan(scene.scenario)), std::nullopt});
  return out;
}

std::vector<QASample> qa_samples(const Scene& scene) {
  const auto& agents = scene.agents;
  if (agents.empty()) return {};
  Rng rng(scene.seed ^ 0x51A5EEDull);
  const auto n = agents.size();
  const Agent& a0 = agents[rng.below(n)];
  const Agent& a1 = agents[rng.below(n)];
  const Agent& probe = agents[rng.below(n)];

  auto question = [](std::string_view head, int id) {
    std::vector<Token> q{vocab::kBos};
    append(q, head);
    q.push_back(vocab::agent_tag(id));
    q.push_back(vocab::kQuery);
    return q;
  };
  auto answer = [](std::vector<Token> t) {
    t.push_back(vocab::kEos);
    return t;
  };

  std::vector<QASample> out;
  out.push_back({question("what status is agent", a0.id), answer(vocab::encode(to_string(a0.status))), Hop::H0});
  out.push_back({question("what is agent", a1.id), answer(vocab::encode(to_string(a1.cls))), Hop::H0});

  int same = 0;
  for (const Agent& a : agents)
    if (a.id != a0.id && a.status == a0.status) ++same;
  out.push_back({question("how many things are in the same status as agent", a0.id),
                 answer({vocab::number(same)}), Hop::H1});

  bool any = false;
  for (const Agent& a : agents)
    if (a.id != a1.id && a.cls == probe.cls && a.past.back().x > a1.past.back().x) any = true;
  out.push_back({question(std::string("are there any ") + kPlural[static_cast<int>(probe.cls)] +
                              " to the front of agent",
                          a1.id),
                 answer(vocab::encode(any ? "yes" : "no")), Hop::H1});
  return out;
}

}  // namespace alnp3::world
