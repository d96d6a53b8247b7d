#include "alnp3/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "alnp3/corpus.hpp"
#include "alnp3/trainer.hpp"

namespace alnp3::gradcheck {

using namespace ad;
using train::Loss;
using train::SampleKind;

namespace {

constexpr std::array<std::size_t, 3> kAgentCounts{1, 2, 4};
constexpr std::size_t kParamTensors = 4;
constexpr std::size_t kCoordsPerTensor = 2;

Tensor random_tensor(Shape shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor::constant(std::move(shape), std::move(v));
}

void record(LossCheck& c, double analytic, double numeric) {
  const double e = relative_error(analytic, numeric);
  ++c.coordinates;
  c.max_rel_error = std::max(c.max_rel_error, e);
  if (!(e <= kTolerance)) ++c.violations;
}

// Every coordinate of a direct input x.
void check_input(LossCheck& c, const std::function<Tensor(const Tensor&)>& f, const Tensor& x0) {
  auto v = x0.values();
  Tensor x = Tensor::parameter(x0.shape(), std::vector<double>(v.begin(), v.end()));
  Gradients g = backward(f(x));
  auto analytic = g.values_of(x);
  Tensor numeric = finite_diff_grad([&](const Tensor& t) { return f(t).item(); }, x0, kStep);
  for (std::size_t i = 0; i < x0.numel(); ++i) record(c, analytic.empty() ? 0.0 : analytic[i], numeric.at(i));
}

// Sampled coordinates of model parameters: some from the loss's own
// prefixes, the rest from anywhere in the model.
void check_params(LossCheck& c, Model& model, const std::function<Tensor()>& f,
                  const std::vector<std::string>& prefixes, Rng& rng) {
  std::vector<std::string> own, all;
  for (const auto& [name, p] : model.params().all()) {
    all.push_back(name);
    for (const auto& pre : prefixes)
      if (name.rfind(pre, 0) == 0) own.push_back(name);
  }
  std::vector<std::string> picked;
  for (std::size_t i = 0; i < kParamTensors; ++i) {
    const auto& pool = (i < kParamTensors / 2 && !own.empty()) ? own : all;
    picked.push_back(pool[rng.below(pool.size())]);
  }
  Gradients g = backward(f());
  for (const auto& name : picked) {
    Tensor& p = model.params().get(name);
    std::vector<std::size_t> coords;
    for (std::size_t k = 0; k < kCoordsPerTensor; ++k) coords.push_back(rng.below(p.numel()));
    auto analytic = g.values_of(p);
    auto numeric = finite_diff_leaf([&] { return f().item(); }, p, coords, kStep);
    for (std::size_t k = 0; k < coords.size(); ++k)
      record(c, analytic.empty() ? 0.0 : analytic[coords[k]], numeric[k]);
  }
}

struct Fixture {
  Model model;
  corpus::CorpusScene scene;
};

Fixture make_fixture(std::uint64_t seed, std::size_t n_agents) {
  const world::WorldConfig wc;
  corpus::CorpusScene cs;
  cs.scene = world::generate_scene(seed, n_agents, wc);
  cs.language = world::language_samples(cs.scene, wc);
  cs.qa = world::qa_samples(cs.scene);
  return {Model(ModelConfig{}, wc, seed, true), std::move(cs)};
}

train::TrainConfig only(Loss l) {
  train::TrainConfig cfg;
  cfg.loss_weights.w.fill(0.0);
  cfg.loss_weights[l] = 1.0;
  return cfg;
}

std::vector<Token> random_tokens(std::size_t n, Rng& rng) {
  std::vector<Token> t(n);
  for (auto& x : t) x = static_cast<Token>(rng.below(vocab::size()));
  return t;
}

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

bool Report::ok(std::size_t min_configs) const {
  if (losses.empty()) return false;
  return std::all_of(losses.begin(), losses.end(),
                     [&](const LossCheck& c) { return c.violations == 0 && c.configs >= min_configs; });
}

Report run(std::uint64_t seed, std::size_t configs) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t v = vocab::size();
  const std::size_t tf2 = 2 * world::WorldConfig{}.future_steps;
  LossCheck task{"stack_task_loss"}, lm{"lm_loss"}, p1a{"p1a_loss"}, p2a{"p2a_loss"}, p3a{"p3a_loss"};

  for (std::size_t c = 0; c < configs; ++c) {
    const std::size_t n = kAgentCounts[c % kAgentCounts.size()];
    const std::uint64_t cseed = seed * 1000003ull + c;
    Rng rng(cseed ^ 0x9C4EC4ull);
    Fixture fx = make_fixture(cseed, n);
    Model& m = fx.model;
    const auto& scene = fx.scene.scene;
    const double tau = train::TrainConfig{}.tau;

    // task
    {
      Tensor va = random_tensor({n, tf2}, rng), ve = random_tensor({1, tf2}, rng);
      check_input(task, [&](const Tensor& x) { return stack_task_loss({x, ve}, scene); }, va);
      check_input(task, [&](const Tensor& x) { return stack_task_loss({va, x}, scene); }, ve);
      const auto cfg = only(Loss::Task);
      check_params(task, m, [&] { return train::scene_objective(m, fx.scene, SampleKind::Planning, 0, cfg).total; },
                   {"fast."}, rng);
      ++task.configs;
    }
    // lm
    {
      const std::size_t len = 2 + rng.below(4);
      auto target = random_tokens(len, rng);
      check_input(lm, [&](const Tensor& x) { return lm_loss(x, target); }, random_tensor({len, v}, rng));
      const auto cfg = only(Loss::Lm);
      const auto kind = static_cast<SampleKind>(rng.below(train::kNumSampleKinds));
      const std::size_t pick = kind == SampleKind::QA ? rng.below(fx.scene.qa.size()) : rng.below(n);
      check_params(lm, m, [&] { return train::scene_objective(m, fx.scene, kind, pick, cfg).total; },
                   {"slow."}, rng);
      ++lm.configs;
    }
    // p1a
    {
      std::vector<std::vector<Token>> captions;
      for (const auto& a : scene.agents) captions.push_back(world::caption_agent(a));
      const auto& core = m.alignment();
      check_input(p1a, [&](const Tensor& x) { return core.p1a_loss(x, captions, m.text_embedder()); },
                  random_tensor({n, m.model_config().d_lang}, rng));
      const auto cfg = only(Loss::P1a);
      check_params(p1a, m, [&] { return train::scene_objective(m, fx.scene, SampleKind::Perception, 0, cfg).total; },
                   {"align.phi_p1"}, rng);
      ++p1a.configs;
    }
    // p2a
    {
      const auto& core = m.alignment();
      std::vector<Tensor> logits;
      for (std::size_t k = 0; k < n; ++k) logits.push_back(random_tensor({2 + rng.below(3), v}, rng));
      Tensor va = random_tensor({n, tf2}, rng);
      check_input(p2a, [&](const Tensor& x) { return core.p2a_loss(x, logits, tau); }, va);
      const std::size_t k = rng.below(n);
      check_input(p2a, [&](const Tensor& x) {
        auto l = logits;
        l[k] = x;
        return core.p2a_loss(va, l, tau);
      }, logits[k]);
      const auto cfg = only(Loss::P2a);
      check_params(p2a, m, [&] { return train::scene_objective(m, fx.scene, SampleKind::Prediction, 0, cfg).total; },
                   {"align.p2", "align.phi_pred", "align.phi_llm2"}, rng);
      ++p2a.configs;
    }
    // p3a
    {
      const auto& core = m.alignment();
      Tensor ve = random_tensor({1, tf2}, rng);
      Tensor logits = random_tensor({2 + rng.below(4), v}, rng);
      check_input(p3a, [&](const Tensor& x) { return core.p3a_loss(x, logits); }, ve);
      check_input(p3a, [&](const Tensor& x) { return core.p3a_loss(ve, x); }, logits);
      const auto cfg = only(Loss::P3a);
      check_params(p3a, m, [&] { return train::scene_objective(m, fx.scene, SampleKind::Planning, 0, cfg).total; },
                   {"align.p3", "align.phi_plan", "align.phi_llm3"}, rng);
      ++p3a.configs;
    }
  }
  Report r;
  r.losses = {task, lm, p1a, p2a, p3a};
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::string format(const Report& r) {
  std::ostringstream os;
  char buf[160];
  for (const auto& c : r.losses) {
    std::snprintf(buf, sizeof buf, "%-16s configs=%zu coords=%zu max_rel=%.3e violations=%zu\n", c.loss.c_str(),
                  c.configs, c.coordinates, c.max_rel_error, c.violations);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "elapsed %.2f s\n", r.seconds);
  os << buf;
  return os.str();
}

}  // namespace alnp3::gradcheck
