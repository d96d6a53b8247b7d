#include "alnp3/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <optional>
#include <thread>

#include "json.hpp"

namespace alnp3::train {

using namespace ad;
using world::Category;

namespace {

constexpr std::uint64_t kBatchStream = 0xBA7C4E5ull;

std::vector<Token> strip_eos(const std::vector<Token>& t) {
  if (!t.empty() && t.back() == vocab::kEos) return {t.begin(), t.end() - 1};
  return t;
}

const world::LanguageSample& find_sample(const corpus::CorpusScene& s, Category c, std::optional<int> agent) {
  for (const auto& l : s.language)
    if (l.category == c && l.agent_id == agent) return l;
  throw ContractError(std::string("scene ") + std::to_string(s.scene.seed) + " has no " + world::to_string(c) +
                      " sample" + (agent ? " for agent " + std::to_string(*agent) : std::string()));
}

struct SceneGrad {
  LossArray values{};
  std::array<bool, kNumLosses> active{};
  std::vector<std::vector<double>> grads;
};

SceneGrad scene_gradient(const Model& model, const corpus::CorpusScene& scene, SampleKind kind, std::size_t pick,
                         const TrainConfig& cfg) {
  SceneObjective obj = scene_objective(model, scene, kind, pick, cfg);
  Gradients g = backward(obj.total);
  SceneGrad out;
  out.values = obj.values;
  out.active = obj.active;
  for (const auto& [name, p] : model.params().all()) {
    auto v = g.values_of(p);
    if (v.empty())
      out.grads.emplace_back(p.numel(), 0.0);
    else
      out.grads.emplace_back(v.begin(), v.end());
  }
  return out;
}

void check_finite(const nn::ParameterSet& params, std::size_t step) {
  for (const auto& [name, p] : params.all())
    for (double x : p.values())
      if (!std::isfinite(x))
        throw DomainError("training step " + std::to_string(step) + ": non-finite value in '" + name + "'");
}

}  // namespace

const char* to_string(Loss l) {
  switch (l) {
    case Loss::Task: return "task";
    case Loss::Lm: return "lm";
    case Loss::P1a: return "p1a";
    case Loss::P2a: return "p2a";
    case Loss::P3a: return "p3a";
  }
  return "?";
}

const char* to_string(SampleKind k) {
  switch (k) {
    case SampleKind::Perception: return "perception";
    case SampleKind::Prediction: return "prediction";
    case SampleKind::Planning: return "planning";
    case SampleKind::QA: return "qa";
  }
  return "?";
}

SampleKind sample_kind(std::size_t step, std::size_t batch, std::size_t slot) {
  return static_cast<SampleKind>((step * batch + slot) % kNumSampleKinds);
}

SceneObjective scene_objective(const Model& model, const corpus::CorpusScene& cs, SampleKind kind, std::size_t pick,
                               const TrainConfig& cfg) {
  const bool align = cfg.align_enabled;
  if (align && !model.has_alignment()) throw ContractError("alignment enabled but the model has no alignment modules");
  const auto& scene = cs.scene;
  const auto& w = cfg.loss_weights;

  StackOutput stack = model.fast().forward(scene);
  DrivingContext ctx = model.slow().token_mixer(stack);

  SceneObjective out;
  auto put = [&](Loss l, const Tensor& t) {
    out.values[static_cast<std::size_t>(l)] = t.item();
    out.active[static_cast<std::size_t>(l)] = true;
    Tensor weighted = scale(t, w[l]);
    out.total = out.total ? add(out.total, weighted) : weighted;
  };

  put(Loss::Task, stack_task_loss(stack.traj, scene));

  std::optional<align::ActiveLosses> routed;
  if (kind != SampleKind::QA) routed = align::route(static_cast<Category>(kind));

  switch (kind) {
    case SampleKind::Perception: {
      if (pick >= scene.agents.size()) throw ContractError("perception pick out of range");
      const auto& s = find_sample(cs, Category::Perception, scene.agents[pick].id);
      put(Loss::Lm, lm_loss(model.slow().teacher_forced(s.prompt, s.target, ctx), s.target));
      if (align && routed->p1a) {
        std::vector<std::vector<Token>> captions;
        for (const auto& a : scene.agents) captions.push_back(strip_eos(find_sample(cs, Category::Perception, a.id).target));
        put(Loss::P1a, model.alignment().p1a_loss(ctx.q_instance, captions, model.text_embedder()));
      }
      break;
    }
    case SampleKind::Prediction: {
      std::vector<Tensor> logits;
      Tensor lm;
      for (const auto& a : scene.agents) {
        const auto& s = find_sample(cs, Category::Prediction, a.id);
        logits.push_back(model.slow().teacher_forced(s.prompt, s.target, ctx));
        Tensor l = lm_loss(logits.back(), s.target);
        lm = lm ? add(lm, l) : l;
      }
      put(Loss::Lm, scale(lm, 1.0 / static_cast<double>(logits.size())));
      if (align && routed->p2a) put(Loss::P2a, model.alignment().p2a_loss(stack.traj.v_agents, logits, cfg.tau));
      break;
    }
    case SampleKind::Planning: {
      const auto& s = find_sample(cs, Category::Planning, std::nullopt);
      Tensor logits = model.slow().teacher_forced(s.prompt, s.target, ctx);
      put(Loss::Lm, lm_loss(logits, s.target));
      if (align && routed->p3a) put(Loss::P3a, model.alignment().p3a_loss(stack.traj.v_ego, logits));
      break;
    }
    case SampleKind::QA: {
      if (pick >= cs.qa.size()) throw ContractError("qa pick out of range");
      const auto& q = cs.qa[pick];
      put(Loss::Lm, lm_loss(model.slow().teacher_forced(q.question, q.answer, ctx), q.answer));
      break;
    }
  }
  return out;
}

std::string to_json_line(const StepReport& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  for (std::size_t i = 0; i < kNumLosses; ++i) j[to_string(static_cast<Loss>(i))] = r.losses[i];
  nlohmann::ordered_json active;
  for (std::size_t i = 0; i < kNumLosses; ++i) active[to_string(static_cast<Loss>(i))] = r.active[i];
  j["active"] = active;
  j["total"] = r.total;
  j["grad_norm"] = r.grad_norm;
  return j.dump();
}

LossProbe loss_probe(const Model& model, const std::vector<const corpus::CorpusScene*>& scenes) {
  if (scenes.empty()) throw ContractError("loss probe: no scenes");
  LossProbe p;
  for (const auto* cs : scenes) {
    StackOutput stack = model.fast().forward(cs->scene);
    p.task += stack_task_loss(stack.traj, cs->scene).item();
    DrivingContext ctx = model.slow().token_mixer(stack);
    double lm = 0.0;
    std::size_t n = 0;
    for (const auto& s : cs->language) {
      lm += lm_loss(model.slow().teacher_forced(s.prompt, s.target, ctx), s.target).item();
      ++n;
    }
    for (const auto& q : cs->qa) {
      lm += lm_loss(model.slow().teacher_forced(q.question, q.answer, ctx), q.answer).item();
      ++n;
    }
    p.lm += lm / static_cast<double>(n);
  }
  p.task /= static_cast<double>(scenes.size());
  p.lm /= static_cast<double>(scenes.size());
  return p;
}

void Adam::step(nn::ParameterSet& params, const std::vector<std::vector<double>>& grads) {
  auto& all = params.all();
  if (m.empty()) {
    for (const auto& [name, p] : all) {
      m.emplace_back(p.numel(), 0.0);
      v.emplace_back(p.numel(), 0.0);
    }
  }
  if (grads.size() != all.size() || m.size() != all.size())
    throw ContractError("adam: gradient count does not match parameters");
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  std::size_t k = 0;
  for (auto& [name, p] : all) {
    auto x = p.mutable_values();
    const auto& g = grads[k];
    auto& mk = m[k];
    auto& vk = v[k];
    for (std::size_t i = 0; i < x.size(); ++i) {
      mk[i] = beta1 * mk[i] + (1.0 - beta1) * g[i];
      vk[i] = beta2 * vk[i] + (1.0 - beta2) * g[i] * g[i];
      x[i] -= lr * (mk[i] / c1) / (std::sqrt(vk[i] / c2) + eps);
    }
    ++k;
  }
}

std::size_t worker_threads() {
  const char* env = std::getenv("ALNP3_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw ContractError(std::string("ALNP3_THREADS must be a positive integer, got '") + env + "'");
  return static_cast<std::size_t>(n);
}

TrainResult train(const corpus::Corpus& corpus, const TrainConfig& cfg, const StepCallback& on_step,
                  bool probe_losses) {
  if (!(cfg.learning_rate > 0.0)) throw ContractError("learning_rate must be positive");
  if (!(cfg.tau > 0.0)) throw ContractError("tau must be positive");
  if (cfg.batch_scenes == 0) throw ContractError("batch_scenes must be at least 1");
  if (corpus.n_agents != cfg.n_agents)
    throw ContractError("corpus has " + std::to_string(corpus.n_agents) + " agents per scene, config expects " +
                        std::to_string(cfg.n_agents));
  const auto scenes = corpus.split(corpus::Split::Train);
  if (scenes.empty()) throw ContractError("corpus has no training scenes");

  Model model(ModelConfig{}, corpus.config, cfg.seed, cfg.align_enabled);
  TrainResult result{std::move(model), {}, {}, {}, {}};
  Model& m = result.model;
  result.initial_checkpoint = m.checkpoint_bytes();
  if (probe_losses) result.initial = loss_probe(m, scenes);

  Adam adam;
  adam.lr = cfg.learning_rate;
  Rng rng(cfg.seed ^ kBatchStream);
  std::vector<std::size_t> order(scenes.size());
  std::size_t cursor = order.size();
  const std::size_t threads = std::min(worker_threads(), cfg.batch_scenes);
  const std::size_t batch = cfg.batch_scenes;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    struct Job {
      const corpus::CorpusScene* scene;
      SampleKind kind;
      std::size_t pick;
    };
    std::vector<Job> jobs;
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      const auto* cs = scenes[order[cursor++]];
      const SampleKind kind = sample_kind(step, batch, b);
      std::size_t pick = 0;
      if (kind == SampleKind::Perception) pick = rng.below(cs->scene.agents.size());
      if (kind == SampleKind::QA) pick = rng.below(cs->qa.size());
      jobs.push_back({cs, kind, pick});
    }

    std::vector<SceneGrad> results(batch);
    if (threads <= 1) {
      for (std::size_t b = 0; b < batch; ++b)
        results[b] = scene_gradient(m, *jobs[b].scene, jobs[b].kind, jobs[b].pick, cfg);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(threads);
      for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
          try {
            for (std::size_t b = t; b < batch; b += threads)
              results[b] = scene_gradient(m, *jobs[b].scene, jobs[b].kind, jobs[b].pick, cfg);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      for (auto& th : pool) th.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    }

    StepReport report;
    report.step = step;
    std::vector<std::vector<double>> grads = std::move(results[0].grads);
    for (std::size_t b = 1; b < batch; ++b)
      for (std::size_t k = 0; k < grads.size(); ++k)
        for (std::size_t i = 0; i < grads[k].size(); ++i) grads[k][i] += results[b].grads[k][i];
    const double inv = 1.0 / static_cast<double>(batch);
    double sq = 0.0;
    for (auto& g : grads)
      for (auto& x : g) {
        x *= inv;
        sq += x * x;
      }
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < kNumLosses; ++i) {
        report.losses[i] += results[b].values[i];
        report.active[i] += results[b].active[i] ? 1 : 0;
      }
    for (std::size_t i = 0; i < kNumLosses; ++i) {
      report.losses[i] *= inv;
      report.total += cfg.loss_weights.w[i] * report.losses[i];
    }
    report.grad_norm = std::sqrt(sq);
    if (!std::isfinite(report.grad_norm))
      throw DomainError("training step " + std::to_string(step) + ": non-finite gradient");
    if (report.grad_norm > kClipNorm) {
      const double c = kClipNorm / report.grad_norm;
      for (auto& g : grads)
        for (auto& x : g) x *= c;
    }
    adam.step(m.params(), grads);
    check_finite(m.params(), step);

    if (on_step) on_step(report);
    result.reports.push_back(report);
  }

  if (probe_losses) result.final = loss_probe(m, scenes);
  return result;
}

}  // namespace alnp3::train
