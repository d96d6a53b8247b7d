#include "alnp3/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <map>

#include "json.hpp"

namespace alnp3::eval {

using world::Vec2;
using vocab::Token;

namespace {

std::vector<Token> strip_eos(std::vector<Token> t) {
  if (!t.empty() && t.back() == vocab::kEos) t.pop_back();
  return t;
}

using Ngram = std::vector<Token>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<Token>& s, std::size_t n) {
  std::map<Ngram, std::size_t> out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[Ngram(s.begin() + i, s.begin() + i + n)];
  return out;
}

const world::LanguageSample& planning_sample(const corpus::CorpusScene& cs) {
  for (const auto& s : cs.language)
    if (s.category == world::Category::Planning) return s;
  throw ContractError("scene " + std::to_string(cs.scene.seed) + " has no planning sample");
}

}  // namespace

std::vector<Vec2> plan_points(const ad::Tensor& v_ego) {
  auto v = v_ego.values();
  std::vector<Vec2> out;
  for (std::size_t i = 0; i + 1 < v.size(); i += 2) out.push_back({v[i], v[i + 1]});
  return out;
}

bool collides(const std::vector<Vec2>& plan, const world::Scene& scene, const world::WorldConfig& wc,
              std::size_t steps) {
  if (steps > wc.future_steps || steps > plan.size())
    throw ContractError("collision horizon of " + std::to_string(steps) + " steps exceeds the plan length");
  for (std::size_t t = 0; t < steps; ++t)
    for (const auto& a : scene.agents) {
      const Vec2 g = a.future_gt.at(t);
      const double reach = wc.ego_radius + wc.radius[static_cast<std::size_t>(a.cls)];
      if (std::hypot(plan[t].x - g.x, plan[t].y - g.y) <= reach) return true;
    }
  return false;
}

CollisionRates collision_rate(const std::vector<std::vector<Vec2>>& plans, const std::vector<const world::Scene*>& scenes,
                              const world::WorldConfig& wc, const std::array<std::size_t, 3>& horizon_steps) {
  if (plans.size() != scenes.size())
    throw ContractError("collision_rate: " + std::to_string(plans.size()) + " plans for " +
                        std::to_string(scenes.size()) + " scenes");
  for (auto s : horizon_steps)
    if (s == 0 || s > wc.future_steps)
      throw ContractError("collision horizon of " + std::to_string(s) + " steps is outside the prediction window");
  CollisionRates r;
  if (scenes.empty()) return r;
  for (std::size_t h = 0; h < 3; ++h) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < scenes.size(); ++i) hits += collides(plans[i], *scenes[i], wc, horizon_steps[h]) ? 1 : 0;
    r.by_horizon[h] = static_cast<double>(hits) / static_cast<double>(scenes.size());
  }
  r.avg = (r.by_horizon[0] + r.by_horizon[1] + r.by_horizon[2]) / 3.0;
  return r;
}

double bleu4(const std::vector<std::vector<Token>>& candidates, const std::vector<std::vector<Token>>& references) {
  if (candidates.empty()) throw ContractError("bleu4: no candidates");
  if (candidates.size() != references.size())
    throw ContractError("bleu4: " + std::to_string(candidates.size()) + " candidates for " +
                        std::to_string(references.size()) + " references");
  std::array<double, 4> matched{}, total{};
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (references[i].empty()) throw ContractError("bleu4: empty reference");
    cand_len += static_cast<double>(candidates[i].size());
    ref_len += static_cast<double>(references[i].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      auto c = ngram_counts(candidates[i], n);
      auto r = ngram_counts(references[i], n);
      for (const auto& [g, k] : c) {
        total[n - 1] += static_cast<double>(k);
        auto it = r.find(g);
        if (it != r.end()) matched[n - 1] += static_cast<double>(std::min(k, it->second));
      }
    }
  }
  if (cand_len == 0.0 || matched[0] == 0.0) return 0.0;
  double log_p = std::log(matched[0] / total[0]);
  for (std::size_t n = 1; n < 4; ++n) log_p += std::log((matched[n] + 1.0) / (total[n] + 1.0));
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_p / 4.0);
}

QaAccuracy qa_accuracy(const std::vector<QaOutcome>& outcomes) {
  std::array<std::size_t, 2> right{}, count{};
  for (const auto& o : outcomes) {
    const auto h = static_cast<std::size_t>(o.hop);
    ++count[h];
    right[h] += o.correct ? 1 : 0;
  }
  auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  return {ratio(right[0], count[0]), ratio(right[1], count[1]), ratio(right[0] + right[1], count[0] + count[1])};
}

QaAccuracy qa_accuracy(const Model& model, const std::vector<const corpus::CorpusScene*>& scenes) {
  std::vector<QaOutcome> outcomes;
  for (const auto* cs : scenes) {
    DrivingContext ctx = model.slow().token_mixer(model.fast().forward(cs->scene));
    for (const auto& q : cs->qa) {
      auto out = model.slow().decode(q.question, ctx, kMaxDecode);
      outcomes.push_back({q.hop, out.tokens == q.answer});
    }
  }
  return qa_accuracy(outcomes);
}

double consistency_probe(const Model& model, const std::vector<const corpus::CorpusScene*>& scenes,
                         std::uint64_t bank_seed) {
  if (scenes.empty()) return 0.0;
  std::optional<nn::ParameterSet> fresh_params;
  std::optional<align::AlignmentCore> fresh;
  const align::AlignmentCore* core = nullptr;
  if (model.has_alignment()) {
    core = &model.alignment();
  } else {
    fresh_params.emplace();
    fresh.emplace(*fresh_params, model.model_config(), model.world_config(), vocab::size(), bank_seed);
    core = &*fresh;
  }
  double total = 0.0;
  for (const auto* cs : scenes) {
    StackOutput stack = model.fast().forward(cs->scene);
    DrivingContext ctx = model.slow().token_mixer(stack);
    const auto& s = planning_sample(*cs);
    auto e = core->plan_embeddings(stack.traj.v_ego, model.slow().teacher_forced(s.prompt, s.target, ctx));
    total -= align::negative_cosine(e.z_plan, e.z_llm).item();
  }
  return total / static_cast<double>(scenes.size());
}

EvalReport evaluate(const Model& model, const std::vector<const corpus::CorpusScene*>& scenes,
                    std::uint64_t bank_seed) {
  EvalReport r;
  r.n_scenes = scenes.size();
  std::vector<std::vector<Vec2>> plans;
  std::vector<const world::Scene*> raw;
  std::vector<std::vector<Token>> candidates, references;
  for (const auto* cs : scenes) {
    StackOutput stack = model.fast().forward(cs->scene);
    plans.push_back(plan_points(stack.traj.v_ego));
    raw.push_back(&cs->scene);
    DrivingContext ctx = model.slow().token_mixer(stack);
    for (const auto& s : cs->language) {
      candidates.push_back(strip_eos(model.slow().decode(s.prompt, ctx, kMaxDecode).tokens));
      references.push_back(strip_eos(s.target));
    }
  }
  r.collision = collision_rate(plans, raw, model.world_config());
  if (!candidates.empty()) r.bleu4 = bleu4(candidates, references);
  r.qa = qa_accuracy(model, scenes);
  r.consistency = consistency_probe(model, scenes, bank_seed);
  return r;
}

std::string to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["collision_rate"] = {{"1s", r.collision.by_horizon[0]},
                         {"2s", r.collision.by_horizon[1]},
                         {"3s", r.collision.by_horizon[2]},
                         {"avg", r.collision.avg}};
  j["bleu4"] = r.bleu4;
  j["qa_acc"] = {{"H0", r.qa.h0}, {"H1", r.qa.h1}, {"All", r.qa.all}};
  j["consistency"] = r.consistency;
  j["n_scenes"] = r.n_scenes;
  return j.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    EvalReport r;
    const auto& c = j.at("collision_rate");
    r.collision.by_horizon = {c.at("1s").get<double>(), c.at("2s").get<double>(), c.at("3s").get<double>()};
    r.collision.avg = c.at("avg").get<double>();
    r.bleu4 = j.at("bleu4").get<double>();
    const auto& q = j.at("qa_acc");
    r.qa = {q.at("H0").get<double>(), q.at("H1").get<double>(), q.at("All").get<double>()};
    r.consistency = j.at("consistency").get<double>();
    r.n_scenes = j.at("n_scenes").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("eval report: ") + e.what());
  }
}

}  // namespace alnp3::eval
