#pragma once

// Held-out metrics: plan collision rate by horizon, corpus BLEU-4 of greedy
// language outputs, exact-match QA accuracy by hop and the plan/language
// consistency probe.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "alnp3/corpus.hpp"
#include "alnp3/model.hpp"

namespace alnp3::eval {

// 1 s, 2 s, 3 s at dt = 0.5 s.
inline constexpr std::array<std::size_t, 3> kHorizonSteps{2, 4, 6};
inline constexpr std::size_t kMaxDecode = 24;

struct CollisionRates {
  std::array<double, 3> by_horizon{};
  double avg = 0.0;
};

// True when some plan point among the first `steps` lies within
// ego radius + agent radius of that agent's ground-truth position at the same
// step.
bool collides(const std::vector<world::Vec2>& plan, const world::Scene& scene, const world::WorldConfig& wc,
              std::size_t steps);

CollisionRates collision_rate(const std::vector<std::vector<world::Vec2>>& plans,
                              const std::vector<const world::Scene*>& scenes, const world::WorldConfig& wc,
                              const std::array<std::size_t, 3>& horizon_steps = kHorizonSteps);

// Corpus BLEU-4, uniform weights, brevity penalty, add-one smoothing for
// n >= 2.
double bleu4(const std::vector<std::vector<vocab::Token>>& candidates,
             const std::vector<std::vector<vocab::Token>>& references);

struct QaOutcome {
  world::Hop hop = world::Hop::H0;
  bool correct = false;
};

struct QaAccuracy {
  double h0 = 0.0;
  double h1 = 0.0;
  double all = 0.0;
};

QaAccuracy qa_accuracy(const std::vector<QaOutcome>& outcomes);
QaAccuracy qa_accuracy(const Model& model, const std::vector<const corpus::CorpusScene*>& scenes);

// Mean cosine between the plan and planning-answer embeddings. A model
// without alignment modules is probed through banks freshly drawn from
// bank_seed.
double consistency_probe(const Model& model, const std::vector<const corpus::CorpusScene*>& scenes,
                         std::uint64_t bank_seed);

std::vector<world::Vec2> plan_points(const ad::Tensor& v_ego);

struct EvalReport {
  CollisionRates collision;
  double bleu4 = 0.0;
  QaAccuracy qa;
  double consistency = 0.0;
  std::size_t n_scenes = 0;
};

EvalReport evaluate(const Model& model, const std::vector<const corpus::CorpusScene*>& scenes,
                    std::uint64_t bank_seed);

std::string to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& text);

}  // namespace alnp3::eval
