#pragma once

// Joint training: fast-stack task loss, language-model loss and the routed
// alignment losses, optimized with Adam under a fixed deterministic schedule.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "alnp3/corpus.hpp"
#include "alnp3/model.hpp"

namespace alnp3::train {

enum class Loss : std::size_t { Task = 0, Lm = 1, P1a = 2, P2a = 3, P3a = 4 };
inline constexpr std::size_t kNumLosses = 5;
const char* to_string(Loss l);

using LossArray = std::array<double, kNumLosses>;

struct LossWeights {
  LossArray w{1.0, 1.0, 1.0, 1.0, 1.0};
  double operator[](Loss l) const { return w[static_cast<std::size_t>(l)]; }
  double& operator[](Loss l) { return w[static_cast<std::size_t>(l)]; }
  bool operator==(const LossWeights&) const = default;
};

struct TrainConfig {
  std::string corpus;
  std::size_t n_agents = 4;
  double learning_rate = 2e-4;
  std::size_t steps = 2000;
  std::size_t batch_scenes = 4;
  std::uint64_t seed = 0;
  bool align_enabled = true;
  double tau = 0.07;
  LossWeights loss_weights;
  bool operator==(const TrainConfig&) const = default;
};

// What a scene contributes in one step. QA samples train only the
// language-model loss.
enum class SampleKind : std::uint8_t { Perception = 0, Prediction = 1, Planning = 2, QA = 3 };
inline constexpr std::size_t kNumSampleKinds = 4;
const char* to_string(SampleKind k);
SampleKind sample_kind(std::size_t step, std::size_t batch, std::size_t slot);

struct SceneObjective {
  ad::Tensor total;                // weighted sum of the active losses
  LossArray values{};              // unweighted, zero when inactive
  std::array<bool, kNumLosses> active{};
};

// pick selects the agent (perception) or QA sample; ignored otherwise.
SceneObjective scene_objective(const Model& model, const corpus::CorpusScene& scene, SampleKind kind,
                               std::size_t pick, const TrainConfig& config);

struct StepReport {
  std::size_t step = 0;
  LossArray losses{};                         // batch mean, inactive scenes count as 0
  std::array<std::size_t, kNumLosses> active{};  // scenes in which each loss fired
  double total = 0.0;
  double grad_norm = 0.0;                     // before clipping
};

std::string to_json_line(const StepReport& r);

// Mean task loss and mean language-model loss (over every language and QA
// sample) across a set of scenes, without gradients.
struct LossProbe {
  double task = 0.0;
  double lm = 0.0;
};
LossProbe loss_probe(const Model& model, const std::vector<const corpus::CorpusScene*>& scenes);

struct Adam {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t t = 0;
  std::vector<std::vector<double>> m, v;

  void step(nn::ParameterSet& params, const std::vector<std::vector<double>>& grads);
};

inline constexpr double kClipNorm = 5.0;

// Worker count from ALNP3_THREADS (default 1).
std::size_t worker_threads();

struct TrainResult {
  Model model;
  std::vector<StepReport> reports;
  LossProbe initial;
  LossProbe final;
  std::vector<std::uint8_t> initial_checkpoint;
};

using StepCallback = std::function<void(const StepReport&)>;

// Throws ContractError when the corpus does not match the config.
TrainResult train(const corpus::Corpus& corpus, const TrainConfig& config, const StepCallback& on_step = {},
                  bool probe_losses = true);

}  // namespace alnp3::train
