#pragma once

// File-level workflows behind the command-line tool: training and ablation
// runs with their artifacts, evaluation reports and markdown rendering.
//
// A training directory holds:
//   init.alnt       parameters before the first step
//   model.alnt      final parameters
//   reports.jsonl   one StepReport per line
//   summary.json    loss probes at the start and the end
//   manifest.json   RunManifest

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "alnp3/config.hpp"
#include "alnp3/evaluator.hpp"

namespace alnp3::pipeline {

struct RunManifest {
  std::string tool_version = config::kToolVersion;
  std::string config;                                  // canonical config text
  std::string corpus_hash;
  std::map<std::string, std::string> checkpoint_hashes;  // file name -> hash
  std::map<std::string, double> timings_s;               // phase -> seconds
};

std::string to_json(const RunManifest& m);
RunManifest manifest_from_json(const std::string& text);
// Recomputes every recorded checkpoint hash under dir; throws IoError on a
// mismatch.
void verify_manifest(const std::filesystem::path& dir);

struct TrainSummary {
  train::LossProbe initial;
  train::LossProbe final;
  std::size_t steps = 0;
};

// Corpus path in the config is resolved against base_dir when relative.
corpus::Corpus load_corpus_for(const train::TrainConfig& cfg, const std::filesystem::path& base_dir);

TrainSummary run_train(const corpus::Corpus& corpus, const std::string& corpus_hash, const train::TrainConfig& cfg,
                       const std::filesystem::path& out_dir);

eval::EvalReport run_eval(const std::filesystem::path& ckpt, const corpus::Corpus& corpus, std::uint64_t bank_seed);

struct ArmResult {
  TrainSummary summary;
  eval::EvalReport initial;  // untrained parameters of the arm
  eval::EvalReport final;
};

struct Ablation {
  std::uint64_t seed = 0;
  ArmResult align;
  ArmResult no_align;
};

// Trains both arms under out_dir/align and out_dir/noalign, evaluates them on
// the validation split and writes out_dir/ablation.json.
Ablation run_ablate(const corpus::Corpus& corpus, const std::string& corpus_hash, const train::TrainConfig& cfg,
                    const std::filesystem::path& out_dir);

std::string to_json(const Ablation& a);
Ablation ablation_from_json(const std::string& text);

// Markdown with one table for standalone reports and a comparison table for
// ablations.
std::string render_markdown(const std::map<std::string, eval::EvalReport>& reports, const Ablation* ablation);

}  // namespace alnp3::pipeline
