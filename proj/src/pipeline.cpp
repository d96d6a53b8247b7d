#include "alnp3/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>

#include "alnp3/bytes.hpp"
#include "json.hpp"

namespace alnp3::pipeline {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - start_).count();
    start_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

ordered_json probe_json(const train::LossProbe& p) { return {{"task", p.task}, {"lm", p.lm}}; }

train::LossProbe probe_from(const nlohmann::json& j) { return {j.at("task").get<double>(), j.at("lm").get<double>()}; }

ordered_json summary_json(const TrainSummary& s) {
  return {{"steps", s.steps}, {"initial", probe_json(s.initial)}, {"final", probe_json(s.final)}};
}

TrainSummary summary_from(const nlohmann::json& j) {
  return {probe_from(j.at("initial")), probe_from(j.at("final")), j.at("steps").get<std::size_t>()};
}

ordered_json arm_json(const ArmResult& a) {
  return {{"summary", summary_json(a.summary)},
          {"initial", ordered_json::parse(eval::to_json(a.initial))},
          {"final", ordered_json::parse(eval::to_json(a.final))}};
}

ArmResult arm_from(const nlohmann::json& j) {
  return {summary_from(j.at("summary")), eval::report_from_json(j.at("initial").dump()),
          eval::report_from_json(j.at("final").dump())};
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string report_row(const std::string& name, const eval::EvalReport& r) {
  std::ostringstream os;
  os << "| " << name << " | " << fixed(r.collision.by_horizon[0]) << " | " << fixed(r.collision.by_horizon[1]) << " | "
     << fixed(r.collision.by_horizon[2]) << " | " << fixed(r.collision.avg) << " | " << fixed(r.bleu4) << " | "
     << fixed(r.qa.h0) << " | " << fixed(r.qa.h1) << " | " << fixed(r.qa.all) << " | " << fixed(r.consistency)
     << " | " << r.n_scenes << " |\n";
  return os.str();
}

const char* kHeader =
    "| run | coll. 1s | coll. 2s | coll. 3s | coll. avg | BLEU-4 | QA H0 | QA H1 | QA All | consistency | scenes |\n"
    "|---|---|---|---|---|---|---|---|---|---|---|\n";

}  // namespace

std::string to_json(const RunManifest& m) {
  ordered_json j;
  j["tool_version"] = m.tool_version;
  j["config"] = m.config;
  j["corpus_hash"] = m.corpus_hash;
  j["checkpoint_hashes"] = m.checkpoint_hashes;
  j["timings_s"] = m.timings_s;
  return j.dump(2);
}

RunManifest manifest_from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config = j.at("config").get<std::string>();
    m.corpus_hash = j.at("corpus_hash").get<std::string>();
    m.checkpoint_hashes = j.at("checkpoint_hashes").get<std::map<std::string, std::string>>();
    m.timings_s = j.at("timings_s").get<std::map<std::string, double>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("manifest: ") + e.what());
  }
}

void verify_manifest(const fs::path& dir) {
  const RunManifest m = manifest_from_json(bytes::read_text(dir / "manifest.json"));
  for (const auto& [name, hash] : m.checkpoint_hashes) {
    const std::string actual = bytes::file_hash(dir / name);
    if (actual != hash) throw IoError("manifest: hash mismatch for " + name + " (" + actual + " vs " + hash + ")");
  }
}

corpus::Corpus load_corpus_for(const train::TrainConfig& cfg, const fs::path& base_dir) {
  if (cfg.corpus.empty()) throw config::ConfigError("config key 'corpus' is required");
  fs::path p(cfg.corpus);
  if (p.is_relative()) p = base_dir / p;
  return corpus::read_corpus(p);
}

TrainSummary run_train(const corpus::Corpus& corpus, const std::string& corpus_hash, const train::TrainConfig& cfg,
                       const fs::path& out_dir) {
  fs::create_directories(out_dir);
  Stopwatch clock;
  RunManifest manifest;
  manifest.config = config::format(cfg);
  manifest.corpus_hash = corpus_hash;

  std::string lines;
  auto result = train::train(corpus, cfg, [&](const train::StepReport& r) { lines += train::to_json_line(r) + "\n"; });
  manifest.timings_s["train"] = clock.lap();

  bytes::write_file(out_dir / "init.alnt", result.initial_checkpoint);
  result.model.save(out_dir / "model.alnt");
  bytes::write_text(out_dir / "reports.jsonl", lines);
  TrainSummary summary{result.initial, result.final, cfg.steps};
  bytes::write_text(out_dir / "summary.json", summary_json(summary).dump(2) + "\n");
  for (const char* name : {"init.alnt", "model.alnt"}) manifest.checkpoint_hashes[name] = bytes::file_hash(out_dir / name);
  manifest.timings_s["write"] = clock.lap();
  bytes::write_text(out_dir / "manifest.json", to_json(manifest) + "\n");
  return summary;
}

eval::EvalReport run_eval(const fs::path& ckpt, const corpus::Corpus& corpus, std::uint64_t bank_seed) {
  Model model = Model::load(ckpt, ModelConfig{}, corpus.config);
  auto scenes = corpus.split(corpus::Split::Val);
  if (scenes.empty()) scenes = corpus.split(corpus::Split::Train);
  return eval::evaluate(model, scenes, bank_seed);
}

Ablation run_ablate(const corpus::Corpus& corpus, const std::string& corpus_hash, const train::TrainConfig& cfg,
                    const fs::path& out_dir) {
  const auto val = corpus.split(corpus::Split::Val);
  if (val.empty()) throw ContractError("ablate: corpus has no validation scenes");
  Ablation a;
  a.seed = cfg.seed;
  auto arm = [&](bool align, const std::string& name) {
    train::TrainConfig c = cfg;
    c.align_enabled = align;
    const fs::path dir = out_dir / name;
    ArmResult r;
    r.summary = run_train(corpus, corpus_hash, c, dir);
    r.initial = run_eval(dir / "init.alnt", corpus, cfg.seed);
    r.final = run_eval(dir / "model.alnt", corpus, cfg.seed);
    bytes::write_text(dir / "report.json", eval::to_json(r.final) + "\n");
    return r;
  };
  a.align = arm(true, "align");
  a.no_align = arm(false, "noalign");
  bytes::write_text(out_dir / "ablation.json", to_json(a) + "\n");
  return a;
}

std::string to_json(const Ablation& a) {
  ordered_json j;
  j["seed"] = a.seed;
  j["align"] = arm_json(a.align);
  j["noalign"] = arm_json(a.no_align);
  return j.dump(2);
}

Ablation ablation_from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    return {j.at("seed").get<std::uint64_t>(), arm_from(j.at("align")), arm_from(j.at("noalign"))};
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("ablation: ") + e.what());
  }
}

std::string render_markdown(const std::map<std::string, eval::EvalReport>& reports, const Ablation* ablation) {
  std::ostringstream os;
  os << "# Evaluation report\n\n";
  if (!reports.empty()) {
    os << "## Reports\n\n" << kHeader;
    for (const auto& [name, r] : reports) os << report_row(name, r);
    os << "\n";
  }
  if (ablation) {
    const auto& al = ablation->align;
    const auto& na = ablation->no_align;
    os << "## Alignment ablation (seed " << ablation->seed << ")\n\n" << kHeader;
    os << report_row("untrained", al.initial);
    os << report_row("align", al.final);
    os << report_row("no-align", na.final);
    os << "\n| arm | task loss start | task loss end | LM loss start | LM loss end |\n|---|---|---|---|---|\n";
    for (const auto* arm : {&al, &na}) {
      os << "| " << (arm == &al ? "align" : "no-align") << " | " << fixed(arm->summary.initial.task) << " | "
         << fixed(arm->summary.final.task) << " | " << fixed(arm->summary.initial.lm) << " | "
         << fixed(arm->summary.final.lm) << " |\n";
    }
    os << "\nConsistency change (align arm): " << fixed(al.final.consistency - al.initial.consistency)
       << "; align minus no-align: " << fixed(al.final.consistency - na.final.consistency) << "\n";
  }
  return os.str();
}

}  // namespace alnp3::pipeline
