// alnp3: corpus generation, training, evaluation, ablation, gradient checks
// and markdown reports.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "alnp3/bytes.hpp"
#include "alnp3/gradcheck.hpp"
#include "alnp3/pipeline.hpp"

namespace fs = std::filesystem;
using namespace alnp3;

namespace {

constexpr int kUsageExit = 2;

corpus::SeedRange shifted(corpus::SeedRange r, std::uint64_t offset) {
  r.first += offset;
  r.last += offset;
  return r;
}

train::TrainConfig load_config(const fs::path& path, std::optional<std::uint64_t> seed) {
  auto cfg = config::load_train_config(path);
  if (seed) cfg.seed = *seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alnp3: aligned driving stack and language head at desk scale", "alnp3"};
  app.require_subcommand(1);
  app.set_version_flag("--version", config::kToolVersion);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a scene corpus");
  std::string seeds, val_seeds, gen_out, gen_jsonl;
  std::size_t agents = 4;
  std::uint64_t gen_seed = 0;
  gen->add_option("--seeds", seeds, "training seed range A..B (half-open)")->required();
  gen->add_option("--val-seeds", val_seeds, "held-out seed range C..D (half-open)");
  gen->add_option("--agents", agents, "agents per scene")->required();
  gen->add_option("--out", gen_out, "corpus file")->required();
  gen->add_option("--jsonl", gen_jsonl, "also write a JSON-lines export");
  gen->add_option("--seed", gen_seed, "offset added to every scene seed");

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_config, tr_out;
  std::optional<std::uint64_t> tr_seed;
  tr->add_option("--config", tr_config, "config file")->required();
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--seed", tr_seed, "override the config seed");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_corpus, ev_out;
  std::uint64_t ev_seed = 0;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--corpus", ev_corpus, "corpus file")->required();
  ev->add_option("--out", ev_out, "report JSON")->required();
  ev->add_option("--seed", ev_seed, "seed for probe banks when the checkpoint has no alignment tensors");

  // ablate
  auto* ab = app.add_subcommand("ablate", "train with and without alignment and compare");
  std::string ab_config, ab_out;
  std::optional<std::uint64_t> ab_seed;
  ab->add_option("--config", ab_config, "config file")->required();
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->add_option("--seed", ab_seed, "override the config seed");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every loss");
  std::uint64_t gc_seed = 1;
  std::size_t gc_configs = 20;
  gc->add_option("--seed", gc_seed, "seed");
  gc->add_option("--configs", gc_configs, "random configurations per loss")->check(CLI::Range(1, 100000));

  // report
  auto* rp = app.add_subcommand("report", "render reports to markdown");
  std::vector<std::string> rp_evals;
  std::string rp_ablation, rp_out;
  std::uint64_t rp_seed = 0;
  rp->add_option("--eval", rp_evals, "eval report JSON, optionally NAME=PATH");
  rp->add_option("--ablation", rp_ablation, "ablation.json");
  rp->add_option("--out", rp_out, "markdown file (stdout when omitted)");
  rp->add_option("--seed", rp_seed, "accepted for uniformity; rendering is deterministic");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsageExit;
  }

  try {
    if (gen->parsed()) {
      std::vector<corpus::SeedRange> ranges{shifted(corpus::parse_seed_range(seeds, corpus::Split::Train), gen_seed)};
      if (!val_seeds.empty())
        ranges.push_back(shifted(corpus::parse_seed_range(val_seeds, corpus::Split::Val), gen_seed));
      auto c = corpus::make_dataset(ranges, agents);
      corpus::write_corpus(c, gen_out);
      if (!gen_jsonl.empty()) bytes::write_text(gen_jsonl, corpus::to_jsonl(c));
      std::cout << "wrote " << c.scenes.size() << " scenes to " << gen_out << " (" << bytes::file_hash(gen_out) << ")\n";
    } else if (tr->parsed()) {
      auto cfg = load_config(tr_config, tr_seed);
      const fs::path base = fs::path(tr_config).parent_path();
      auto c = pipeline::load_corpus_for(cfg, base);
      const fs::path corpus_path = fs::path(cfg.corpus).is_relative() ? base / cfg.corpus : fs::path(cfg.corpus);
      auto s = pipeline::run_train(c, bytes::file_hash(corpus_path), cfg, tr_out);
      std::printf("task %.6f -> %.6f, lm %.6f -> %.6f\n", s.initial.task, s.final.task, s.initial.lm, s.final.lm);
    } else if (ev->parsed()) {
      auto c = corpus::read_corpus(ev_corpus);
      auto r = pipeline::run_eval(ev_ckpt, c, ev_seed);
      bytes::write_text(ev_out, eval::to_json(r) + "\n");
      std::cout << eval::to_json(r) << "\n";
    } else if (ab->parsed()) {
      auto cfg = load_config(ab_config, ab_seed);
      const fs::path base = fs::path(ab_config).parent_path();
      auto c = pipeline::load_corpus_for(cfg, base);
      const fs::path corpus_path = fs::path(cfg.corpus).is_relative() ? base / cfg.corpus : fs::path(cfg.corpus);
      auto a = pipeline::run_ablate(c, bytes::file_hash(corpus_path), cfg, ab_out);
      std::cout << pipeline::render_markdown({}, &a);
    } else if (gc->parsed()) {
      auto r = gradcheck::run(gc_seed, gc_configs);
      std::cout << gradcheck::format(r);
      if (!r.ok(gc_configs)) {
        std::cerr << "gradient check failed\n";
        return 1;
      }
    } else if (rp->parsed()) {
      std::map<std::string, eval::EvalReport> reports;
      for (const auto& spec : rp_evals) {
        const auto eq = spec.find('=');
        const std::string name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
        const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
        reports[name] = eval::report_from_json(bytes::read_text(path));
      }
      std::optional<pipeline::Ablation> a;
      if (!rp_ablation.empty()) a = pipeline::ablation_from_json(bytes::read_text(rp_ablation));
      if (reports.empty() && !a) throw ContractError("report: give at least one --eval or --ablation");
      const std::string md = pipeline::render_markdown(reports, a ? &*a : nullptr);
      if (rp_out.empty())
        std::cout << md;
      else
        bytes::write_text(rp_out, md);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
