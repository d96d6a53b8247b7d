#include "alnp3/corpus.hpp"

#include <algorithm>
#include "json.hpp"

#include "alnp3/bytes.hpp"

namespace alnp3::corpus {

namespace {

using world::Vec2;
using vocab::Token;

enum Kind : std::uint8_t { kHeader = 0, kScene = 1, kLanguage = 2, kQa = 3 };

void put_points(bytes::Writer& w, const std::vector<Vec2>& pts) {
  w.u32(static_cast<std::uint32_t>(pts.size()));
  for (const auto& p : pts) {
    w.f64(p.x);
    w.f64(p.y);
  }
}

std::vector<Vec2> get_points(bytes::Reader& r) {
  std::vector<Vec2> pts(r.u32());
  for (auto& p : pts) {
    p.x = r.f64();
    p.y = r.f64();
  }
  return pts;
}

void put_tokens(bytes::Writer& w, const std::vector<Token>& t) {
  w.u32(static_cast<std::uint32_t>(t.size()));
  for (Token x : t) w.u32(x);
}

std::vector<Token> get_tokens(bytes::Reader& r) {
  std::vector<Token> t(r.u32());
  for (auto& x : t) {
    x = r.u32();
    if (!vocab::valid(x)) throw IoError("corpus: token out of vocabulary range");
  }
  return t;
}

void record(bytes::Writer& out, Kind kind, const bytes::Writer& payload) {
  out.u8(kind);
  out.u32(static_cast<std::uint32_t>(payload.buffer().size()));
  out.raw(payload.buffer());
}

template <typename E>
E checked_enum(std::uint8_t v, std::uint8_t count, const char* what) {
  if (v >= count) throw IoError(std::string("corpus: invalid ") + what);
  return static_cast<E>(v);
}

nlohmann::json points_json(const std::vector<Vec2>& pts) {
  auto a = nlohmann::json::array();
  for (const auto& p : pts) a.push_back({p.x, p.y});
  return a;
}

}  // namespace

const char* to_string(Split s) { return s == Split::Train ? "train" : "val"; }

SeedRange parse_seed_range(const std::string& text, Split split) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) throw ContractError("seed range must look like A..B, got '" + text + "'");
  try {
    SeedRange r{split, std::stoull(text.substr(0, dots)), std::stoull(text.substr(dots + 2))};
    if (r.last <= r.first) throw ContractError("seed range '" + text + "' is empty");
    return r;
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const ContractError*>(&e)) throw;
    throw ContractError("seed range must look like A..B, got '" + text + "'");
  }
}

std::vector<const CorpusScene*> Corpus::split(Split s) const {
  std::vector<const CorpusScene*> out;
  for (const auto& cs : scenes)
    if (cs.split == s) out.push_back(&cs);
  return out;
}

Corpus make_dataset(const std::vector<SeedRange>& ranges, std::size_t n_agents, const world::WorldConfig& config) {
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    if (ranges[i].last <= ranges[i].first) throw ContractError("make_dataset: empty seed range");
    for (std::size_t j = i + 1; j < ranges.size(); ++j)
      if (ranges[i].first < ranges[j].last && ranges[j].first < ranges[i].last)
        throw ContractError("make_dataset: seed ranges of splits '" + std::string(to_string(ranges[i].split)) +
                            "' and '" + to_string(ranges[j].split) + "' overlap");
  }
  Corpus c;
  c.config = config;
  c.n_agents = n_agents;
  for (const auto& r : ranges)
    for (std::uint64_t seed = r.first; seed < r.last; ++seed) {
      CorpusScene cs;
      cs.split = r.split;
      cs.scene = world::generate_scene(seed, n_agents, config);
      cs.language = world::language_samples(cs.scene, config);
      cs.qa = world::qa_samples(cs.scene);
      c.scenes.push_back(std::move(cs));
    }
  return c;
}

std::vector<std::uint8_t> serialize(const Corpus& c) {
  bytes::Writer out;
  out.raw("ALN3");
  out.u16(kFormatVersion);

  bytes::Writer h;
  const auto& cfg = c.config;
  h.u16(static_cast<std::uint16_t>(cfg.past_steps));
  h.u16(static_cast<std::uint16_t>(cfg.future_steps));
  h.f64(cfg.dt);
  h.u16(static_cast<std::uint16_t>(cfg.grid));
  h.f64(cfg.cell);
  h.u16(static_cast<std::uint16_t>(cfg.max_agents));
  for (double v : cfg.v_max) h.f64(v);
  for (double v : cfg.radius) h.f64(v);
  h.f64(cfg.ego_radius);
  h.f64(cfg.ego_v_max);
  h.u32(static_cast<std::uint32_t>(c.n_agents));
  record(out, kHeader, h);

  for (const auto& cs : c.scenes) {
    const auto& s = cs.scene;
    bytes::Writer w;
    w.u8(static_cast<std::uint8_t>(cs.split));
    w.u64(s.seed);
    w.u8(static_cast<std::uint8_t>(s.scenario));
    w.u32(static_cast<std::uint32_t>(s.agents.size()));
    for (const auto& a : s.agents) {
      w.i32(a.id);
      w.u8(static_cast<std::uint8_t>(a.cls));
      w.u8(static_cast<std::uint8_t>(a.status));
      put_points(w, a.past);
      put_points(w, a.future_gt);
    }
    put_points(w, s.ego_past);
    put_points(w, s.ego_future_gt);
    put_points(w, s.lane);
    record(out, kScene, w);

    for (const auto& ls : cs.language) {
      bytes::Writer l;
      l.u64(s.seed);
      l.u8(static_cast<std::uint8_t>(ls.category));
      l.i32(ls.agent_id.value_or(-1));
      put_tokens(l, ls.prompt);
      put_tokens(l, ls.target);
      record(out, kLanguage, l);
    }
    for (const auto& qa : cs.qa) {
      bytes::Writer q;
      q.u64(s.seed);
      q.u8(static_cast<std::uint8_t>(qa.hop));
      put_tokens(q, qa.question);
      put_tokens(q, qa.answer);
      record(out, kQa, q);
    }
  }
  return std::move(out.buffer());
}

Corpus deserialize(std::span<const std::uint8_t> data) {
  bytes::Reader in(data);
  if (in.str(4) != "ALN3") throw IoError("corpus: bad magic");
  if (const auto v = in.u16(); v != kFormatVersion)
    throw IoError("corpus: unsupported format version " + std::to_string(v));

  Corpus c;
  bool have_header = false;
  while (!in.done()) {
    const auto kind = in.u8();
    const auto len = in.u32();
    bytes::Reader r(in.take(len));
    switch (kind) {
      case kHeader: {
        auto& cfg = c.config;
        cfg.past_steps = r.u16();
        cfg.future_steps = r.u16();
        cfg.dt = r.f64();
        cfg.grid = r.u16();
        cfg.cell = r.f64();
        cfg.max_agents = r.u16();
        for (double& v : cfg.v_max) v = r.f64();
        for (double& v : cfg.radius) v = r.f64();
        cfg.ego_radius = r.f64();
        cfg.ego_v_max = r.f64();
        c.n_agents = r.u32();
        have_header = true;
        break;
      }
      case kScene: {
        if (!have_header) throw IoError("corpus: scene before header");
        CorpusScene cs;
        cs.split = checked_enum<Split>(r.u8(), 2, "split");
        auto& s = cs.scene;
        s.seed = r.u64();
        s.scenario = checked_enum<world::Scenario>(r.u8(), 3, "scenario");
        s.agents.resize(r.u32());
        for (auto& a : s.agents) {
          a.id = r.i32();
          a.cls = checked_enum<world::AgentClass>(r.u8(), 4, "agent class");
          a.status = checked_enum<world::Status>(r.u8(), 2, "agent status");
          a.past = get_points(r);
          a.future_gt = get_points(r);
        }
        s.ego_past = get_points(r);
        s.ego_future_gt = get_points(r);
        s.lane = get_points(r);
        c.scenes.push_back(std::move(cs));
        break;
      }
      case kLanguage:
      case kQa: {
        if (c.scenes.empty()) throw IoError("corpus: sample record before any scene");
        auto& cs = c.scenes.back();
        if (r.u64() != cs.scene.seed) throw IoError("corpus: sample does not follow its scene");
        if (kind == kLanguage) {
          world::LanguageSample ls;
          ls.category = checked_enum<world::Category>(r.u8(), 3, "category");
          if (const int id = r.i32(); id >= 0) ls.agent_id = id;
          ls.prompt = get_tokens(r);
          ls.target = get_tokens(r);
          cs.language.push_back(std::move(ls));
        } else {
          world::QASample qa;
          qa.hop = checked_enum<world::Hop>(r.u8(), 2, "hop");
          qa.question = get_tokens(r);
          qa.answer = get_tokens(r);
          cs.qa.push_back(std::move(qa));
        }
        break;
      }
      default:
        throw IoError("corpus: unknown record kind " + std::to_string(kind));
    }
    if (!r.done()) throw IoError("corpus: record length mismatch");
  }
  if (!have_header) throw IoError("corpus: missing header");
  return c;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  bytes::write_file(path, serialize(corpus));
}

Corpus read_corpus(const std::filesystem::path& path) { return deserialize(bytes::read_file(path)); }

std::string to_jsonl(const Corpus& c) {
  using nlohmann::json;
  std::string out;
  json header = {{"format", "ALN3"},
                 {"version", kFormatVersion},
                 {"n_agents", c.n_agents},
                 {"past_steps", c.config.past_steps},
                 {"future_steps", c.config.future_steps},
                 {"dt", c.config.dt}};
  out += header.dump() + "\n";
  for (const auto& cs : c.scenes) {
    const auto& s = cs.scene;
    json j;
    j["split"] = to_string(cs.split);
    j["seed"] = s.seed;
    j["scenario"] = world::to_string(s.scenario);
    j["ego_past"] = points_json(s.ego_past);
    j["ego_future_gt"] = points_json(s.ego_future_gt);
    j["agents"] = json::array();
    for (const auto& a : s.agents)
      j["agents"].push_back({{"id", a.id},
                             {"class", world::to_string(a.cls)},
                             {"status", world::to_string(a.status)},
                             {"past", points_json(a.past)},
                             {"future_gt", points_json(a.future_gt)}});
    j["language"] = json::array();
    for (const auto& ls : cs.language) {
      json l = {{"category", world::to_string(ls.category)},
                {"prompt", vocab::decode(ls.prompt)},
                {"target", vocab::decode(ls.target)}};
      if (ls.agent_id) l["agent_id"] = *ls.agent_id;
      j["language"].push_back(std::move(l));
    }
    j["qa"] = json::array();
    for (const auto& qa : cs.qa)
      j["qa"].push_back({{"hop", world::to_string(qa.hop)},
                         {"question", vocab::decode(qa.question)},
                         {"answer", vocab::decode(qa.answer)}});
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace alnp3::corpus
