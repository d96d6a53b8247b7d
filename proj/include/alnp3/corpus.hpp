#pragma once

// Scene corpus: generation across seed splits, the "ALN3" binary container
// and a JSON-lines export.
//
// Binary layout (little-endian): "ALN3", u16 version, then records of
// u8 kind, u32 payload length, payload. Kind 0 is the world header and comes
// first; each scene record (kind 1) is followed by its language (kind 2) and
// QA (kind 3) records.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "alnp3/world.hpp"

namespace alnp3::corpus {

inline constexpr std::uint16_t kFormatVersion = 1;

enum class Split : std::uint8_t { Train = 0, Val = 1 };
const char* to_string(Split s);

// Half-open seed interval [first, last).
struct SeedRange {
  Split split = Split::Train;
  std::uint64_t first = 0;
  std::uint64_t last = 0;
};

// Parses "A..B" (half-open).
SeedRange parse_seed_range(const std::string& text, Split split);

struct CorpusScene {
  Split split = Split::Train;
  world::Scene scene;
  std::vector<world::LanguageSample> language;
  std::vector<world::QASample> qa;
  bool operator==(const CorpusScene&) const = default;
};

struct Corpus {
  world::WorldConfig config;
  std::size_t n_agents = 0;
  std::vector<CorpusScene> scenes;

  std::vector<const CorpusScene*> split(Split s) const;
  bool operator==(const Corpus&) const = default;
};

// Overlapping ranges are a contract error.
Corpus make_dataset(const std::vector<SeedRange>& ranges, std::size_t n_agents,
                    const world::WorldConfig& config = {});

std::vector<std::uint8_t> serialize(const Corpus& corpus);
Corpus deserialize(std::span<const std::uint8_t> data);

void write_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_corpus(const std::filesystem::path& path);

// One JSON object per line: a header line, then one line per scene with its
// samples nested.
std::string to_jsonl(const Corpus& corpus);

}  // namespace alnp3::corpus
