#include "alnp3/vocab.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include "alnp3/errors.hpp"

namespace alnp3::vocab {

namespace {

const char* const kWords[] = {
    "car", "truck", "pedestrian", "barrier", "cars", "trucks", "pedestrians", "barriers",
    "about", "meters", "front", "back", "left", "right", "is", "not", "moving", "stopped",
    "describe", "predict", "agent", "will", "move", "stay", "at", "per", "second",
    "what", "should", "ego", "do", "continues", "straight", "because", "the", "road", "ahead", "clear",
    "stops", "traffic", "light", "red", "a", "crossing",
    "status", "how", "many", "things", "are", "in", "same", "as", "there", "any", "yes", "no", "to", "of",
};

struct Table {
  std::vector<std::string> words;
  std::unordered_map<std::string, Token> ids;

  Table() {
    words = {"<pad>", "<bos>", "<eos>", "?"};
    for (int n = 0; n <= kMaxNumber; ++n) words.push_back(std::to_string(n));
    for (int a = 0; a < kAgentTags; ++a) words.push_back("a" + std::to_string(a));
    for (const char* w : kWords) words.emplace_back(w);
    for (std::size_t i = 0; i < words.size(); ++i) ids.emplace(words[i], static_cast<Token>(i));
  }
};

const Table& table() {
  static const Table t;
  return t;
}

}  // namespace

std::size_t size() { return table().words.size(); }

bool valid(Token t) { return t < size(); }

Token id(std::string_view w) {
  const auto& ids = table().ids;
  auto it = ids.find(std::string(w));
  if (it == ids.end()) throw ContractError("vocab: unknown word '" + std::string(w) + "'");
  return it->second;
}

std::string_view word(Token t) {
  if (!valid(t)) throw ContractError("vocab: token " + std::to_string(t) + " out of range");
  return table().words[t];
}

Token number(int n) { return static_cast<Token>(4 + std::clamp(n, 0, kMaxNumber)); }

Token agent_tag(int agent_id) {
  if (agent_id < 0 || agent_id >= kAgentTags) throw ContractError("vocab: agent id out of range");
  return static_cast<Token>(4 + kMaxNumber + 1 + agent_id);
}

std::vector<Token> encode(std::string_view text) {
  std::vector<Token> out;
  std::istringstream is{std::string(text)};
  std::string w;
  while (is >> w) out.push_back(id(w));
  return out;
}

std::string decode(std::span<const Token> tokens) {
  std::string out;
  for (Token t : tokens) {
    if (!out.empty()) out += ' ';
    out += word(t);
  }
  return out;
}

}  // namespace alnp3::vocab
