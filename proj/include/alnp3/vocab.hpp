#pragma once

// Closed token vocabulary shared by the corpus, the decoder and the text
// embedder: specials, the integers 0..99, agent tags a0..a15 and the
// template words.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace alnp3::vocab {

using Token = std::uint32_t;

inline constexpr Token kPad = 0;
inline constexpr Token kBos = 1;
inline constexpr Token kEos = 2;
inline constexpr Token kQuery = 3;  // "?"
inline constexpr int kMaxNumber = 99;
inline constexpr int kAgentTags = 16;

std::size_t size();
bool valid(Token t);
Token id(std::string_view word);  // throws ContractError for unknown words
std::string_view word(Token t);
Token number(int n);              // clamps into [0, kMaxNumber]
Token agent_tag(int agent_id);

// Space-separated words to tokens and back.
std::vector<Token> encode(std::string_view text);
std::string decode(std::span<const Token> tokens);

}  // namespace alnp3::vocab
