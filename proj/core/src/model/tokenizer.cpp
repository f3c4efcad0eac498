#include "prada/model/tokenizer.hpp"

#include "prada/util/error.hpp"

namespace prada::model {

bool CharTokenizer::encodable(char c) noexcept { return c == '\n' || (c >= 0x20 && c <= 0x7e); }

std::size_t CharTokenizer::id(char c) {
  if (c == '\n') return kNewlineId;
  if (c < 0x20 || c > 0x7e) {
    throw DataError("tokenizer: character code " + std::to_string(static_cast<int>(static_cast<unsigned char>(c))) +
                    " is outside the 96-symbol alphabet");
  }
  return static_cast<std::size_t>(c - 0x20);
}

char CharTokenizer::symbol(std::size_t id) {
  if (id == kNewlineId) return '\n';
  if (id >= kVocabSize) throw DataError("tokenizer: id " + std::to_string(id) + " outside vocabulary");
  return static_cast<char>(0x20 + id);
}

std::vector<std::size_t> CharTokenizer::encode(std::string_view text) {
  std::vector<std::size_t> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(id(c));
  return ids;
}

std::string CharTokenizer::decode(const std::vector<std::size_t>& ids) {
  std::string out;
  out.reserve(ids.size());
  for (std::size_t i : ids) out.push_back(symbol(i));
  return out;
}

}  // namespace prada::model
