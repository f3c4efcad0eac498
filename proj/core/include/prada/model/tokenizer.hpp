#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace prada::model {

// Character-level tokenizer over printable ASCII (0x20..0x7e) plus newline.
class CharTokenizer {
 public:
  static constexpr std::size_t kVocabSize = 96;
  static constexpr std::size_t kNewlineId = 95;

  static bool encodable(char c) noexcept;
  static std::size_t id(char c);
  static char symbol(std::size_t id);

  static std::vector<std::size_t> encode(std::string_view text);
  static std::string decode(const std::vector<std::size_t>& ids);
};

}  // namespace prada::model
