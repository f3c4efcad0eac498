#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "prada/model/student.hpp"

namespace prada::eval {

struct DecodeResult {
  std::string completion;  // leading separator space removed
  bool truncated = false;  // budget or context exhausted before " END"
};

// Argmax decoding (lowest id wins ties) from a formatted question until the
// completion ends with " END" or max_new_tokens is reached.
DecodeResult greedy_decode(const model::StudentModel& model, const std::string& q_formatted,
                           std::size_t max_new_tokens);

// Text between the last " --> " and the next " END", trimmed.
std::optional<std::string> extract_answer(const std::string& completion);

}  // namespace prada::eval
