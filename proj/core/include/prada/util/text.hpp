#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace prada {

std::string trim(std::string_view s);

// Trim, lowercase, and collapse internal whitespace runs to one space. Used
// identically by the teacher filter and by evaluation scoring.
std::string normalize_answer(std::string_view s);

bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);
std::size_t count_occurrences(std::string_view s, std::string_view needle);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace prada
