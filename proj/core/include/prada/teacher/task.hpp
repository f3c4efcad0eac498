#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace prada::teacher {

enum class TaskKind { kLastLetter, kCoinFlip, kModAdd };

const char* task_name(TaskKind kind);
TaskKind parse_task(const std::string& name);  // ConfigError on unknown names

// Generator description for one synthetic reasoning domain.
struct TaskSpec {
  TaskKind kind = TaskKind::kLastLetter;
  int lexicon = 0;     // word list (last_letter) or actor-name list (coin_flip)
  int count_min = 2;   // words per question / coin actions
  int count_max = 2;
  int operand_min = 1; // mod_add operand range
  int operand_max = 50;
  int modulus = 10;
  int phrasing = 0;    // question template id
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

void to_json(nlohmann::json& j, const TaskSpec& s);
void from_json(const nlohmann::json& j, TaskSpec& s);

// The fixed source -> target shift per task kind.
TaskSpec default_source_spec(TaskKind kind, std::uint64_t seed);
TaskSpec default_target_spec(TaskKind kind, std::uint64_t seed);

// A question with its gold answer, plus the structured facts it was built from.
struct Sample {
  TaskKind kind = TaskKind::kLastLetter;
  std::string q;
  std::string a;
  std::vector<std::string> words;  // last_letter words or coin_flip actors
  std::vector<bool> flips;         // coin_flip: true = flips the coin
  int lhs = 0, rhs = 0, modulus = 10;
};

Sample make_last_letter(const std::vector<std::string>& words, int phrasing = 0);
Sample make_coin_flip(const std::vector<std::string>& actors, const std::vector<bool>& flips, int phrasing = 0);
Sample make_mod_add(int lhs, int rhs, int modulus, int phrasing = 0);

// Pure function of (spec, index).
Sample generate_sample(const TaskSpec& spec, std::uint64_t index);
std::vector<Sample> generate_samples(const TaskSpec& spec, std::size_t n, std::uint64_t first_index = 0);

// Re-derives the gold answer by parsing the question text; used as the
// generator self-check. Throws DataError when the text does not parse.
std::string solve_question(TaskKind kind, const std::string& q);

const std::vector<std::string>& lexicon_words(int lexicon);
const std::vector<std::string>& actor_names(int lexicon);

}  // namespace prada::teacher
