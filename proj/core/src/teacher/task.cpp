#include "prada/teacher/task.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "prada/util/error.hpp"
#include "prada/util/rng.hpp"
#include "prada/util/text.hpp"

namespace prada::teacher {
namespace {

const std::vector<std::string> kWords0 = {
    "apple", "train", "river", "stone", "cloud", "grape", "horse", "lemon", "music", "paper", "table", "water",
    "chair", "plant", "bread", "sugar", "tiger", "robot", "piano", "candy", "glass", "house", "knife", "mouse",
    "night", "queen", "sheep", "smile", "snake", "spoon", "storm", "toast", "wheel", "yacht", "bench", "brick",
    "crown", "dream", "flame", "ghost", "heart", "jelly", "lucky", "maple", "noble", "olive", "pearl", "quilt",
    "shelf", "thumb", "urban", "vivid", "wrist", "young", "block", "cabin", "dough", "fancy", "giant", "honey",
    "ivory", "joint", "karma", "lunar"};

const std::vector<std::string> kWords1 = {
    "ocean", "forest", "pencil", "garden", "rocket", "silver", "planet", "butter", "winter", "summer", "castle",
    "dragon", "button", "mirror", "pillow", "carpet", "bottle", "jacket", "ladder", "magnet", "needle", "orange",
    "parrot", "rabbit", "saddle", "tunnel", "velvet", "walnut", "almond", "banner", "cactus", "donkey", "engine",
    "falcon", "goblet", "hammer", "island", "jungle", "kettle", "lizard", "marble", "napkin", "oyster", "pepper",
    "quartz", "ribbon", "salmon", "turtle", "violin", "window", "yellow", "zipper", "beacon", "candle", "desert",
    "fabric", "gravel", "harbor", "insect", "jigsaw", "kidney", "lagoon", "meadow", "nickel"};

const std::vector<std::string> kNames0 = {"Alice", "Bob",   "Carol", "Dave",  "Erin",  "Frank", "Grace", "Heidi",
                                          "Ivan",  "Judy",  "Mallory", "Niaj", "Olivia", "Peggy", "Rupert", "Sybil",
                                          "Trent", "Victor", "Walter", "Yuki"};

const std::vector<std::string> kNames1 = {"Aiden", "Beatriz", "Chidi", "Dmitri", "Esme",   "Farid", "Gunnar",
                                          "Hana",  "Ingrid",  "Jamal", "Kenji",  "Leilani", "Mateo", "Nadia",
                                          "Oskar", "Priya",   "Quinn", "Rosa",   "Sanjay", "Tomas"};

std::string quote_join(const std::vector<std::string>& words) { return join(words, " "); }

}  // namespace

const char* task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::kLastLetter: return "last_letter";
    case TaskKind::kCoinFlip: return "coin_flip";
    case TaskKind::kModAdd: return "mod_add";
  }
  return "?";
}

TaskKind parse_task(const std::string& name) {
  if (name == "last_letter") return TaskKind::kLastLetter;
  if (name == "coin_flip") return TaskKind::kCoinFlip;
  if (name == "mod_add") return TaskKind::kModAdd;
  throw ConfigError("unknown task kind '" + name + "' (expected last_letter, coin_flip or mod_add)");
}

const std::vector<std::string>& lexicon_words(int lexicon) {
  if (lexicon == 0) return kWords0;
  if (lexicon == 1) return kWords1;
  throw ConfigError("unknown word lexicon " + std::to_string(lexicon));
}

const std::vector<std::string>& actor_names(int lexicon) {
  if (lexicon == 0) return kNames0;
  if (lexicon == 1) return kNames1;
  throw ConfigError("unknown actor-name lexicon " + std::to_string(lexicon));
}

void TaskSpec::validate() const {
  if (count_min < 1 || count_max < count_min) throw ConfigError("task spec: bad count range");
  if (operand_max < operand_min || operand_min < 0) throw ConfigError("task spec: bad operand range");
  if (modulus < 2) throw ConfigError("task spec: modulus must be >= 2");
  if (phrasing < 0 || phrasing > 1) throw ConfigError("task spec: phrasing template must be 0 or 1");
  if (kind != TaskKind::kModAdd) {
    if (kind == TaskKind::kLastLetter) {
      (void)lexicon_words(lexicon);
    } else {
      (void)actor_names(lexicon);
    }
  }
}

void to_json(nlohmann::json& j, const TaskSpec& s) {
  j = nlohmann::json{{"kind", task_name(s.kind)},   {"lexicon", s.lexicon},         {"count_min", s.count_min},
                     {"count_max", s.count_max},    {"operand_min", s.operand_min}, {"operand_max", s.operand_max},
                     {"modulus", s.modulus},        {"phrasing", s.phrasing},       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, TaskSpec& s) {
  TaskSpec d;
  s.kind = parse_task(j.value("kind", std::string(task_name(d.kind))));
  s.lexicon = j.value("lexicon", d.lexicon);
  s.count_min = j.value("count_min", d.count_min);
  s.count_max = j.value("count_max", d.count_max);
  s.operand_min = j.value("operand_min", d.operand_min);
  s.operand_max = j.value("operand_max", d.operand_max);
  s.modulus = j.value("modulus", d.modulus);
  s.phrasing = j.value("phrasing", d.phrasing);
  s.seed = j.value("seed", d.seed);
}

TaskSpec default_source_spec(TaskKind kind, std::uint64_t seed) {
  TaskSpec s;
  s.kind = kind;
  s.seed = seed;
  switch (kind) {
    case TaskKind::kLastLetter: s.lexicon = 0; s.count_min = 2; s.count_max = 2; break;
    case TaskKind::kCoinFlip: s.lexicon = 0; s.count_min = 2; s.count_max = 3; break;
    case TaskKind::kModAdd: s.operand_min = 1; s.operand_max = 50; s.phrasing = 0; break;
  }
  return s;
}

TaskSpec default_target_spec(TaskKind kind, std::uint64_t seed) {
  TaskSpec s;
  s.kind = kind;
  s.seed = derive_seed(seed, 0x7a72);
  switch (kind) {
    case TaskKind::kLastLetter: s.lexicon = 1; s.count_min = 3; s.count_max = 3; break;
    case TaskKind::kCoinFlip: s.lexicon = 1; s.count_min = 4; s.count_max = 6; break;
    case TaskKind::kModAdd: s.operand_min = 50; s.operand_max = 99; s.phrasing = 1; break;
  }
  return s;
}

Sample make_last_letter(const std::vector<std::string>& words, int phrasing) {
  Sample s;
  s.kind = TaskKind::kLastLetter;
  s.words = words;
  const std::string list = quote_join(words);
  s.q = phrasing == 0 ? "Take the last letters of the words in '" + list + "' and concatenate them."
                      : "Concatenate the last letters of each word in '" + list + "'.";
  for (const std::string& w : words) {
    if (w.empty()) throw DataError("last_letter: empty word");
    s.a.push_back(w.back());
  }
  return s;
}

Sample make_coin_flip(const std::vector<std::string>& actors, const std::vector<bool>& flips, int phrasing) {
  if (actors.size() != flips.size()) throw DataError("coin_flip: one action per actor required");
  Sample s;
  s.kind = TaskKind::kCoinFlip;
  s.words = actors;
  s.flips = flips;
  std::ostringstream q;
  q << (phrasing == 0 ? "A coin is heads up." : "A coin starts heads up.");
  int parity = 0;
  for (std::size_t i = 0; i < actors.size(); ++i) {
    if (phrasing == 0) {
      q << ' ' << actors[i] << (flips[i] ? " flips the coin." : " does not flip the coin.");
    } else {
      q << ' ' << actors[i] << (flips[i] ? " flips it." : " leaves it alone.");
    }
    parity ^= flips[i] ? 1 : 0;
  }
  q << (phrasing == 0 ? " Is the coin still heads up?" : " Is it still heads up?");
  s.q = q.str();
  s.a = parity == 0 ? "yes" : "no";
  return s;
}

Sample make_mod_add(int lhs, int rhs, int modulus, int phrasing) {
  Sample s;
  s.kind = TaskKind::kModAdd;
  s.lhs = lhs;
  s.rhs = rhs;
  s.modulus = modulus;
  const std::string x = std::to_string(lhs), y = std::to_string(rhs), m = std::to_string(modulus);
  s.q = phrasing == 0 ? "What is (" + x + " + " + y + ") mod " + m + "?"
                      : "Add " + x + " and " + y + ", then take the remainder modulo " + m + ".";
  s.a = std::to_string((lhs + rhs) % modulus);
  return s;
}

Sample generate_sample(const TaskSpec& spec, std::uint64_t index) {
  Rng rng(derive_seed(spec.seed, index, 0x5a3d));
  switch (spec.kind) {
    case TaskKind::kLastLetter: {
      const auto& lex = lexicon_words(spec.lexicon);
      const int n = rng.range(spec.count_min, spec.count_max);
      std::vector<std::string> words;
      for (int i = 0; i < n; ++i) words.push_back(lex[rng.below(lex.size())]);
      return make_last_letter(words, spec.phrasing);
    }
    case TaskKind::kCoinFlip: {
      const auto& names = actor_names(spec.lexicon);
      const int n = rng.range(spec.count_min, std::min<int>(spec.count_max, static_cast<int>(names.size())));
      std::vector<std::size_t> idx(names.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      rng.shuffle(idx);
      std::vector<std::string> actors;
      std::vector<bool> flips;
      for (int i = 0; i < n; ++i) {
        actors.push_back(names[idx[static_cast<std::size_t>(i)]]);
        flips.push_back(rng.bernoulli(0.5));
      }
      return make_coin_flip(actors, flips, spec.phrasing);
    }
    case TaskKind::kModAdd: {
      const int x = rng.range(spec.operand_min, spec.operand_max);
      const int y = rng.range(spec.operand_min, spec.operand_max);
      return make_mod_add(x, y, spec.modulus, spec.phrasing);
    }
  }
  throw ConfigError("unknown task kind");
}

std::vector<Sample> generate_samples(const TaskSpec& spec, std::size_t n, std::uint64_t first_index) {
  if (n < 1) throw ConfigError("generate_samples: n must be >= 1");
  spec.validate();
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_sample(spec, first_index + i));
  return out;
}

namespace {

std::string between(const std::string& s, const std::string& open, const std::string& close) {
  const std::size_t b = s.find(open);
  if (b == std::string::npos) throw DataError("question does not parse: " + s);
  const std::size_t start = b + open.size();
  const std::size_t e = s.find(close, start);
  if (e == std::string::npos) throw DataError("question does not parse: " + s);
  return s.substr(start, e - start);
}

}  // namespace

std::string solve_question(TaskKind kind, const std::string& q) {
  switch (kind) {
    case TaskKind::kLastLetter: {
      const std::string list = between(q, "'", "'");
      std::istringstream in(list);
      std::string word, answer;
      while (in >> word) answer.push_back(word.back());
      if (answer.empty()) throw DataError("question does not parse: " + q);
      return answer;
    }
    case TaskKind::kCoinFlip: {
      int parity = 0;
      for (std::size_t pos = 0; (pos = q.find(" flips ", pos)) != std::string::npos; ++pos) parity ^= 1;
      return parity == 0 ? "yes" : "no";
    }
    case TaskKind::kModAdd: {
      std::vector<int> nums;
      std::string cur;
      for (char c : q + " ") {
        if (std::isdigit(static_cast<unsigned char>(c))) {
          cur.push_back(c);
        } else if (!cur.empty()) {
          nums.push_back(std::stoi(cur));
          cur.clear();
        }
      }
      if (nums.size() != 3 || nums[2] < 2) throw DataError("question does not parse: " + q);
      return std::to_string((nums[0] + nums[1]) % nums[2]);
    }
  }
  throw DataError("unknown task kind");
}

}  // namespace prada::teacher
