#include "prada/teacher/teacher.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "prada/util/error.hpp"
#include "prada/util/rng.hpp"
#include "prada/util/text.hpp"

namespace prada::teacher {
namespace {

constexpr std::size_t kStepTemplates = 5;
// Template k is drawn with weight exp(-k / (kSpread * t)); t = 0 always picks 0.
constexpr double kSpread = 8.0;
// Probability of an order jitter at temperature >= 1.
constexpr double kJitterRate = 0.1;

std::size_t choose(Rng& rng, double temperature, std::size_t n) {
  if (temperature <= 0.0) return 0;
  std::vector<double> w(n);
  for (std::size_t k = 0; k < n; ++k) w[k] = std::exp(-static_cast<double>(k) / (kSpread * temperature));
  return rng.categorical(w);
}

std::string quoted(const std::string& s) { return "'" + s + "'"; }

std::string letter_step(std::size_t tmpl, const std::string& word, char letter) {
  const std::string w = quoted(word), l = quoted(std::string(1, letter));
  switch (tmpl) {
    case 0: return "The last letter of " + w + " is " + l + ".";
    case 1: return w + " ends with " + l + ".";
    case 2: return "The word " + w + " ends in " + l + ".";
    case 3: return w + " ends in the letter " + l + ".";
    default: return "For " + w + ", the last letter is " + l + ".";
  }
}

std::string letter_intro(std::size_t tmpl) {
  switch (tmpl) {
    case 0: return "";
    case 1: return "Look at each word.";
    default: return "Go word by word.";
  }
}

std::string letter_outro(std::size_t tmpl, const std::string& letters) {
  switch (tmpl) {
    case 0: return "";
    case 1: return "Concatenating them gives " + quoted(letters) + ".";
    case 2: return "Together they spell " + quoted(letters) + ".";
    default: return "Joined: " + quoted(letters) + ".";
  }
}

std::string coin_step(std::size_t tmpl, const std::string& actor, bool flip, bool heads) {
  const std::string s = heads ? "heads" : "tails";
  switch (tmpl) {
    case 0:
      return flip ? actor + " flips the coin, so it is " + s + "."
                  : actor + " does not flip the coin, so it is still " + s + ".";
    case 1:
      return flip ? "After " + actor + " flips it, the coin is " + s + "."
                  : "After " + actor + " leaves it, the coin is " + s + ".";
    case 2: return actor + (flip ? " flips: " : " keeps: ") + s + ".";
    case 3: return flip ? actor + " turns it over to " + s + "." : actor + " leaves it on " + s + ".";
    default: return "Then " + actor + (flip ? " flips it; now " : " does nothing; still ") + s + ".";
  }
}

std::string coin_intro(std::size_t tmpl) {
  switch (tmpl) {
    case 0: return "";
    case 1: return "The coin starts heads up.";
    default: return "Track the coin.";
  }
}

std::string coin_outro(std::size_t tmpl, bool heads) {
  switch (tmpl) {
    case 0: return "";
    case 1: return std::string("It ends ") + (heads ? "heads" : "tails") + " up.";
    case 2: return std::string("Final side: ") + (heads ? "heads" : "tails") + ".";
    default: return heads ? "So it is still heads up." : "So it is not heads up.";
  }
}

std::string add_step(std::size_t tmpl, int a, int b, int sum) {
  const std::string x = std::to_string(a), y = std::to_string(b), s = std::to_string(sum);
  switch (tmpl) {
    case 0: return x + " + " + y + " = " + s + ".";
    case 1: return "First, " + x + " + " + y + " = " + s + ".";
    case 2: return "The sum is " + s + ".";
    case 3: return "Adding " + x + " and " + y + " gives " + s + ".";
    default: return x + " plus " + y + " is " + s + ".";
  }
}

std::string mod_step(std::size_t tmpl, int sum, int m, int r) {
  const std::string s = std::to_string(sum), ms = std::to_string(m), rs = std::to_string(r);
  switch (tmpl) {
    case 0: return s + " mod " + ms + " = " + rs + ".";
    case 1: return "Then " + s + " divided by " + ms + " leaves remainder " + rs + ".";
    case 2: return "And " + s + " mod " + ms + " is " + rs + ".";
    case 3: return "The remainder of " + s + " by " + ms + " is " + rs + ".";
    default: return "Dividing by " + ms + " leaves " + rs + ".";
  }
}

std::string add_outro(std::size_t tmpl, int r) {
  switch (tmpl) {
    case 0: return "";
    case 1: return "So the result is " + std::to_string(r) + ".";
    case 2: return "That is " + std::to_string(r) + ".";
    default: return "Result: " + std::to_string(r) + ".";
  }
}

std::string assemble(const std::string& intro, std::vector<std::string> steps, const std::string& outro) {
  if (!intro.empty()) steps.insert(steps.begin(), intro);
  if (!outro.empty()) steps.push_back(outro);
  return join(steps, " ");
}

Generation generate_one(const Sample& sample, const TeacherParams& params, Rng& rng) {
  const double t = params.temperature;
  const bool jitter = t > 0.0 && rng.bernoulli(kJitterRate * std::min(t, 1.0));
  const bool corrupt = params.error_rate > 0.0 && rng.bernoulli(params.error_rate);
  const std::size_t intro = choose(rng, t, 3);
  const std::size_t outro = choose(rng, t, 4);
  Generation g;
  g.corrupted = corrupt;
  switch (sample.kind) {
    case TaskKind::kLastLetter: {
      const std::size_t n = sample.words.size();
      std::string letters;
      for (const std::string& w : sample.words) letters.push_back(w.back());
      if (corrupt) {
        const std::size_t i = rng.below(n);
        const char c = letters[i];
        const int base = (c >= 'a' && c <= 'z') ? c - 'a' : 0;
        letters[i] = static_cast<char>('a' + (base + 1 + static_cast<int>(rng.below(25))) % 26);
      }
      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      if (jitter && n >= 2) {
        const std::size_t k = rng.below(n - 1);
        std::swap(order[k], order[k + 1]);
      }
      std::vector<std::string> steps;
      for (std::size_t i : order) {
        steps.push_back(letter_step(choose(rng, t, kStepTemplates), sample.words[i], letters[i]));
      }
      g.rationale = assemble(letter_intro(intro), std::move(steps), letter_outro(outro, letters));
      g.answer = letters;
      break;
    }
    case TaskKind::kCoinFlip: {
      const std::size_t n = sample.words.size();
      const std::size_t bad = corrupt ? rng.below(n) : n;
      bool heads = true;
      std::vector<std::string> steps;
      for (std::size_t i = 0; i < n; ++i) {
        const bool toggles = sample.flips[i] != (i == bad);
        if (toggles) heads = !heads;
        steps.push_back(coin_step(choose(rng, t, kStepTemplates), sample.words[i], sample.flips[i], heads));
      }
      g.rationale = assemble(coin_intro(intro), std::move(steps), coin_outro(outro, heads));
      g.answer = heads ? "yes" : "no";
      break;
    }
    case TaskKind::kModAdd: {
      int sum = sample.lhs + sample.rhs;
      if (corrupt) sum += (sum == 0 || rng.bernoulli(0.5)) ? 1 : -1;
      const int r = sum % sample.modulus;
      const int a = jitter ? sample.rhs : sample.lhs;
      const int b = jitter ? sample.lhs : sample.rhs;
      std::vector<std::string> steps{add_step(choose(rng, t, kStepTemplates), a, b, sum),
                                     mod_step(choose(rng, t, kStepTemplates), sum, sample.modulus, r)};
      g.rationale = assemble(intro == 0 ? "" : intro == 1 ? "Add, then reduce." : "Two steps.", std::move(steps),
                             add_outro(outro, r));
      g.answer = std::to_string(r);
      break;
    }
  }
  g.transcript = "Q: " + sample.q + " A: Let's think step by step. " + g.rationale + " Therefore, the answer is " +
                 g.answer + ".";
  return g;
}

}  // namespace

const char* domain_name(Domain d) { return d == Domain::kSource ? "source" : "target"; }

void TeacherParams::validate() const {
  if (diversity < 1) throw ConfigError("teacher: diversity D must be >= 1");
  if (!(error_rate >= 0.0 && error_rate < 0.5)) throw ConfigError("teacher: error_rate must lie in [0, 0.5)");
  if (!(temperature >= 0.0)) throw ConfigError("teacher: temperature must be >= 0");
}

DiverseGeneration teacher_cot(const Sample& sample, const TeacherParams& params, std::uint64_t stream) {
  params.validate();
  Rng rng(derive_seed(params.seed, stream, 0x7eac));
  DiverseGeneration out;
  out.outputs.reserve(params.diversity);
  for (std::size_t j = 0; j < params.diversity; ++j) out.outputs.push_back(generate_one(sample, params, rng));
  return out;
}

std::string transcript_answer(const std::string& transcript) {
  static const std::string kMarker = "Therefore, the answer is ";
  const std::size_t pos = transcript.rfind(kMarker);
  if (pos == std::string::npos) return {};
  std::string tail = trim(transcript.substr(pos + kMarker.size()));
  if (!tail.empty() && tail.back() == '.') tail.pop_back();
  return tail;
}

std::string format_question(const std::string& q) { return q + kQuestionSuffix; }

std::string format_completion(const std::string& rationale, const std::string& answer) {
  return rationale + kAnswerSeparator + answer + kCompletionEnd;
}

std::vector<ReasoningSample> filter_and_format(const Sample& sample, const DiverseGeneration& gen, Domain domain,
                                               FilterStats* stats) {
  std::vector<ReasoningSample> kept;
  std::set<std::string> seen;
  FilterStats local;
  const std::string gold = normalize_answer(sample.a);
  for (const Generation& g : gen.outputs) {
    ++local.generated;
    if (normalize_answer(transcript_answer(g.transcript)) != gold) continue;
    ++local.correct;
    std::string c = format_completion(g.rationale, sample.a);
    if (!seen.insert(c).second) continue;
    ++local.retained;
    kept.push_back({format_question(sample.q), std::move(c), domain});
  }
  if (stats) stats->merge(local);
  return kept;
}

DomainDatasets build_domain_datasets(const TaskSpec& source, const TaskSpec& target, const DatasetSizes& sizes,
                                     const TeacherParams& teacher) {
  source.validate();
  target.validate();
  teacher.validate();
  DomainDatasets out;
  TaskSpec s_cmp = source, t_cmp = target;
  s_cmp.seed = t_cmp.seed = 0;
  if (s_cmp == t_cmp) out.warnings.push_back("source and target specs are identical: no domain shift to adapt across");

  auto checked = [](const TaskSpec& spec, std::size_t n, std::uint64_t first) {
    if (n == 0) return std::vector<Sample>{};
    std::vector<Sample> samples = generate_samples(spec, n, first);
    for (const Sample& s : samples) {
      if (solve_question(s.kind, s.q) != s.a) throw DataError("generator self-check failed for: " + s.q);
    }
    return samples;
  };

  const std::vector<Sample> src = checked(source, sizes.source, 0);
  for (std::size_t i = 0; i < src.size(); ++i) {
    const DiverseGeneration gen = teacher_cot(src[i], teacher, i);
    for (ReasoningSample& r : filter_and_format(src[i], gen, Domain::kSource, &out.stats)) {
      out.source.push_back(std::move(r));
    }
  }
  for (const Sample& s : checked(source, sizes.source_eval, sizes.source)) {
    out.source_eval.push_back({format_question(s.q), s.a});
  }
  for (const Sample& s : checked(target, sizes.target, 0)) out.target.push_back({format_question(s.q)});
  for (const Sample& s : checked(target, sizes.target_eval, sizes.target)) {
    out.target_eval.push_back({format_question(s.q), s.a});
  }
  return out;
}

std::string source_record_line(const ReasoningSample& s) {
  nlohmann::ordered_json j;
  j["q"] = s.q;
  j["c"] = s.c;
  j["domain"] = domain_name(s.domain);
  return j.dump();
}

std::string target_record_line(const TargetRecord& r) {
  nlohmann::ordered_json j;
  j["q"] = r.q;
  j["domain"] = "target";
  return j.dump();
}

std::string eval_record_line(const EvalRecord& r) {
  nlohmann::ordered_json j;
  j["q"] = r.q;
  j["a"] = r.a;
  return j.dump();
}

void write_jsonl(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  for (const std::string& l : lines) out << l << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

namespace {

std::vector<nlohmann::json> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<nlohmann::json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

std::string field(const nlohmann::json& j, const char* key, const std::filesystem::path& path) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw DataError(path.string() + ": record missing string field '" + key + "'");
  }
  return j[key].get<std::string>();
}

}  // namespace

std::vector<ReasoningSample> read_source_jsonl(const std::filesystem::path& path) {
  std::vector<ReasoningSample> out;
  for (const auto& j : read_lines(path)) {
    const std::string d = field(j, "domain", path);
    if (d != "source") throw DataError(path.string() + ": source record with domain '" + d + "'");
    out.push_back({field(j, "q", path), field(j, "c", path), Domain::kSource});
  }
  return out;
}

std::vector<TargetRecord> read_target_jsonl(const std::filesystem::path& path) {
  std::vector<TargetRecord> out;
  for (const auto& j : read_lines(path)) {
    if (j.contains("c")) throw DataError(path.string() + ": target training record carries a completion");
    const std::string d = field(j, "domain", path);
    if (d != "target") throw DataError(path.string() + ": target record with domain '" + d + "'");
    out.push_back({field(j, "q", path)});
  }
  return out;
}

std::vector<EvalRecord> read_eval_jsonl(const std::filesystem::path& path) {
  std::vector<EvalRecord> out;
  for (const auto& j : read_lines(path)) out.push_back({field(j, "q", path), field(j, "a", path)});
  return out;
}

DatasetPaths DatasetPaths::in(const std::filesystem::path& dir) {
  return {dir / "source_train.jsonl", dir / "target_train.jsonl", dir / "source_eval.jsonl",
          dir / "target_eval.jsonl"};
}

void write_datasets(const DatasetPaths& paths, const DomainDatasets& data) {
  std::vector<std::string> lines;
  for (const auto& r : data.source) lines.push_back(source_record_line(r));
  write_jsonl(paths.source, lines);
  lines.clear();
  for (const auto& r : data.target) lines.push_back(target_record_line(r));
  write_jsonl(paths.target, lines);
  lines.clear();
  for (const auto& r : data.source_eval) lines.push_back(eval_record_line(r));
  write_jsonl(paths.source_eval, lines);
  lines.clear();
  for (const auto& r : data.target_eval) lines.push_back(eval_record_line(r));
  write_jsonl(paths.target_eval, lines);
}

DomainDatasets read_datasets(const DatasetPaths& paths) {
  DomainDatasets d;
  d.source = read_source_jsonl(paths.source);
  d.target = read_target_jsonl(paths.target);
  d.source_eval = read_eval_jsonl(paths.source_eval);
  d.target_eval = read_eval_jsonl(paths.target_eval);
  return d;
}

double bigram_js_divergence(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  auto dist = [](const std::vector<std::string>& texts) {
    std::map<std::pair<char, char>, double> counts;
    double total = 0.0;
    for (const std::string& t : texts) {
      for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        counts[{t[i], t[i + 1]}] += 1.0;
        total += 1.0;
      }
    }
    if (total > 0.0) {
      for (auto& [k, v] : counts) v /= total;
    }
    return counts;
  };
  const auto p = dist(a), q = dist(b);
  std::set<std::pair<char, char>> keys;
  for (const auto& [k, v] : p) keys.insert(k);
  for (const auto& [k, v] : q) keys.insert(k);
  double js = 0.0;
  for (const auto& k : keys) {
    const double pv = p.count(k) ? p.at(k) : 0.0;
    const double qv = q.count(k) ? q.at(k) : 0.0;
    const double m = 0.5 * (pv + qv);
    if (pv > 0.0) js += 0.5 * pv * std::log(pv / m);
    if (qv > 0.0) js += 0.5 * qv * std::log(qv / m);
  }
  return js;
}

}  // namespace prada::teacher
