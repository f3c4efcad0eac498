#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prada/teacher/task.hpp"

namespace prada::teacher {

enum class Domain { kSource = 0, kTarget = 1 };
const char* domain_name(Domain d);

inline constexpr const char* kQuestionSuffix = " ###";
inline constexpr const char* kAnswerSeparator = " --> ";
inline constexpr const char* kCompletionEnd = " END";

struct TeacherParams {
  double temperature = 0.9;
  std::size_t diversity = 4;  // D
  double error_rate = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

// One stochastic teacher output.
struct Generation {
  std::string rationale;
  std::string answer;
  // Zero-shot CoT transcript: "Q: <q> A: Let's think step by step. <r>
  // Therefore, the answer is <a>."
  std::string transcript;
  bool corrupted = false;
};

struct DiverseGeneration {
  std::vector<Generation> outputs;  // exactly D entries
};

// Question-completion pair: q = "<question> ###", c = "<rationale> --> <answer> END".
struct ReasoningSample {
  std::string q;
  std::string c;
  Domain domain = Domain::kSource;
};

struct FilterStats {
  std::size_t generated = 0;
  std::size_t correct = 0;   // teacher answer matched gold
  std::size_t retained = 0;  // correct and unique completion
  void merge(const FilterStats& o) {
    generated += o.generated;
    correct += o.correct;
    retained += o.retained;
  }
};

// Rule-based stand-in for a sampled large teacher. `stream` selects the
// random stream so that the output is a pure function of its arguments.
DiverseGeneration teacher_cot(const Sample& sample, const TeacherParams& params, std::uint64_t stream);

// The teacher's final answer as read back from its transcript.
std::string transcript_answer(const std::string& transcript);

std::string format_question(const std::string& q);
std::string format_completion(const std::string& rationale, const std::string& answer);

// Keeps generations whose answer equals gold after normalization, reformats
// them, and drops duplicate completions.
std::vector<ReasoningSample> filter_and_format(const Sample& sample, const DiverseGeneration& gen, Domain domain,
                                               FilterStats* stats = nullptr);

struct TargetRecord {
  std::string q;  // formatted, no completion
};

struct EvalRecord {
  std::string q;  // formatted
  std::string a;
};

struct DatasetSizes {
  std::size_t source = 2000;
  std::size_t target = 2000;
  std::size_t source_eval = 200;
  std::size_t target_eval = 200;
};

struct DomainDatasets {
  std::vector<ReasoningSample> source;
  std::vector<TargetRecord> target;
  std::vector<EvalRecord> source_eval;  // held-out source questions, for validation
  std::vector<EvalRecord> target_eval;  // held-out target questions; never read by training
  FilterStats stats;
  std::vector<std::string> warnings;
};

DomainDatasets build_domain_datasets(const TaskSpec& source, const TaskSpec& target, const DatasetSizes& sizes,
                                     const TeacherParams& teacher);

// JSON Lines I/O (UTF-8, LF).
std::string source_record_line(const ReasoningSample& s);
std::string target_record_line(const TargetRecord& r);
std::string eval_record_line(const EvalRecord& r);

void write_jsonl(const std::filesystem::path& path, const std::vector<std::string>& lines);
std::vector<ReasoningSample> read_source_jsonl(const std::filesystem::path& path);
std::vector<TargetRecord> read_target_jsonl(const std::filesystem::path& path);
std::vector<EvalRecord> read_eval_jsonl(const std::filesystem::path& path);

struct DatasetPaths {
  std::filesystem::path source;
  std::filesystem::path target;
  std::filesystem::path source_eval;
  std::filesystem::path target_eval;

  static DatasetPaths in(const std::filesystem::path& dir);
  std::vector<std::filesystem::path> all() const { return {source, target, source_eval, target_eval}; }
};

void write_datasets(const DatasetPaths& paths, const DomainDatasets& data);
DomainDatasets read_datasets(const DatasetPaths& paths);

// Jensen-Shannon divergence (natural log) between character-bigram
// distributions of two text collections.
double bigram_js_divergence(const std::vector<std::string>& a, const std::vector<std::string>& b);

}  // namespace prada::teacher
