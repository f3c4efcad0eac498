#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prada/model/student.hpp"
#include "prada/teacher/teacher.hpp"

namespace prada::eval {

struct SampleResult {
  std::string q;
  std::string gold;
  std::string completion;
  std::optional<std::string> extracted;
  bool correct = false;
  bool truncated = false;
};

struct EvalReport {
  std::string dataset_id;
  std::size_t n = 0;
  std::size_t n_correct = 0;
  double accuracy = 0.0;  // n_correct / n
  std::vector<SampleResult> samples;
};

// Decodes every question and scores the extracted answer against gold after
// normalization. `workers` > 1 decodes on that many threads; results are
// identical and ordered by sample index either way.
EvalReport accuracy(const model::StudentModel& model, const std::vector<teacher::EvalRecord>& records,
                    const std::string& dataset_id, std::size_t max_new_tokens, std::size_t workers = 1);

nlohmann::ordered_json report_summary_json(const EvalReport& r);
void write_eval_report(const std::filesystem::path& json_path, const std::filesystem::path& jsonl_path,
                       const EvalReport& r);

}  // namespace prada::eval
