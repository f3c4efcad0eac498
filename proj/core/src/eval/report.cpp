#include "prada/eval/report.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include "prada/eval/decode.hpp"
#include "prada/model/checkpoint.hpp"
#include "prada/util/error.hpp"
#include "prada/util/text.hpp"

namespace prada::eval {

EvalReport accuracy(const model::StudentModel& model, const std::vector<teacher::EvalRecord>& records,
                    const std::string& dataset_id, std::size_t max_new_tokens, std::size_t workers) {
  if (records.empty()) throw DataError("accuracy: empty evaluation set '" + dataset_id + "'");
  EvalReport report;
  report.dataset_id = dataset_id;
  report.n = records.size();
  report.samples.resize(records.size());

  auto score = [&](std::size_t i) {
    const auto& rec = records[i];
    DecodeResult d = greedy_decode(model, rec.q, max_new_tokens);
    SampleResult& s = report.samples[i];
    s.q = rec.q;
    s.gold = rec.a;
    s.completion = std::move(d.completion);
    s.truncated = d.truncated;
    s.extracted = extract_answer(s.completion);
    s.correct = s.extracted && normalize_answer(*s.extracted) == normalize_answer(rec.a);
  };

  workers = std::max<std::size_t>(1, std::min(workers, records.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < records.size(); ++i) score(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < records.size(); i = next++) score(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (const auto& s : report.samples) report.n_correct += s.correct ? 1 : 0;
  report.accuracy = static_cast<double>(report.n_correct) / static_cast<double>(report.n);
  return report;
}

nlohmann::ordered_json report_summary_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["dataset"] = r.dataset_id;
  j["n"] = r.n;
  j["n_correct"] = r.n_correct;
  j["accuracy"] = r.accuracy;
  std::size_t truncated = 0;
  for (const auto& s : r.samples) truncated += s.truncated ? 1 : 0;
  j["truncated"] = truncated;
  return j;
}

void write_eval_report(const std::filesystem::path& json_path, const std::filesystem::path& jsonl_path,
                       const EvalReport& r) {
  model::write_file_atomic(json_path, report_summary_json(r).dump(2) + "\n");
  std::string lines;
  for (const auto& s : r.samples) {
    nlohmann::ordered_json j;
    j["q"] = s.q;
    j["a"] = s.gold;
    j["c"] = s.completion;
    j["extracted"] = s.extracted ? nlohmann::ordered_json(*s.extracted) : nlohmann::ordered_json(nullptr);
    j["correct"] = s.correct;
    j["truncated"] = s.truncated;
    lines += j.dump() + "\n";
  }
  model::write_file_atomic(jsonl_path, lines);
}

}  // namespace prada::eval
