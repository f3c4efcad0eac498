#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prada/model/student.hpp"
#include "prada/teacher/teacher.hpp"
#include "prada/training/config.hpp"
#include "prada/training/optimizer.hpp"
#include "prada/util/rng.hpp"

namespace prada::training {

// Source record as tokens: the question, then " " + completion.
model::SequenceInput encode_source(const teacher::ReasoningSample& s);
// Target record as tokens: question only.
model::SequenceInput encode_target(const std::string& q);
std::vector<model::SequenceInput> encode_sources(const std::vector<teacher::ReasoningSample>& samples);
std::vector<model::SequenceInput> encode_targets(const std::vector<teacher::TargetRecord>& records);

// Shuffled sampling without replacement; reshuffles at each epoch boundary.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::uint64_t seed);
  std::vector<std::size_t> next(std::size_t count);

  nlohmann::json state() const;
  void restore(const nlohmann::json& state);

 private:
  std::size_t n_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_;
};

// ---- Stage 0 ----

// Generic sentences over a neutral vocabulary, including copy and spelling
// patterns that a pretrained model would already know.
std::vector<std::string> filler_text(std::size_t lines, std::uint64_t seed);

// Questions from both domains plus filler; no completions.
std::vector<std::string> pretrain_corpus(const teacher::DomainDatasets& data, std::size_t filler_lines,
                                         std::uint64_t seed);

// Mean next-token cross-entropy over every position of each line, without
// prompt slots.
double lm_cross_entropy(const model::StudentModel& model, const std::vector<std::string>& lines,
                        std::size_t batch = 16);

struct StageReport {
  std::vector<double> losses;  // one per step
};

// Next-token training of backbone and LM head; prompts and domain head are
// untouched.
StageReport pretrain_backbone(model::StudentModel& model, const std::vector<std::string>& corpus,
                              const RunConfig& cfg);

// ---- Stage 1 ----

// Mean cross-entropy over completion tokens, with prompts attached.
double completion_cross_entropy(const model::StudentModel& model, const std::vector<model::SequenceInput>& data,
                                std::size_t batch = 16);

// Trains only the prompt banks on source completions at mu_prompt.
StageReport prompt_learning_stage(model::StudentModel& model, const std::vector<teacher::ReasoningSample>& source,
                                  const RunConfig& cfg);

// ---- Stage 2 ----

struct StepLosses {
  double l_y = 0.0;
  double l_d_src = 0.0;
  double l_d_tgt = 0.0;
  double lambda = 0.0;
};

// One update on L_y + lambda * (L_d_src + L_d_tgt), domain features routed
// through gradient reversal. With lambda == 0 the domain head instead trains
// on detached features at weight 1 and cannot influence other groups.
StepLosses adversarial_step(model::StudentModel& model, Optimizer& opt, const std::vector<model::SequenceInput>& source,
                            const std::vector<model::SequenceInput>& target, double lambda, const GroupRates& rates);

// Plain fine-tuning on L_y; the domain head never enters the tape.
double finetune_step(model::StudentModel& model, Optimizer& opt, const std::vector<model::SequenceInput>& source,
                     const GroupRates& rates);

struct MetricRow {
  std::size_t step = 0;
  double l_y = 0.0;
  double l_d_src = 0.0;
  double l_d_tgt = 0.0;
  double lambda = 0.0;
  std::optional<double> src_acc;
  std::optional<double> tgt_acc;
};

std::string metric_csv(const std::vector<MetricRow>& rows);
void write_metric_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metric_csv(const std::filesystem::path& path);

struct TrainData {
  std::vector<model::SequenceInput> source;
  std::vector<model::SequenceInput> target;
  std::vector<teacher::EvalRecord> source_val;
  // Optional; only logged, never used for decisions.
  std::vector<teacher::EvalRecord> target_monitor;

  static TrainData from(const teacher::DomainDatasets& data, bool monitor_target);
};

struct AdversarialOptions {
  std::filesystem::path state_path;  // resumable state; empty disables it
  bool resume = false;
  std::size_t stop_after = 0;  // stop (as if interrupted) after this many steps; 0 = off
  std::size_t eval_workers = 1;
};

struct AdversarialResult {
  model::StudentModel model;  // best source-validation snapshot
  std::vector<MetricRow> log;
  std::size_t steps_run = 0;
  double best_source_acc = -1.0;
  std::size_t best_step = 0;
  bool early_stopped = false;
  bool interrupted = false;
};

AdversarialResult train_adversarial(model::StudentModel model, const TrainData& data, const RunConfig& cfg,
                                    const AdversarialOptions& options = {});

}  // namespace prada::training
