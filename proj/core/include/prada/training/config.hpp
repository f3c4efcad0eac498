#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prada/model/config.hpp"
#include "prada/model/student.hpp"

namespace prada::training {

enum class ScheduleKind { kConstant, kDannRamp };
const char* schedule_name(ScheduleKind k);
ScheduleKind parse_schedule(const std::string& name);

struct LambdaSchedule {
  ScheduleKind kind = ScheduleKind::kDannRamp;
  double lambda_max = 1.0;
  double gamma = 10.0;  // ramp sharpness

  void validate() const;
};

// Domain-loss weight at training progress p. Out-of-range p is clamped to
// [0, 1] with a warning.
double lambda_at(const LambdaSchedule& schedule, double p);

enum class OptimizerKind { kSgd, kMomentum, kAdam };
const char* optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& name);

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::kSgd;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip = 0.0;  // L2 norm per parameter group; 0 disables

  void validate() const;
};

// Learning rate per parameter group, indexed by model::ParamGroup.
using GroupRates = std::array<double, model::kNumGroups>;

struct RunConfig {
  model::ModelConfig model;
  std::uint64_t seed = 0;

  // Stage 0: next-token pretraining of backbone and LM head.
  std::size_t pretrain_steps = 2000;
  std::size_t pretrain_batch = 16;
  double pretrain_lr = 1e-3;
  std::size_t filler_lines = 2000;
  OptimizerSettings pretrain_optimizer{OptimizerKind::kAdam};

  // Stage 1: prompt learning.
  double mu_prompt = 1e-3;
  std::size_t prompt_steps = 500;

  // Stage 2: domain-adversarial fine-tuning.
  double mu_finetune = 5e-5;
  bool prompt_keeps_high_rate = false;
  LambdaSchedule lambda;
  std::size_t batch_source = 16;
  std::size_t batch_target = 16;
  std::size_t max_steps = 6000;
  std::size_t patience = 5;
  std::size_t eval_every = 250;
  std::size_t eval_samples = 100;  // source-validation questions per evaluation
  std::size_t max_new_tokens = 200;
  std::size_t checkpoint_every = 500;
  OptimizerSettings optimizer;  // stages 1 and 2

  // Throws ConfigError on any violated invariant, including the prompt vs
  // fine-tune learning-rate split.
  void validate() const;

  GroupRates prompt_stage_rates() const;
  GroupRates finetune_rates() const;
};

nlohmann::ordered_json to_json(const RunConfig& c);
// Missing keys keep their defaults; unknown keys are a ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& c);

// Dotted leaf keys of the JSON form ("model.hidden", "lambda.kind", ...), for
// building one override flag per field.
std::vector<std::string> run_config_keys();
// Sets one dotted key from its textual value, then re-validates types.
void apply_override(nlohmann::json& j, const std::string& key, const std::string& value);

}  // namespace prada::training
