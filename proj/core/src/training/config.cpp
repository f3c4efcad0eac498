#include "prada/training/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "prada/model/checkpoint.hpp"
#include "prada/util/error.hpp"
#include "prada/util/log.hpp"

namespace prada::training {

using nlohmann::json;
using nlohmann::ordered_json;

const char* schedule_name(ScheduleKind k) { return k == ScheduleKind::kConstant ? "constant" : "dann_ramp"; }

ScheduleKind parse_schedule(const std::string& name) {
  if (name == "constant") return ScheduleKind::kConstant;
  if (name == "dann_ramp") return ScheduleKind::kDannRamp;
  throw ConfigError("unknown lambda schedule kind '" + name + "' (expected constant or dann_ramp)");
}

void LambdaSchedule::validate() const {
  if (!(lambda_max >= 0.0) || !std::isfinite(lambda_max)) throw ConfigError("lambda.max must be finite and >= 0");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("lambda.gamma must be finite and > 0");
}

double lambda_at(const LambdaSchedule& schedule, double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    std::ostringstream os;
    os << "lambda_at: progress " << p << " outside [0, 1]; clamped";
    log_warning(os.str());
    p = std::isnan(p) ? 0.0 : std::min(1.0, std::max(0.0, p));
  }
  if (schedule.kind == ScheduleKind::kConstant) return schedule.lambda_max;
  const double v = schedule.lambda_max * (2.0 / (1.0 + std::exp(-schedule.gamma * p)) - 1.0);
  return std::min(schedule.lambda_max, std::max(0.0, v));
}

const char* optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kMomentum: return "momentum";
    case OptimizerKind::kAdam: return "adam";
  }
  return "?";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "momentum") return OptimizerKind::kMomentum;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd, momentum or adam)");
}

void OptimizerSettings::validate() const {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer momentum must be in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("optimizer betas must be in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("optimizer epsilon must be > 0");
  if (!(grad_clip >= 0.0)) throw ConfigError("optimizer grad_clip must be >= 0");
}

void RunConfig::validate() const {
  model.validate();
  lambda.validate();
  optimizer.validate();
  pretrain_optimizer.validate();
  // Tolerate representation error at the documented bounds.
  constexpr double slack = 1e-12;
  if (!(mu_prompt >= 1e-4 * (1 - slack) && mu_prompt <= 1e-3 * (1 + slack))) {
    throw ConfigError("mu_prompt must lie in [1e-4, 1e-3] (learning-rate difference strategy)");
  }
  if (!(mu_finetune >= 1e-6 * (1 - slack) && mu_finetune <= 1e-4 * (1 + slack))) {
    throw ConfigError("mu_finetune must lie in [1e-6, 1e-4] (learning-rate difference strategy)");
  }
  if (mu_prompt < 10.0 * mu_finetune * (1 - slack)) {
    std::ostringstream os;
    os << "mu_prompt / mu_finetune = " << mu_prompt / mu_finetune
       << " violates the learning-rate difference strategy: the prompt rate must be at least 10x the fine-tune rate";
    throw ConfigError(os.str());
  }
  if (!(pretrain_lr > 0.0)) throw ConfigError("pretrain_lr must be > 0");
  if (batch_source == 0 || batch_target == 0 || pretrain_batch == 0) throw ConfigError("batch sizes must be >= 1");
  if (batch_source != batch_target) {
    throw ConfigError("batch_source and batch_target must be equal (balanced domain batches)");
  }
  if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
  if (patience == 0) throw ConfigError("patience must be >= 1");
  if (checkpoint_every == 0) throw ConfigError("checkpoint_every must be >= 1");
}

GroupRates RunConfig::prompt_stage_rates() const {
  GroupRates r{};
  r[static_cast<std::size_t>(model::ParamGroup::kPrompt)] = mu_prompt;
  return r;
}

GroupRates RunConfig::finetune_rates() const {
  GroupRates r;
  r.fill(mu_finetune);
  if (prompt_keeps_high_rate) r[static_cast<std::size_t>(model::ParamGroup::kPrompt)] = mu_prompt;
  return r;
}

namespace {

ordered_json optimizer_json(const OptimizerSettings& o) {
  ordered_json j;
  j["kind"] = optimizer_name(o.kind);
  j["momentum"] = o.momentum;
  j["beta1"] = o.beta1;
  j["beta2"] = o.beta2;
  j["epsilon"] = o.epsilon;
  j["grad_clip"] = o.grad_clip;
  return j;
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void check_keys(const json& j, const ordered_json& reference, const std::string& prefix) {
  if (!j.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!reference.contains(it.key())) throw ConfigError("unknown config key '" + prefix + it.key() + "'");
    if (reference.at(it.key()).is_object()) check_keys(it.value(), reference.at(it.key()), prefix + it.key() + ".");
  }
}

OptimizerSettings optimizer_from(const json& j, OptimizerSettings o) {
  if (j.contains("kind")) o.kind = parse_optimizer(j.at("kind").get<std::string>());
  take(j, "momentum", o.momentum);
  take(j, "beta1", o.beta1);
  take(j, "beta2", o.beta2);
  take(j, "epsilon", o.epsilon);
  take(j, "grad_clip", o.grad_clip);
  return o;
}

void flatten(const ordered_json& j, const std::string& prefix, std::vector<std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix + it.key();
    if (it.value().is_object()) {
      flatten(it.value(), key + ".", out);
    } else {
      out.push_back(key);
    }
  }
}

}  // namespace

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  json m = c.model;
  j["model"] = ordered_json::parse(m.dump());
  j["seed"] = c.seed;
  j["pretrain_steps"] = c.pretrain_steps;
  j["pretrain_batch"] = c.pretrain_batch;
  j["pretrain_lr"] = c.pretrain_lr;
  j["filler_lines"] = c.filler_lines;
  j["pretrain_optimizer"] = optimizer_json(c.pretrain_optimizer);
  j["mu_prompt"] = c.mu_prompt;
  j["prompt_steps"] = c.prompt_steps;
  j["mu_finetune"] = c.mu_finetune;
  j["prompt_keeps_high_rate"] = c.prompt_keeps_high_rate;
  j["lambda"] = {{"kind", schedule_name(c.lambda.kind)}, {"max", c.lambda.lambda_max}, {"gamma", c.lambda.gamma}};
  j["batch_source"] = c.batch_source;
  j["batch_target"] = c.batch_target;
  j["max_steps"] = c.max_steps;
  j["patience"] = c.patience;
  j["eval_every"] = c.eval_every;
  j["eval_samples"] = c.eval_samples;
  j["max_new_tokens"] = c.max_new_tokens;
  j["checkpoint_every"] = c.checkpoint_every;
  j["optimizer"] = optimizer_json(c.optimizer);
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  try {
    check_keys(j, to_json(c), "");
    if (j.contains("model")) {
      json merged = c.model;
      merged.update(j.at("model"));
      c.model = merged.get<model::ModelConfig>();
    }
    take(j, "seed", c.seed);
    take(j, "pretrain_steps", c.pretrain_steps);
    take(j, "pretrain_batch", c.pretrain_batch);
    take(j, "pretrain_lr", c.pretrain_lr);
    take(j, "filler_lines", c.filler_lines);
    if (j.contains("pretrain_optimizer")) c.pretrain_optimizer = optimizer_from(j.at("pretrain_optimizer"), c.pretrain_optimizer);
    take(j, "mu_prompt", c.mu_prompt);
    take(j, "prompt_steps", c.prompt_steps);
    take(j, "mu_finetune", c.mu_finetune);
    take(j, "prompt_keeps_high_rate", c.prompt_keeps_high_rate);
    if (j.contains("lambda")) {
      const json& l = j.at("lambda");
      if (l.contains("kind")) c.lambda.kind = parse_schedule(l.at("kind").get<std::string>());
      take(l, "max", c.lambda.lambda_max);
      take(l, "gamma", c.lambda.gamma);
    }
    take(j, "batch_source", c.batch_source);
    take(j, "batch_target", c.batch_target);
    take(j, "max_steps", c.max_steps);
    take(j, "patience", c.patience);
    take(j, "eval_every", c.eval_every);
    take(j, "eval_samples", c.eval_samples);
    take(j, "max_new_tokens", c.max_new_tokens);
    take(j, "checkpoint_every", c.checkpoint_every);
    if (j.contains("optimizer")) c.optimizer = optimizer_from(j.at("optimizer"), c.optimizer);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const std::string& path, const RunConfig& c) {
  model::write_file_atomic(path, to_json(c).dump(2) + "\n");
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  flatten(to_json(RunConfig{}), "", keys);
  return keys;
}

void apply_override(json& j, const std::string& key, const std::string& value) {
  const ordered_json reference = to_json(RunConfig{});
  const ordered_json* ref = &reference;
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!ref->is_object() || !ref->contains(part)) throw ConfigError("unknown config key '" + key + "'");
    ref = &ref->at(part);
    if (dot == std::string::npos) {
      try {
        if (ref->is_boolean()) {
          if (value != "true" && value != "false") throw ConfigError("'" + key + "' expects true or false");
          (*node)[part] = value == "true";
        } else if (ref->is_number_unsigned() || ref->is_number_integer()) {
          std::size_t used = 0;
          const unsigned long long v = std::stoull(value, &used);
          if (used != value.size() || value.front() == '-') throw ConfigError("'" + key + "' expects an integer");
          (*node)[part] = v;
        } else if (ref->is_number_float()) {
          std::size_t used = 0;
          const double v = std::stod(value, &used);
          if (used != value.size()) throw ConfigError("'" + key + "' expects a number");
          (*node)[part] = v;
        } else {
          (*node)[part] = value;
        }
      } catch (const std::logic_error&) {
        throw ConfigError("bad value '" + value + "' for '" + key + "'");
      }
      return;
    }
    if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

}  // namespace prada::training
