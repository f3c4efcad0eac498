#include "prada/eval/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "prada/eval/report.hpp"
#include "prada/model/checkpoint.hpp"
#include "prada/util/error.hpp"
#include "prada/util/log.hpp"
#include "prada/util/rng.hpp"

namespace prada::eval {
namespace {

constexpr std::uint64_t kAdapterStream = 0x61647074;

std::string fixed(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string g10(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string pad_right(std::string s, std::size_t width, std::size_t visible) {
  if (visible < width) s.append(width - visible, ' ');
  return s;
}

nlohmann::ordered_json run_json(const ArmRun& r, const training::RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["arm"] = arm_slug(r.arm);
  j["seed"] = r.seed;
  j["config"] = training::to_json(cfg);
  j["target_acc"] = r.target_acc;
  j["source_acc"] = r.source_acc;
  j["probe_acc"] = r.probe_acc;
  j["best_step"] = r.best_step;
  j["steps_run"] = r.steps_run;
  j["early_stopped"] = r.early_stopped;
  return j;
}

std::vector<std::string> questions(const std::vector<teacher::EvalRecord>& records, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(n, records.size()); ++i) out.push_back(records[i].q);
  return out;
}

}  // namespace

const char* arm_id(Arm arm) {
  switch (arm) {
    case Arm::kTaskOnly: return "{L_y}";
    case Arm::kPrompt: return "{L_y,L_p}";
    case Arm::kAdversarial: return "{L_y,L_d}";
    case Arm::kFull: return "{L_y,L_p,L_d}";
  }
  return "?";
}

const char* arm_slug(Arm arm) {
  switch (arm) {
    case Arm::kTaskOnly: return "ly";
    case Arm::kPrompt: return "ly_lp";
    case Arm::kAdversarial: return "ly_ld";
    case Arm::kFull: return "full";
  }
  return "?";
}

Arm parse_arm(const std::string& text) {
  for (Arm a : kAllArms) {
    if (text == arm_id(a) || text == arm_slug(a)) return a;
  }
  throw ConfigError("unknown ablation arm '" + text + "' (expected ly, ly_lp, ly_ld or full)");
}

bool arm_uses_prompts(Arm arm) { return arm == Arm::kPrompt || arm == Arm::kFull; }
bool arm_uses_domain_loss(Arm arm) { return arm == Arm::kAdversarial || arm == Arm::kFull; }

void check_arm(const training::RunConfig& cfg, Arm arm) {
  const bool prompts = cfg.model.prompt_len > 0;
  const bool adversarial = cfg.lambda.lambda_max > 0.0;
  if (prompts != arm_uses_prompts(arm)) {
    throw ConfigError(std::string("arm ") + arm_id(arm) + (arm_uses_prompts(arm) ? " needs" : " forbids") +
                      " prompt slots, but prompt_len = " + std::to_string(cfg.model.prompt_len));
  }
  if (adversarial != arm_uses_domain_loss(arm)) {
    throw ConfigError(std::string("arm ") + arm_id(arm) + (arm_uses_domain_loss(arm) ? " needs" : " forbids") +
                      " a domain loss, but lambda_max = " + g10(cfg.lambda.lambda_max));
  }
}

training::RunConfig arm_config(const training::RunConfig& full, Arm arm) {
  training::RunConfig c = full;
  if (!arm_uses_prompts(arm)) {
    c.model.prompt_len = 0;
    c.prompt_keeps_high_rate = false;
  }
  if (!arm_uses_domain_loss(arm)) {
    c.lambda.kind = training::ScheduleKind::kConstant;
    c.lambda.lambda_max = 0.0;
  }
  check_arm(c, arm);
  c.validate();
  return c;
}

model::StudentModel arm_initial_model(const model::StudentModel& stage0, const training::RunConfig& arm_cfg) {
  model::ModelConfig base = stage0.config();
  base.prompt_len = arm_cfg.model.prompt_len;
  if (!(base == arm_cfg.model)) {
    throw ConfigError("ablation: Stage-0 checkpoint differs from the run config beyond prompt_len");
  }
  model::StudentModel m = model::StudentModel::initialize(arm_cfg.model, 0);
  for (auto& p : m.parameters()) {
    if (p.group == model::ParamGroup::kPrompt) continue;
    const auto& src = stage0.parameter(p.name);
    if (src.value.shape() != p.value.shape()) throw DataError("ablation: shape mismatch for " + p.name);
    p.value = src.value;
  }
  m.reinitialize_adapters(derive_seed(arm_cfg.seed, kAdapterStream));
  return m;
}

Cell summarize(const std::vector<double>& values) {
  Cell c;
  c.n = values.size();
  if (values.empty()) return c;
  for (double v : values) c.mean += v;
  c.mean /= static_cast<double>(c.n);
  if (c.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - c.mean) * (v - c.mean);
    c.stddev = std::sqrt(ss / static_cast<double>(c.n - 1));
  }
  return c;
}

ArmRun run_arm(const training::RunConfig& full, Arm arm, std::uint64_t seed, const teacher::DomainDatasets& data,
               const model::StudentModel& stage0, const AblationOptions& options) {
  training::RunConfig cfg = arm_config(full, arm);
  cfg.seed = seed;
  const std::string tag = std::string(arm_id(arm)) + " seed " + std::to_string(seed);

  std::filesystem::path dir;
  if (!options.out_dir.empty()) {
    dir = options.out_dir / (std::string(arm_slug(arm)) + "_s" + std::to_string(seed));
    std::filesystem::create_directories(dir);
  }
  const auto result_path = dir / "result.json";
  const auto metrics_path = dir / "metrics.csv";
  if (!dir.empty() && options.reuse_finished && std::filesystem::exists(result_path) &&
      std::filesystem::exists(metrics_path)) {
    const auto j = nlohmann::json::parse(model::read_file(result_path));
    if (j.at("config").dump() == nlohmann::json::parse(training::to_json(cfg).dump()).dump()) {
      log_info("ablation: reusing finished run " + tag);
      ArmRun r;
      r.arm = arm;
      r.seed = seed;
      r.target_acc = j.at("target_acc").get<double>();
      r.source_acc = j.at("source_acc").get<double>();
      r.probe_acc = j.at("probe_acc").get<double>();
      r.best_step = j.at("best_step").get<std::size_t>();
      r.steps_run = j.at("steps_run").get<std::size_t>();
      r.early_stopped = j.at("early_stopped").get<bool>();
      r.log = training::read_metric_csv(metrics_path);
      return r;
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  training::AdversarialOptions adv;
  adv.eval_workers = options.eval_workers;
  if (!dir.empty()) {
    adv.state_path = dir / "train_state.bin";
    adv.resume = std::filesystem::exists(adv.state_path);
  }

  model::StudentModel m = arm_initial_model(stage0, cfg);
  if (!adv.resume && arm_uses_prompts(arm)) {
    log_info("ablation: prompt learning for " + tag);
    training::prompt_learning_stage(m, data.source, cfg);
  }
  log_info("ablation: adversarial stage for " + tag);
  training::TrainData td = training::TrainData::from(data, false);
  const auto res = training::train_adversarial(m, td, cfg, adv);

  ArmRun r;
  r.arm = arm;
  r.seed = seed;
  r.log = res.log;
  r.best_step = res.best_step;
  r.steps_run = res.steps_run;
  r.early_stopped = res.early_stopped;
  r.target_acc = accuracy(res.model, data.target_eval, "target_eval", cfg.max_new_tokens, options.eval_workers).accuracy;
  r.source_acc = accuracy(res.model, data.source_eval, "source_eval", cfg.max_new_tokens, options.eval_workers).accuracy;
  const std::size_t n_probe =
      std::min({options.probe_samples, data.source_eval.size(), data.target_eval.size()});
  r.probe_acc =
      domain_probe(res.model, questions(data.source_eval, n_probe), questions(data.target_eval, n_probe), options.probe)
          .accuracy;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log_info("ablation: " + tag + " target " + fixed(r.target_acc, 3) + " source " + fixed(r.source_acc, 3) +
           " probe " + fixed(r.probe_acc, 3));

  if (!dir.empty()) {
    model::save_checkpoint(dir / "model.ckpt", res.model);
    training::write_metric_csv(metrics_path, r.log);
    model::write_file_atomic(result_path, run_json(r, cfg).dump(2) + "\n");
    std::filesystem::remove(adv.state_path);
  }
  return r;
}

AblationGrid summarize_runs(const std::vector<ArmRun>& runs, const std::string& target_column) {
  AblationGrid g;
  g.columns = {target_column};
  g.runs = runs;
  for (const auto& r : runs) {
    if (std::find(g.arms.begin(), g.arms.end(), r.arm) == g.arms.end()) g.arms.push_back(r.arm);
  }
  for (Arm a : g.arms) {
    std::vector<double> t, s, p;
    for (const auto& r : runs) {
      if (r.arm != a) continue;
      t.push_back(r.target_acc);
      s.push_back(r.source_acc);
      p.push_back(r.probe_acc);
    }
    g.target_acc.push_back({summarize(t)});
    g.source_acc.push_back(summarize(s));
    g.probe_acc.push_back(summarize(p));
  }
  return g;
}

AblationGrid run_ablation(const training::RunConfig& full, const std::vector<Arm>& arms,
                          const teacher::DomainDatasets& data, const model::StudentModel& stage0,
                          const std::vector<std::uint64_t>& seeds, const AblationOptions& options) {
  if (arms.empty() || seeds.empty()) throw ConfigError("ablation: need at least one arm and one seed");
  for (Arm a : arms) arm_config(full, a);  // fail fast on contradictions
  std::vector<std::pair<Arm, std::uint64_t>> jobs;
  for (Arm a : arms) {
    for (std::uint64_t s : seeds) jobs.emplace_back(a, s);
  }
  std::vector<ArmRun> runs(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        runs[i] = run_arm(full, jobs[i].first, jobs[i].second, data, stage0, options);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(options.parallel_runs, 1, jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return summarize_runs(runs, options.target_column);
}

std::string ablation_csv(const AblationGrid& grid) {
  std::string out = "arm,L_y,L_p,L_d,column,metric,mean,std,n\n";
  for (std::size_t i = 0; i < grid.arms.size(); ++i) {
    const Arm a = grid.arms[i];
    const std::string prefix = std::string("\"") + arm_id(a) + "\",1," + (arm_uses_prompts(a) ? "1" : "0") + "," +
                               (arm_uses_domain_loss(a) ? "1" : "0") + ",";
    auto row = [&](const std::string& column, const char* metric, const Cell& c) {
      out += prefix + column + "," + metric + "," + g10(c.mean) + "," + g10(c.stddev) + "," + std::to_string(c.n) +
             "\n";
    };
    for (std::size_t k = 0; k < grid.columns.size(); ++k) row(grid.columns[k], "target_acc", grid.target_acc[i][k]);
    row("source", "source_acc", grid.source_acc[i]);
    row("probe", "probe_acc", grid.probe_acc[i]);
  }
  return out;
}

std::string ablation_table(const AblationGrid& grid) {
  const std::size_t w = 16;
  auto cell = [](const Cell& c) { return fixed(100.0 * c.mean, 2) + " ± " + fixed(100.0 * c.stddev, 2); };
  std::ostringstream os;
  os << "L_y  L_p  L_d  | ";
  std::vector<std::string> heads = grid.columns;
  heads.push_back("source");
  heads.push_back("domain probe");
  for (const auto& h : heads) os << pad_right(h, w, h.size());
  os << "\n" << std::string(16 + w * heads.size(), '-') << "\n";
  const std::string tick = "✓";
  for (std::size_t i = 0; i < grid.arms.size(); ++i) {
    const Arm a = grid.arms[i];
    os << tick << "    " << (arm_uses_prompts(a) ? tick : " ") << "    " << (arm_uses_domain_loss(a) ? tick : " ")
       << "    | ";
    std::vector<std::string> cells;
    for (const auto& c : grid.target_acc[i]) cells.push_back(cell(c));
    cells.push_back(cell(grid.source_acc[i]));
    cells.push_back(cell(grid.probe_acc[i]));
    // "±" is two bytes but one column wide.
    for (const auto& c : cells) os << pad_right(c, w, c.size() - 1);
    os << "\n";
  }
  os << "(accuracy %, mean ± std over seeds)\n";
  return os.str();
}

}  // namespace prada::eval
