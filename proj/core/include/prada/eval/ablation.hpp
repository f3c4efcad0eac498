#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prada/eval/probe.hpp"
#include "prada/model/student.hpp"
#include "prada/teacher/teacher.hpp"
#include "prada/training/trainer.hpp"

namespace prada::eval {

// Loss components switched on in a run: L_y always; L_p = prompt adapter
// (Stage 1 plus prompt slots); L_d = domain-adversarial loss.
enum class Arm { kTaskOnly, kPrompt, kAdversarial, kFull };
inline constexpr std::array<Arm, 4> kAllArms = {Arm::kTaskOnly, Arm::kPrompt, Arm::kAdversarial, Arm::kFull};

const char* arm_id(Arm arm);    // "{L_y}", "{L_y,L_p}", "{L_y,L_d}", "{L_y,L_p,L_d}"
const char* arm_slug(Arm arm);  // "ly", "ly_lp", "ly_ld", "full"
Arm parse_arm(const std::string& text);  // id or slug; ConfigError otherwise
bool arm_uses_prompts(Arm arm);
bool arm_uses_domain_loss(Arm arm);

// The arm's configuration derived from the full one: arms without L_p get no
// prompt slots, arms without L_d get lambda 0. ConfigError when the full
// config cannot express the arm (e.g. a prompt arm from k_p = 0).
training::RunConfig arm_config(const training::RunConfig& full, Arm arm);
// ConfigError when cfg contradicts the arm's definition.
void check_arm(const training::RunConfig& cfg, Arm arm);

// Stage-0 weights copied into the arm's architecture (prompt banks dropped
// when the arm has none), then adapters re-drawn from the run seed. Arms
// sharing a seed start from identical weights.
model::StudentModel arm_initial_model(const model::StudentModel& stage0, const training::RunConfig& arm_cfg);

struct ArmRun {
  Arm arm = Arm::kFull;
  std::uint64_t seed = 0;
  double target_acc = 0.0;
  double source_acc = 0.0;
  double probe_acc = 0.0;
  std::size_t best_step = 0;
  std::size_t steps_run = 0;
  bool early_stopped = false;
  double seconds = 0.0;  // wall clock of this process; 0 when reused from disk
  std::vector<training::MetricRow> log;
};

struct Cell {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single seed
  std::size_t n = 0;
};
Cell summarize(const std::vector<double>& values);

struct AblationGrid {
  std::vector<Arm> arms;
  std::vector<std::string> columns;           // target domains
  std::vector<std::vector<Cell>> target_acc;  // [arm][column]
  std::vector<Cell> source_acc;               // [arm]
  std::vector<Cell> probe_acc;                // [arm]
  std::vector<ArmRun> runs;                   // arm-major, then seed
};

struct AblationOptions {
  std::filesystem::path out_dir;  // per-run artifacts; empty keeps nothing on disk
  std::string target_column = "target";
  std::size_t eval_workers = 1;
  std::size_t probe_samples = 200;  // per domain
  ProbeOptions probe;
  bool reuse_finished = true;  // skip runs whose result file matches the config
  std::size_t parallel_runs = 1;  // runs trained concurrently by run_ablation
};

// Runs Stage 1 (prompt arms) and Stage 2 for every arm and seed from the
// shared Stage-0 model, then scores target accuracy, source accuracy and the
// domain probe on the held-out sets.
AblationGrid run_ablation(const training::RunConfig& full, const std::vector<Arm>& arms,
                          const teacher::DomainDatasets& data, const model::StudentModel& stage0,
                          const std::vector<std::uint64_t>& seeds, const AblationOptions& options = {});

ArmRun run_arm(const training::RunConfig& full, Arm arm, std::uint64_t seed, const teacher::DomainDatasets& data,
               const model::StudentModel& stage0, const AblationOptions& options = {});

AblationGrid summarize_runs(const std::vector<ArmRun>& runs, const std::string& target_column);

std::string ablation_csv(const AblationGrid& grid);
// Fixed-width table: component checkmarks, then mean +- std per column.
std::string ablation_table(const AblationGrid& grid);

}  // namespace prada::eval
