#include <algorithm>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "prada/cli/manifest.hpp"
#include "prada/training/config.hpp"
#include "prada/util/error.hpp"
#include "prada/util/log.hpp"

namespace prada::tools {
namespace {

constexpr const char* kConfigFooter =
    "Config precedence: a --<key> flag beats the value in --config, which beats the built-in default.";

// One --<dotted.key> flag per config field. The seed is set through the
// global --seed instead.
void add_config_flags(CLI::App* cmd, Overrides& values, std::vector<std::pair<std::string, CLI::Option*>>& opts) {
  const std::string defaults = training::to_json(training::RunConfig{}).flatten().dump();
  const auto flat = nlohmann::json::parse(defaults);
  for (const std::string& key : training::run_config_keys()) {
    if (key == "seed") continue;
    std::string pointer = "/" + key;
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    const auto it = flat.find(pointer);
    const std::string def = it == flat.end() ? "" : (it->is_string() ? it->get<std::string>() : it->dump());
    auto* opt = cmd->add_option("--" + key, values[key], "default " + def);
    opt->group("Config overrides")->type_name("VALUE");
    opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    opts.emplace_back(key, opt);
  }
}

void keep_given(Overrides& values, const std::vector<std::pair<std::string, CLI::Option*>>& opts) {
  for (const auto& [key, opt] : opts) {
    if (opt->count() == 0) values.erase(key);
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Prompt-assisted domain-adversarial chain-of-thought distillation at desk scale.", "prada"};
  app.set_version_flag("--version", std::string(cli::kToolVersion));
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();

  Context ctx;
  ctx.args = args;
  std::uint64_t seed = 0;
  bool verbose = false;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every random stream (default: $PRADA_SEED, else drawn)")
                       ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_flag("--force", ctx.force, "Overwrite existing outputs")->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_flag("-v,--verbose", verbose, "Progress messages on stderr");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate source/target datasets with the scripted teacher");
  gen_cmd->add_option("--task", gen.task, "last_letter | coin_flip | mod_add")->required();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--n", gen.n, "Source questions");
  gen_cmd->add_option("--n-target", gen.n_target, "Unlabeled target questions");
  gen_cmd->add_option("--n-eval", gen.n_eval, "Held-out questions per domain");
  gen_cmd->add_option("--diversity", gen.diversity, "Teacher samples per question");
  gen_cmd->add_option("--error-rate", gen.error_rate, "Teacher corruption probability");
  gen_cmd->add_option("--temperature", gen.temperature, "Teacher sampling temperature");

  TrainArgs train;
  std::vector<std::pair<std::string, CLI::Option*>> train_cfg_opts;
  auto* train_cmd = app.add_subcommand("train", "Run training stages and write checkpoints");
  train_cmd->add_option("--data", train.data, "Dataset directory from 'gen'")->required();
  train_cmd->add_option("--out", train.out, "Run directory")->required();
  train_cmd->add_option("--stage", train.stage, "pretrain | prompt | adversarial | all")
      ->check(CLI::IsMember({"pretrain", "prompt", "adversarial", "all"}));
  train_cmd->add_option("--config", train.config, "JSON run config");
  train_cmd->add_option("--init", train.init, "Checkpoint for the first stage instead of the run directory's");
  train_cmd->add_flag("--resume", train.resume, "Skip finished stages and continue an interrupted adversarial stage");
  train_cmd->add_option("--stop-after", train.stop_after, "Stop the adversarial stage after this step (0 = off)");
  train_cmd->add_option("--workers", train.workers, "Decoding threads for validation");
  train_cmd->add_flag("--monitor-target", train.monitor_target, "Also log target accuracy (never used for decisions)");
  add_config_flags(train_cmd, train.overrides, train_cfg_opts);
  train_cmd->footer(kConfigFooter);

  EvalArgs ev;
  std::size_t max_new_tokens = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Decode a held-out split and score accuracy");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--split", ev.split, "source_eval | target_eval")
      ->check(CLI::IsMember({"source_eval", "target_eval"}));
  eval_cmd->add_option("--config", ev.config, "Run config the checkpoint must match");
  eval_cmd->add_option("--out", ev.out, "Report directory")->required();
  auto* mnt_opt = eval_cmd->add_option("--max-new-tokens", max_new_tokens, "Decoding budget (default from config)");
  eval_cmd->add_option("--limit", ev.limit, "Score only the first N records (0 = all)");
  eval_cmd->add_option("--workers", ev.workers, "Decoding threads");

  AblateArgs ab;
  std::vector<std::pair<std::string, CLI::Option*>> ablate_cfg_opts;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train every loss-component arm over several seeds");
  ablate_cmd->add_option("--data", ab.data, "Dataset directory")->required();
  ablate_cmd->add_option("--stage0", ab.stage0, "Pretrained checkpoint shared by all arms")->required();
  ablate_cmd->add_option("--out", ab.out, "Output directory")->required();
  ablate_cmd->add_option("--config", ab.config, "JSON run config of the full arm");
  ablate_cmd->add_option("--arms", ab.arms, "Comma-separated arm slugs or 'all'");
  ablate_cmd->add_option("--seeds", ab.seeds, "Seeds per arm (seed, seed+1, ...)");
  ablate_cmd->add_option("--workers", ab.workers, "Decoding threads");
  ablate_cmd->add_option("--parallel", ab.parallel, "Runs trained concurrently");
  ablate_cmd->add_option("--probe-samples", ab.probe_samples, "Questions per domain for the probe");
  ablate_cmd->add_option("--target-column", ab.target_column, "Column name for target accuracy");
  ablate_cmd->add_flag("--resume", ab.resume, "Reuse finished runs and continue interrupted ones");
  add_config_flags(ablate_cmd, ab.overrides, ablate_cfg_opts);
  ablate_cmd->footer(kConfigFooter);

  ProjectArgs pj;
  auto* project_cmd = app.add_subcommand("project", "2-D principal-component projection of pooled features");
  project_cmd->add_option("--checkpoint", pj.checkpoints, "LABEL=PATH, repeatable")->required();
  project_cmd->add_option("--data", pj.data, "Dataset directory")->required();
  project_cmd->add_option("--out", pj.out, "Output directory")->required();
  project_cmd->add_option("--domains", pj.domains, "Comma-separated subset of source,target");
  project_cmd->add_option("--samples", pj.samples, "Questions per domain");

  PlotArgs pl;
  auto* plot_cmd = app.add_subcommand("plot", "Convergence chart from a metrics CSV");
  plot_cmd->add_option("--metrics", pl.metrics, "metrics.csv from training")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("--out", pl.out, "Output directory")->required();
  plot_cmd->add_option("--window", pl.window, "Moving-average window");
  plot_cmd->add_option("--title", pl.title, "Chart title");

  RerunArgs rr;
  auto* rerun_cmd = app.add_subcommand("rerun", "Re-execute a manifest and verify its artifacts byte for byte");
  rerun_cmd->add_option("manifest", rr.manifest, "manifest-*.json")->required()->check(CLI::ExistingFile);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  set_verbose(verbose);
  if (seed_opt->count() > 0) ctx.seed = seed;
  try {
    if (*gen_cmd) return cmd_gen(ctx, gen);
    if (*train_cmd) {
      keep_given(train.overrides, train_cfg_opts);
      return cmd_train(ctx, train);
    }
    if (*eval_cmd) {
      if (mnt_opt->count() > 0) ev.max_new_tokens = max_new_tokens;
      return cmd_eval(ctx, ev);
    }
    if (*ablate_cmd) {
      keep_given(ab.overrides, ablate_cfg_opts);
      return cmd_ablate(ctx, ab);
    }
    if (*project_cmd) return cmd_project(ctx, pj);
    if (*plot_cmd) return cmd_plot(ctx, pl);
    if (*rerun_cmd) return cmd_rerun(ctx, rr);
  } catch (const Error& e) {
    std::cerr << "prada: error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "prada: error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  }
  return static_cast<int>(ExitCode::kUsage);
}

}  // namespace prada::tools
