#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "prada/cli/manifest.hpp"
#include "prada/eval/ablation.hpp"
#include "prada/eval/plot.hpp"
#include "prada/eval/projection.hpp"
#include "prada/eval/report.hpp"
#include "prada/model/checkpoint.hpp"
#include "prada/teacher/teacher.hpp"
#include "prada/training/config.hpp"
#include "prada/training/trainer.hpp"
#include "prada/util/error.hpp"
#include "prada/util/log.hpp"
#include "prada/util/text.hpp"

namespace prada::tools {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

cli::RunManifest start_manifest(const std::string& command, const Context& ctx) {
  cli::RunManifest m;
  m.command = command;
  m.cwd = fs::current_path().string();
  m.args = ctx.args;
  return m;
}

void seed_manifest(cli::RunManifest& m, const Context& ctx) {
  const cli::SeedChoice s = cli::resolve_seed(ctx.seed);
  m.seed = s.seed;
  m.seed_source = s.source;
}

void add_digests(std::vector<cli::FileDigest>& to, const std::vector<fs::path>& files) {
  for (const auto& f : files) to.push_back(cli::digest_of(f));
}

void finish(cli::RunManifest& m, const fs::path& out, const std::string& name) {
  cli::write_manifest(out / name, m);
}

std::string fmt(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

struct ResolvedConfig {
  training::RunConfig cfg;
  std::string seed_source;
};

// Default, then --config file, then per-key flags. The seed follows the
// global rule, except that a seed written in the config file beats the
// environment and a drawn one.
ResolvedConfig resolve_config(const Context& ctx, const std::string& path, const Overrides& overrides) {
  json j = json::object();
  if (!path.empty()) {
    try {
      j = json::parse(model::read_file(path));
    } catch (const json::parse_error& e) {
      throw ConfigError(path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError(path + ": expected a JSON object");
  }
  for (const auto& [key, value] : overrides) training::apply_override(j, key, value);

  ResolvedConfig r;
  if (ctx.seed) {
    j["seed"] = *ctx.seed;
    r.seed_source = "flag";
  } else if (j.contains("seed")) {
    r.seed_source = "config";
  } else {
    const cli::SeedChoice s = cli::resolve_seed(std::nullopt);
    j["seed"] = s.seed;
    r.seed_source = s.source;
  }
  r.cfg = training::run_config_from_json(j);
  r.cfg.validate();
  return r;
}

std::string model_json(const model::ModelConfig& c) {
  json j;
  model::to_json(j, c);
  return j.dump();
}

model::StudentModel load_for_run(const fs::path& path, const training::RunConfig& cfg) {
  if (!fs::exists(path)) throw DataError("missing checkpoint " + path.string());
  model::StudentModel m = model::load_checkpoint(path, &cfg.model);
  if (!(m.config() == cfg.model)) {
    throw ConfigError("checkpoint " + path.string() + " has model " + model_json(m.config()) +
                      " but the run config has " + model_json(cfg.model));
  }
  return m;
}

// config.json in a run directory pins the config for every later stage.
void pin_config(const fs::path& path, const training::RunConfig& cfg, bool force) {
  const std::string text = training::to_json(cfg).dump(2) + "\n";
  if (fs::exists(path) && !force && model::read_file(path) != text) {
    throw ConfigError("run config differs from " + path.string() + " (pass --force to replace it)");
  }
  model::write_file_atomic(path, text);
}

}  // namespace

int cmd_gen(const Context& ctx, const GenArgs& a) {
  Stopwatch clock;
  cli::RunManifest m = start_manifest("gen", ctx);
  seed_manifest(m, ctx);
  const teacher::TaskKind kind = teacher::parse_task(a.task);

  teacher::TeacherParams tp;
  tp.temperature = a.temperature;
  tp.diversity = a.diversity;
  tp.error_rate = a.error_rate;
  tp.seed = m.seed;
  tp.validate();
  const teacher::DatasetSizes sizes{a.n, a.n_target, a.n_eval, a.n_eval};
  const teacher::TaskSpec src = teacher::default_source_spec(kind, m.seed);
  const teacher::TaskSpec tgt = teacher::default_target_spec(kind, m.seed);

  const fs::path out = a.out;
  cli::OutputLock lock(out);
  const auto paths = teacher::DatasetPaths::in(out);
  std::vector<fs::path> outputs = paths.all();
  outputs.push_back(out / "dataset.json");
  cli::check_overwrite(outputs, ctx.force);

  const teacher::DomainDatasets data = teacher::build_domain_datasets(src, tgt, sizes, tp);
  for (const auto& w : data.warnings) log_warning(w);
  teacher::write_datasets(paths, data);

  ordered_json info;
  info["source_spec"] = json(src);
  info["target_spec"] = json(tgt);
  info["teacher"] = {{"temperature", tp.temperature},
                     {"diversity", tp.diversity},
                     {"error_rate", tp.error_rate},
                     {"seed", tp.seed}};
  info["sizes"] = {{"source_questions", sizes.source},
                   {"target", sizes.target},
                   {"source_eval", sizes.source_eval},
                   {"target_eval", sizes.target_eval}};
  info["filter"] = {{"generated", data.stats.generated},
                    {"correct", data.stats.correct},
                    {"retained", data.stats.retained}};
  model::write_file_atomic(out / "dataset.json", info.dump(2) + "\n");

  m.config = info;
  add_digests(m.artifacts, outputs);
  m.stage_seconds["gen"] = clock.seconds();
  finish(m, out, "manifest-gen.json");
  std::cout << "gen: " << data.source.size() << " source records (" << data.stats.retained << " of "
            << data.stats.generated << " teacher samples kept), " << data.target.size() << " target questions -> "
            << out.string() << "\n";
  return 0;
}

int cmd_train(const Context& ctx, const TrainArgs& a) {
  cli::RunManifest m = start_manifest("train", ctx);
  const ResolvedConfig rc = resolve_config(ctx, a.config, a.overrides);
  const training::RunConfig& cfg = rc.cfg;
  m.seed = cfg.seed;
  m.seed_source = rc.seed_source;
  m.config = training::to_json(cfg);

  const bool do0 = a.stage == "pretrain" || a.stage == "all";
  const bool do1 = a.stage == "prompt" || a.stage == "all";
  const bool do2 = a.stage == "adversarial" || a.stage == "all";
  const fs::path out = a.out;
  const fs::path ck0 = out / "stage0.ckpt", ck1 = out / "stage1.ckpt", ck2 = out / "stage2.ckpt";
  const fs::path metrics = out / "metrics.csv", chart = out / "convergence.svg", state = out / "train_state.bin";

  cli::OutputLock lock(out);
  std::vector<fs::path> outputs;
  if (do0) outputs.push_back(ck0);
  if (do1) outputs.push_back(ck1);
  if (do2) outputs.insert(outputs.end(), {ck2, metrics, chart});
  if (!a.resume) cli::check_overwrite(outputs, ctx.force);
  pin_config(out / "config.json", cfg, ctx.force);

  const auto paths = teacher::DatasetPaths::in(a.data);
  const teacher::DomainDatasets data = teacher::read_datasets(paths);
  add_digests(m.inputs, paths.all());
  if (!a.config.empty()) add_digests(m.inputs, {a.config});

  std::vector<fs::path> artifacts{out / "config.json"};
  std::optional<model::StudentModel> current;
  auto first_input = [&](const fs::path& fallback) {
    const fs::path p = a.init.empty() ? fallback : fs::path(a.init);
    model::StudentModel loaded = load_for_run(p, cfg);
    add_digests(m.inputs, {p});
    return loaded;
  };

  if (do0) {
    if (a.resume && fs::exists(ck0)) {
      log_info("train: reusing " + ck0.string());
      current = load_for_run(ck0, cfg);
    } else {
      Stopwatch clock;
      current = a.init.empty() ? model::StudentModel::initialize(cfg.model, cfg.seed) : first_input(ck0);
      const auto corpus = training::pretrain_corpus(data, cfg.filler_lines, cfg.seed);
      log_info("train: pretraining on " + std::to_string(corpus.size()) + " lines");
      const auto rep = training::pretrain_backbone(*current, corpus, cfg);
      model::save_checkpoint(ck0, *current, {{"stage", "pretrain"}, {"steps", rep.losses.size()}});
      m.stage_seconds["pretrain"] = clock.seconds();
      std::cout << "pretrain: " << rep.losses.size() << " steps";
      if (!rep.losses.empty()) std::cout << ", final loss " << fmt(rep.losses.back(), 4);
      std::cout << " -> " << ck0.string() << "\n";
    }
    artifacts.push_back(ck0);
  }

  if (do1) {
    if (a.resume && fs::exists(ck1)) {
      log_info("train: reusing " + ck1.string());
      current = load_for_run(ck1, cfg);
    } else {
      Stopwatch clock;
      if (!current) current = first_input(ck0);
      const auto rep = training::prompt_learning_stage(*current, data.source, cfg);
      model::save_checkpoint(ck1, *current, {{"stage", "prompt"}, {"steps", rep.losses.size()}});
      m.stage_seconds["prompt"] = clock.seconds();
      std::cout << "prompt: " << rep.losses.size() << " steps";
      if (!rep.losses.empty()) std::cout << ", final loss " << fmt(rep.losses.back(), 4);
      std::cout << " -> " << ck1.string() << "\n";
    }
    artifacts.push_back(ck1);
  }

  if (do2) {
    Stopwatch clock;
    if (!current) current = first_input(ck1);
    training::AdversarialOptions opt;
    opt.state_path = state;
    opt.resume = a.resume && fs::exists(state);
    opt.stop_after = a.stop_after;
    opt.eval_workers = a.workers;
    if (!opt.resume && fs::exists(state)) fs::remove(state);
    const training::TrainData td = training::TrainData::from(data, a.monitor_target);
    auto res = training::train_adversarial(std::move(*current), td, cfg, opt);
    m.stage_seconds["adversarial"] = clock.seconds();
    if (res.interrupted) {
      artifacts.push_back(state);
      std::cout << "adversarial: stopped after step " << res.steps_run << "; continue with --resume\n";
    } else {
      model::save_checkpoint(ck2, res.model,
                             {{"stage", "adversarial"},
                              {"steps_run", res.steps_run},
                              {"best_step", res.best_step},
                              {"best_source_acc", res.best_source_acc},
                              {"early_stopped", res.early_stopped}});
      training::write_metric_csv(metrics, res.log);
      model::write_file_atomic(chart, eval::convergence_svg(res.log, 50, "Stage-2 convergence"));
      if (fs::exists(state)) fs::remove(state);
      artifacts.insert(artifacts.end(), {ck2, metrics, chart});
      std::cout << "adversarial: " << res.steps_run << " steps" << (res.early_stopped ? " (early stop)" : "")
                << ", best source accuracy " << fmt(res.best_source_acc, 4) << " at step " << res.best_step << " -> "
                << ck2.string() << "\n";
    }
  }

  add_digests(m.artifacts, artifacts);
  finish(m, out, "manifest-train-" + a.stage + ".json");
  return 0;
}

int cmd_eval(const Context& ctx, const EvalArgs& a) {
  Stopwatch clock;
  cli::RunManifest m = start_manifest("eval", ctx);
  seed_manifest(m, ctx);

  std::optional<training::RunConfig> cfg;
  if (!a.config.empty()) {
    cfg = training::load_run_config(a.config);
    m.inputs.push_back(cli::digest_of(a.config));
  }
  const model::StudentModel model = model::load_checkpoint(a.checkpoint, cfg ? &cfg->model : nullptr);
  const std::size_t budget = a.max_new_tokens ? *a.max_new_tokens : (cfg ? cfg->max_new_tokens : 200);

  const auto paths = teacher::DatasetPaths::in(a.data);
  const fs::path split_path = a.split == "source_eval" ? paths.source_eval : paths.target_eval;
  std::vector<teacher::EvalRecord> records = teacher::read_eval_jsonl(split_path);
  if (a.limit > 0 && records.size() > a.limit) records.resize(a.limit);
  add_digests(m.inputs, {a.checkpoint, split_path});

  const fs::path out = a.out;
  cli::OutputLock lock(out);
  const fs::path json_path = out / ("eval-" + a.split + ".json");
  const fs::path jsonl_path = out / ("eval-" + a.split + ".jsonl");
  cli::check_overwrite({json_path, jsonl_path}, ctx.force);

  const eval::EvalReport rep = eval::accuracy(model, records, a.split, budget, a.workers);
  eval::write_eval_report(json_path, jsonl_path, rep);

  m.config = {{"split", a.split}, {"max_new_tokens", budget}, {"limit", a.limit}};
  add_digests(m.artifacts, {json_path, jsonl_path});
  m.stage_seconds["eval"] = clock.seconds();
  finish(m, out, "manifest-eval-" + a.split + ".json");
  std::cout << a.split << ": accuracy " << fmt(rep.accuracy, 4) << " (" << rep.n_correct << "/" << rep.n << ")\n";
  return 0;
}

int cmd_ablate(const Context& ctx, const AblateArgs& a) {
  cli::RunManifest m = start_manifest("ablate", ctx);
  const ResolvedConfig rc = resolve_config(ctx, a.config, a.overrides);
  const training::RunConfig& full = rc.cfg;
  m.seed = full.seed;
  m.seed_source = rc.seed_source;
  m.config = training::to_json(full);
  if (a.seeds == 0) throw ConfigError("--seeds must be at least 1");

  std::vector<eval::Arm> arms;
  if (a.arms == "all") {
    arms.assign(eval::kAllArms.begin(), eval::kAllArms.end());
  } else {
    for (const auto& s : split_list(a.arms)) arms.push_back(eval::parse_arm(s));
  }
  if (arms.empty()) throw ConfigError("--arms selects no arm");
  for (eval::Arm arm : arms) eval::arm_config(full, arm);  // reject contradictions before any training

  const auto paths = teacher::DatasetPaths::in(a.data);
  const teacher::DomainDatasets data = teacher::read_datasets(paths);
  add_digests(m.inputs, paths.all());
  add_digests(m.inputs, {a.stage0});
  if (!a.config.empty()) add_digests(m.inputs, {a.config});
  const model::StudentModel stage0 = load_for_run(a.stage0, full);

  const fs::path out = a.out;
  cli::OutputLock lock(out);
  const fs::path csv = out / "ablation.csv", table = out / "ablation.txt";
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < a.seeds; ++i) seeds.push_back(full.seed + i);
  if (!a.resume) {
    cli::check_overwrite({csv, table}, ctx.force);
    for (eval::Arm arm : arms) {
      for (std::uint64_t s : seeds) fs::remove_all(out / (std::string(eval::arm_slug(arm)) + "_s" + std::to_string(s)));
    }
  }

  eval::AblationOptions opt;
  opt.out_dir = out;
  opt.target_column = a.target_column;
  opt.eval_workers = a.workers;
  opt.probe_samples = a.probe_samples;
  opt.probe.seed = full.seed;
  opt.reuse_finished = a.resume;

  opt.parallel_runs = a.parallel;
  const eval::AblationGrid grid = eval::run_ablation(full, arms, data, stage0, seeds, opt);

  std::vector<fs::path> artifacts;
  for (const eval::ArmRun& r : grid.runs) {
    const std::string tag = std::string(eval::arm_slug(r.arm)) + "_s" + std::to_string(r.seed);
    const fs::path dir = out / tag;
    model::write_file_atomic(dir / "convergence.svg", eval::convergence_svg(r.log, 50, std::string(eval::arm_id(r.arm))));
    for (const char* f : {"result.json", "metrics.csv", "model.ckpt", "convergence.svg"}) artifacts.push_back(dir / f);
    m.stage_seconds[tag] = r.seconds;
    std::cout << tag << ": target " << fmt(r.target_acc, 3) << " source " << fmt(r.source_acc, 3) << " probe "
              << fmt(r.probe_acc, 3) << " (" << r.steps_run << " steps)\n";
  }
  model::write_file_atomic(csv, eval::ablation_csv(grid));
  const std::string text = eval::ablation_table(grid);
  model::write_file_atomic(table, text);
  artifacts.insert(artifacts.end(), {csv, table});
  add_digests(m.artifacts, artifacts);
  finish(m, out, "manifest-ablate.json");
  std::cout << text;
  return 0;
}

int cmd_project(const Context& ctx, const ProjectArgs& a) {
  Stopwatch clock;
  cli::RunManifest m = start_manifest("project", ctx);
  seed_manifest(m, ctx);

  const auto paths = teacher::DatasetPaths::in(a.data);
  std::vector<eval::LabeledQuestion> samples;
  for (const auto& d : split_list(a.domains)) {
    fs::path p;
    if (d == "source") {
      p = paths.source_eval;
    } else if (d == "target") {
      p = paths.target_eval;
    } else {
      throw ConfigError("unknown domain '" + d + "' (expected source or target)");
    }
    const auto records = teacher::read_eval_jsonl(p);
    add_digests(m.inputs, {p});
    for (std::size_t i = 0; i < std::min(a.samples, records.size()); ++i) samples.push_back({records[i].q, d});
  }

  const fs::path out = a.out;
  cli::OutputLock lock(out);
  const fs::path csv = out / "projection.csv", svg = out / "projection.svg";
  cli::check_overwrite({csv, svg}, ctx.force);

  std::vector<eval::ProjectionPoint> points;
  ordered_json variance = ordered_json::object();
  for (const std::string& spec : a.checkpoints) {
    const auto eq = spec.find('=');
    const fs::path path = eq == std::string::npos ? fs::path(spec) : fs::path(spec.substr(eq + 1));
    const std::string label = eq == std::string::npos ? path.stem().string() : spec.substr(0, eq);
    const model::StudentModel model = model::load_checkpoint(path);
    add_digests(m.inputs, {path});
    const eval::Projection p = eval::project_embeddings(model, samples, label);
    points.insert(points.end(), p.points.begin(), p.points.end());
    variance[label] = {p.variance[0], p.variance[1]};
  }
  model::write_file_atomic(csv, eval::projection_csv(points));
  model::write_file_atomic(svg, eval::projection_svg(points, "Pooled features, first two principal components"));

  m.config = {{"domains", a.domains}, {"samples", a.samples}, {"variance", variance}};
  add_digests(m.artifacts, {csv, svg});
  m.stage_seconds["project"] = clock.seconds();
  finish(m, out, "manifest-project.json");
  std::cout << "project: " << points.size() << " points -> " << csv.string() << "\n";
  return 0;
}

int cmd_plot(const Context& ctx, const PlotArgs& a) {
  Stopwatch clock;
  cli::RunManifest m = start_manifest("plot", ctx);
  seed_manifest(m, ctx);
  const auto log = training::read_metric_csv(a.metrics);
  add_digests(m.inputs, {a.metrics});

  const fs::path out = a.out;
  cli::OutputLock lock(out);
  const fs::path svg = out / "convergence.svg";
  cli::check_overwrite({svg}, ctx.force);
  model::write_file_atomic(svg, eval::convergence_svg(log, a.window, a.title));

  m.config = {{"window", a.window}, {"title", a.title}};
  add_digests(m.artifacts, {svg});
  m.stage_seconds["plot"] = clock.seconds();
  finish(m, out, "manifest-plot.json");
  std::cout << "plot: " << log.size() << " rows -> " << svg.string() << "\n";
  return 0;
}

int cmd_rerun(const Context& ctx, const RerunArgs& a) {
  const cli::RunManifest m = cli::read_manifest(a.manifest);
  if (m.tool_version != cli::kToolVersion) {
    log_warning("manifest written by " + m.tool_version + ", running " + cli::kToolVersion);
  }
  const fs::path back = fs::current_path();
  fs::current_path(m.cwd);
  struct Restore {
    fs::path dir;
    ~Restore() {
      std::error_code ec;
      fs::current_path(dir, ec);
    }
  } restore{back};

  if (const auto changed = cli::changed_files(m.inputs); !changed.empty()) {
    std::string list;
    for (const auto& c : changed) list += (list.empty() ? "" : ", ") + c;
    throw DataError("inputs changed since the manifest was written: " + list);
  }

  // Same arguments and seed; always from scratch.
  std::vector<std::string> args;
  for (const auto& s : m.args) {
    if (s != "--resume") args.push_back(s);
  }
  args.insert(args.end(), {"--seed", std::to_string(m.seed), "--force"});
  if (ctx.force) log_info("rerun: --force is implied");
  const int code = run_cli(args);
  if (code != 0) return code;

  const auto changed = cli::changed_files(m.artifacts);
  for (const auto& c : changed) std::cout << "differs: " << c << "\n";
  if (!changed.empty()) {
    throw DataError(std::to_string(changed.size()) + " of " + std::to_string(m.artifacts.size()) +
                    " artifacts differ from the manifest");
  }
  std::cout << "rerun: " << m.artifacts.size() << " artifacts byte-identical\n";
  return 0;
}

}  // namespace prada::tools
