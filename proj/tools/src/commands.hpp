#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace prada::tools {

// Options shared by every subcommand.
struct Context {
  std::vector<std::string> args;  // as invoked, without the program name
  std::optional<std::uint64_t> seed;
  bool force = false;
};

// Dotted config key -> textual value, for the keys given on the command line.
using Overrides = std::map<std::string, std::string>;

struct GenArgs {
  std::string task;
  std::string out;
  std::size_t n = 2000;
  std::size_t n_target = 2000;
  std::size_t n_eval = 200;
  std::size_t diversity = 4;
  double error_rate = 0.2;
  double temperature = 0.9;
};

struct TrainArgs {
  std::string data;
  std::string out;
  std::string stage = "all";
  std::string config;
  std::string init;
  Overrides overrides;
  bool resume = false;
  std::size_t stop_after = 0;
  std::size_t workers = 1;
  bool monitor_target = false;
};

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "target_eval";
  std::string config;
  std::string out;
  std::optional<std::size_t> max_new_tokens;
  std::size_t limit = 0;
  std::size_t workers = 1;
};

struct AblateArgs {
  std::string data;
  std::string stage0;
  std::string out;
  std::string config;
  Overrides overrides;
  std::string arms = "all";
  std::size_t seeds = 3;
  std::size_t workers = 1;
  std::size_t probe_samples = 200;
  std::size_t parallel = 1;
  std::string target_column = "target";
  bool resume = false;
};

struct ProjectArgs {
  std::vector<std::string> checkpoints;  // "label=path" or "path"
  std::string data;
  std::string out;
  std::string domains = "source,target";
  std::size_t samples = 200;
};

struct PlotArgs {
  std::string metrics;
  std::string out;
  std::size_t window = 50;
  std::string title = "Convergence";
};

struct RerunArgs {
  std::string manifest;
};

int cmd_gen(const Context& ctx, const GenArgs& a);
int cmd_train(const Context& ctx, const TrainArgs& a);
int cmd_eval(const Context& ctx, const EvalArgs& a);
int cmd_ablate(const Context& ctx, const AblateArgs& a);
int cmd_project(const Context& ctx, const ProjectArgs& a);
int cmd_plot(const Context& ctx, const PlotArgs& a);
int cmd_rerun(const Context& ctx, const RerunArgs& a);

// Parses and runs one command line (program name excluded) and returns the
// process exit code. Errors are reported on stderr.
int run_cli(const std::vector<std::string>& args);

}  // namespace prada::tools
