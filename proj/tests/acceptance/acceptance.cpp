// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any fails. Arguments select a subset ("acceptance 1 4 9").
// The adversarial experiment keeps its runs in a work directory and reuses
// finished ones, so repeated invocations only pay for missing runs.

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "prada/autodiff/gradcheck.hpp"
#include "prada/autodiff/ops.hpp"
#include "prada/eval/ablation.hpp"
#include "prada/eval/decode.hpp"
#include "prada/eval/plot.hpp"
#include "prada/eval/projection.hpp"
#include "prada/model/checkpoint.hpp"
#include "prada/model/tokenizer.hpp"
#include "prada/teacher/teacher.hpp"
#include "prada/training/optimizer.hpp"
#include "prada/training/trainer.hpp"
#include "prada/util/digest.hpp"
#include "prada/util/error.hpp"
#include "prada/util/log.hpp"
#include "prada/util/rng.hpp"
#include "support/oracles.hpp"

extern char** environ;

namespace {

using namespace prada;
namespace fs = std::filesystem;
using model::ParamGroup;
using model::SequenceInput;
using Clock = std::chrono::steady_clock;

// ---- tolerances and budgets ----
constexpr double kGradcheckRel = 1e-4;
constexpr std::size_t kGradcheckSeeds = 10;
constexpr double kGradcheckSeconds = 60.0;
constexpr double kGrlTol = 1e-10;
constexpr double kGrlSeconds = 10.0;
constexpr double kUpdateTol = 1e-10;
constexpr double kRetainedRelTol = 0.05;
constexpr double kProbeGap = 0.15;
constexpr double kTargetGain = 0.05;
constexpr double kSourceGap = 0.05;
constexpr double kExperimentSeconds = 30.0 * 60.0;
constexpr std::size_t kSmoothWindow = 50;
constexpr double kUniformCeTol = 1e-6;
constexpr double kReconstructionTol = 1e-8;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

ad::Tensor random_tensor(ad::Shape shape, Rng& rng) {
  ad::Tensor t(std::move(shape));
  for (double& x : t.data()) x = rng.normal();
  return t;
}

ad::Var weighted_sum(ad::Var y) {
  ad::Tensor w(y.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.0 + 0.37 * static_cast<double>(i));
  return ad::sum(ad::mul(y, y.tape().constant(w)));
}

std::vector<std::size_t> ids(const std::string& s) { return model::CharTokenizer::encode(s); }
SequenceInput src_seq(const std::string& q, const std::string& c) { return {ids(q + " ###"), ids(" " + c + " END")}; }
SequenceInput tgt_seq(const std::string& q) { return {ids(q + " ###"), {}}; }

std::vector<SequenceInput> source_batch() {
  return {src_seq("ab cd", "b d --> bd"), src_seq("xyz", "z --> z"), src_seq("pq", "q --> q")};
}
std::vector<SequenceInput> target_batch() { return {tgt_seq("lmn op"), tgt_seq("rs"), tgt_seq("uvw x")}; }

std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

std::string group_hash(const model::StudentModel& m, ParamGroup g) {
  std::string bytes;
  for (const auto& p : m.parameters()) {
    if (p.group != g) continue;
    bytes.append(p.name);
    bytes.append(reinterpret_cast<const char*>(p.value.raw()), p.value.size() * sizeof(double));
  }
  return sha256_hex(bytes);
}

// ---- 1. finite differences ----

Outcome gradcheck_suite() {
  const auto t0 = Clock::now();
  ad::GradCheckOptions opts;
  opts.tolerance = kGradcheckRel;
  double worst = 0.0;
  std::string worst_name;
  std::size_t checks = 0;
  auto note = [&](const char* name, double rel) {
    ++checks;
    if (rel > worst) {
      worst = rel;
      worst_name = name;
    }
  };
  using MF = ad::MultiScalarFn;
  for (std::uint64_t seed = 0; seed < kGradcheckSeeds; ++seed) {
    Rng rng(1000 + seed);
    const std::vector<std::tuple<const char*, MF, std::vector<ad::Tensor>>> cases = {
        {"matmul", [](ad::Tape&, const std::vector<ad::Var>& v) { return weighted_sum(ad::matmul(v[0], v[1])); },
         {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)}},
        {"add", [](ad::Tape&, const std::vector<ad::Var>& v) { return weighted_sum(ad::add(v[0], v[1])); },
         {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)}},
        {"add_bias", [](ad::Tape&, const std::vector<ad::Var>& v) { return weighted_sum(ad::add_bias(v[0], v[1])); },
         {random_tensor({3, 4}, rng), random_tensor({4}, rng)}},
        {"mul", [](ad::Tape&, const std::vector<ad::Var>& v) { return weighted_sum(ad::mul(v[0], v[1])); },
         {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)}},
        {"scale", [](ad::Tape&, const std::vector<ad::Var>& v) { return weighted_sum(ad::scale(v[0], -1.7)); },
         {random_tensor({5}, rng)}},
        {"sum", [](ad::Tape&, const std::vector<ad::Var>& v) { return ad::sum(v[0]); }, {random_tensor({2, 2}, rng)}},
        {"tanh", [](ad::Tape&, const std::vector<ad::Var>& v) { return weighted_sum(ad::tanh(v[0])); },
         {random_tensor({3, 3}, rng)}},
        {"gelu", [](ad::Tape&, const std::vector<ad::Var>& v) { return weighted_sum(ad::gelu(v[0])); },
         {random_tensor({3, 3}, rng)}},
        {"layer_norm",
         [](ad::Tape&, const std::vector<ad::Var>& v) { return weighted_sum(ad::layer_norm(v[0], v[1], v[2])); },
         {random_tensor({3, 5}, rng), random_tensor({5}, rng), random_tensor({5}, rng)}},
        {"embedding_gather",
         [](ad::Tape&, const std::vector<ad::Var>& v) { return weighted_sum(ad::embedding_gather(v[0], {2, 0, 2, 1})); },
         {random_tensor({3, 4}, rng)}},
        {"causal_attention",
         [](ad::Tape&, const std::vector<ad::Var>& v) {
           return weighted_sum(ad::causal_attention(v[0], {{0, 4}, {4, 3}}, 2));
         },
         {random_tensor({7, 12}, rng)}},
        {"mean_pool_rows",
         [](ad::Tape&, const std::vector<ad::Var>& v) {
           return weighted_sum(ad::mean_pool_rows(v[0], {{0, 2}, {1, 2, 3}}));
         },
         {random_tensor({4, 3}, rng)}},
        {"concat_rows",
         [](ad::Tape&, const std::vector<ad::Var>& v) { return weighted_sum(ad::concat_rows({v[0], v[1]})); },
         {random_tensor({2, 3}, rng), random_tensor({1, 3}, rng)}},
        {"gather_rows",
         [](ad::Tape&, const std::vector<ad::Var>& v) { return weighted_sum(ad::gather_rows(v[0], {3, 1, 1})); },
         {random_tensor({4, 2}, rng)}},
        {"overwrite_rows",
         [](ad::Tape&, const std::vector<ad::Var>& v) {
           return weighted_sum(ad::overwrite_rows(v[0], v[1], {{0, 1}, {2, 0}}));
         },
         {random_tensor({4, 3}, rng), random_tensor({2, 3}, rng)}},
        {"softmax_cross_entropy",
         [](ad::Tape&, const std::vector<ad::Var>& v) {
           return ad::softmax_cross_entropy(v[0], {0, 3, 2}, {1.0, 0.5, 2.0});
         },
         {random_tensor({3, 4}, rng)}},
    };
    for (const auto& [name, f, inputs] : cases) note(name, ad::finite_diff_check(f, inputs, opts).max_rel_error);

    // Reversal: the tape gradient is the negated numeric derivative.
    const auto r = ad::finite_diff_check(
        [](ad::Tape&, ad::Var x) { return weighted_sum(ad::tanh(ad::grad_reverse(x))); }, random_tensor({3, 2}, rng),
        opts);
    double grl = 0.0;
    for (std::size_t i = 0; i < r.analytic.size(); ++i) {
      const double denom = std::max({std::abs(r.analytic[i]), std::abs(r.numeric[i]), opts.floor});
      grl = std::max(grl, std::abs(r.analytic[i] + r.numeric[i]) / denom);
    }
    note("grad_reverse", grl);
    // Detach: the tape sees only the attached term.
    const ad::Tensor xd = random_tensor({2, 2}, rng);
    const auto with = ad::finite_diff_check(
        [](ad::Tape&, ad::Var x) { return ad::add(weighted_sum(ad::tanh(x)), ad::sum(ad::detach(ad::mul(x, x)))); }, xd,
        opts);
    const auto without =
        ad::finite_diff_check([](ad::Tape&, ad::Var x) { return weighted_sum(ad::tanh(x)); }, xd, opts);
    double det = 0.0;
    for (std::size_t i = 0; i < with.analytic.size(); ++i) {
      const double denom = std::max({std::abs(with.analytic[i]), std::abs(without.numeric[i]), opts.floor});
      det = std::max(det, std::abs(with.analytic[i] - without.numeric[i]) / denom);
    }
    note("detach", det);

    // 2-layer H=8 model end to end: LM loss plus domain loss, all parameters.
    const model::ModelConfig c = prada::testing::tiny_config(8, 2, 2, 2, 16);
    model::StudentModel m = model::StudentModel::initialize(c, seed);
    for (auto& p : m.parameters()) {
      for (double& x : p.value.data()) x *= 8.0;
    }
    const auto sb = model::pack_sequences(c, {{ids("ab c"), ids("d e")}, {ids("xy"), ids("z")}});
    const auto tb = model::pack_sequences(c, {{ids("pq r"), {}}, {ids("st"), {}}});
    const auto fd = prada::testing::model_finite_difference(m, [&](const model::BoundModel& b) {
      ad::Var fs = b.forward_features(sb);
      ad::Var ly = ad::softmax_cross_entropy(b.lm_logits(fs, sb.loss_rows), sb.loss_targets, ones(sb.loss_rows.size()));
      ad::Var ld = ad::softmax_cross_entropy(b.domain_logits(b.forward_features(tb), tb.question_rows, false), {1, 1},
                                             {1.0, 1.0});
      return ad::add(ly, ad::scale(ld, 0.5));
    });
    note("model", fd.max_rel);
  }
  const double secs = seconds_since(t0);
  return {worst < kGradcheckRel && secs < kGradcheckSeconds,
          std::to_string(checks) + " checks over " + std::to_string(kGradcheckSeeds) + " seeds, max rel error " +
              sci(worst) + " (" + worst_name + "), " + num(secs, 1) + " s"};
}

// ---- 2. gradient reversal ----

struct Decomposed {
  training::ParamGrads ly, ld;
};

Decomposed decomposed_gradients(const model::StudentModel& m, const std::vector<SequenceInput>& src,
                                const std::vector<SequenceInput>& tgt) {
  const auto sb = model::pack_sequences(m.config(), src);
  const auto tb = model::pack_sequences(m.config(), tgt);
  Decomposed out;
  {
    ad::Tape tape;
    const auto b = m.bind(tape, model::GroupMask::all());
    const auto f = b.forward_features(sb);
    out.ly = training::collect_gradients(
        b, tape.backward(ad::softmax_cross_entropy(b.lm_logits(f, sb.loss_rows), sb.loss_targets,
                                                   ones(sb.loss_rows.size()))));
  }
  {
    ad::Tape tape;
    const auto b = m.bind(tape, model::GroupMask::all());
    const auto lds = ad::softmax_cross_entropy(b.domain_logits(b.forward_features(sb), sb.question_rows, false),
                                               std::vector<std::size_t>(src.size(), 0), ones(src.size()));
    const auto ldt = ad::softmax_cross_entropy(b.domain_logits(b.forward_features(tb), tb.question_rows, false),
                                               std::vector<std::size_t>(tgt.size(), 1), ones(tgt.size()));
    out.ld = training::collect_gradients(b, tape.backward(ad::add(lds, ldt)));
  }
  return out;
}

double grad_at(const training::ParamGrads& g, std::size_t i, std::size_t k) { return g[i] ? (*g[i])[k] : 0.0; }

Outcome grl_contract() {
  const auto t0 = Clock::now();
  std::vector<std::string> problems;

  // Forward identity and exact negation on random inputs.
  Rng rng(7);
  const ad::Tensor x = random_tensor({4, 6}, rng);
  const ad::Tensor w = random_tensor({4, 6}, rng);
  ad::Tensor g_plain, g_rev;
  bool forward_same = false;
  {
    ad::Tape t;
    ad::Var v = t.leaf(x);
    ad::Var y = ad::grad_reverse(v);
    forward_same = std::memcmp(y.value().raw(), x.raw(), x.size() * sizeof(double)) == 0;
    g_rev = t.backward(ad::sum(ad::mul(y, t.constant(w)))).at(v.id());
  }
  {
    ad::Tape t;
    ad::Var v = t.leaf(x);
    g_plain = t.backward(ad::sum(ad::mul(v, t.constant(w)))).at(v.id());
  }
  if (!forward_same) problems.push_back("forward not bit-identical");
  for (std::size_t i = 0; i < g_plain.size(); ++i) {
    if (g_rev[i] != -g_plain[i]) {
      problems.push_back("backward not exact negation");
      break;
    }
  }

  // Tape gradient of L_y + lambda (L_d_src + L_d_tgt) with the reversal layer
  // on the domain branch versus two decomposed passes without it.
  const double lambda = 0.37;
  const model::StudentModel m = prada::testing::hand_seeded(prada::testing::tiny_config(8, 2, 2, 2, 64), 0.4);
  const Decomposed d = decomposed_gradients(m, source_batch(), target_batch());
  training::ParamGrads joint;
  {
    const auto sb = model::pack_sequences(m.config(), source_batch());
    const auto tb = model::pack_sequences(m.config(), target_batch());
    ad::Tape tape;
    const auto b = m.bind(tape, model::GroupMask::all());
    const auto fs = b.forward_features(sb);
    const auto ly =
        ad::softmax_cross_entropy(b.lm_logits(fs, sb.loss_rows), sb.loss_targets, ones(sb.loss_rows.size()));
    const auto lds = ad::softmax_cross_entropy(b.domain_logits(fs, sb.question_rows, true), {0, 0, 0}, ones(3));
    const auto ldt = ad::softmax_cross_entropy(b.domain_logits(b.forward_features(tb), tb.question_rows, true),
                                               {1, 1, 1}, ones(3));
    joint = training::collect_gradients(b, tape.backward(ad::add(ly, ad::scale(ad::add(lds, ldt), lambda))));
  }
  double worst = 0.0;
  std::size_t coords = 0;
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    const auto group = m.parameters()[i].group;
    if (group != ParamGroup::kBackbone && group != ParamGroup::kPrompt) continue;
    for (std::size_t k = 0; k < m.parameters()[i].value.size(); ++k) {
      const double expected = grad_at(d.ly, i, k) - lambda * grad_at(d.ld, i, k);
      worst = std::max(worst, std::abs(grad_at(joint, i, k) - expected));
      ++coords;
    }
  }
  if (worst > kGrlTol) problems.push_back("theta_f gradient off by " + sci(worst));
  const double secs = seconds_since(t0);
  if (secs >= kGrlSeconds) problems.push_back("took " + num(secs, 1) + " s");
  std::string detail = "forward bit-identical, backward negated, theta_f max |diff| " + sci(worst) + " over " +
                       std::to_string(coords) + " coords, " + num(secs, 2) + " s";
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

// ---- 3. update rule ----

Outcome update_rule() {
  const double mu = 0.05, lambda = 0.6;
  const model::StudentModel m0 = prada::testing::hand_seeded(prada::testing::tiny_config(8, 2, 2, 2, 64), 0.4);
  const Decomposed d = decomposed_gradients(m0, source_batch(), target_batch());
  model::StudentModel m = m0;
  training::Optimizer opt({training::OptimizerKind::kSgd}, m);
  training::GroupRates rates;
  rates.fill(mu);
  training::adversarial_step(m, opt, source_batch(), target_batch(), lambda, rates);
  std::array<double, model::kNumGroups> worst{};
  std::array<std::size_t, model::kNumGroups> moved{};
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    const auto g = m.parameters()[i].group;
    for (std::size_t k = 0; k < m.parameters()[i].value.size(); ++k) {
      const double gy = grad_at(d.ly, i, k), gd = grad_at(d.ld, i, k);
      double step = 0.0;
      switch (g) {
        case ParamGroup::kBackbone:
        case ParamGroup::kPrompt: step = gy - lambda * gd; break;  // descend L_y, ascend L_d
        case ParamGroup::kLmHead: step = gy; break;
        case ParamGroup::kDomain: step = lambda * gd; break;  // descend L_d
      }
      const double expected = m0.parameters()[i].value[k] - mu * step;
      const auto gi = static_cast<std::size_t>(g);
      worst[gi] = std::max(worst[gi], std::abs(m.parameters()[i].value[k] - expected));
      if (step != 0.0) ++moved[gi];
    }
  }
  bool pass = true;
  std::string detail;
  for (std::size_t g = 0; g < model::kNumGroups; ++g) {
    pass = pass && worst[g] <= kUpdateTol && moved[g] > 0;
    detail += std::string(detail.empty() ? "" : ", ") + model::group_name(ParamGroup(g)) + " " + sci(worst[g]);
  }
  return {pass, "max |theta - closed form| per group: " + detail};
}

// ---- 4. teacher filter ----

Outcome filter_postcondition() {
  teacher::TeacherParams p;
  p.error_rate = 0.2;
  p.seed = 2024;
  const auto samples = teacher::generate_samples(teacher::default_source_spec(teacher::TaskKind::kLastLetter, 11), 2000);
  teacher::FilterStats stats;
  std::size_t round_trip_fail = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto kept = teacher::filter_and_format(samples[i], teacher::teacher_cot(samples[i], p, i),
                                                 teacher::Domain::kSource, &stats);
    for (const auto& r : kept) {
      if (eval::extract_answer(r.c).value_or("\x01") != samples[i].a) ++round_trip_fail;
    }
  }
  // Each of the D teacher samples survives independently with probability
  // 1 - error_rate.
  const double expected = static_cast<double>(p.diversity) * (1.0 - p.error_rate);
  const double mean = static_cast<double>(stats.retained) / static_cast<double>(samples.size());
  const bool pass = round_trip_fail == 0 && std::abs(mean - expected) <= kRetainedRelTol * expected;
  return {pass, std::to_string(stats.retained) + " retained, " + std::to_string(round_trip_fail) +
                    " round-trip failures, mean retained per question " + num(mean, 3) + " vs binomial " +
                    num(expected, 3)};
}

// ---- 5. stage isolation ----

Outcome stage_isolation() {
  std::vector<std::string> problems;
  training::RunConfig cfg;
  cfg.model = prada::testing::tiny_config(8, 2, 2, 2, 64);
  cfg.optimizer.kind = training::OptimizerKind::kAdam;
  cfg.prompt_steps = 15;
  cfg.seed = 5;

  std::vector<teacher::ReasoningSample> source;
  for (const char* w : {"ab", "cd", "ef", "gh", "ij", "kl"}) {
    source.push_back({std::string(w) + " " + w + " ###", std::string(w) + " --> " + w + " END"});
  }
  model::StudentModel m = model::StudentModel::initialize(cfg.model, 3);
  std::map<ParamGroup, std::string> before;
  for (ParamGroup g : {ParamGroup::kBackbone, ParamGroup::kLmHead, ParamGroup::kPrompt, ParamGroup::kDomain}) {
    before[g] = group_hash(m, g);
  }
  training::prompt_learning_stage(m, source, cfg);
  for (ParamGroup g : {ParamGroup::kBackbone, ParamGroup::kLmHead, ParamGroup::kDomain}) {
    if (group_hash(m, g) != before[g]) problems.push_back(std::string("stage 1 changed ") + model::group_name(g));
  }
  if (group_hash(m, ParamGroup::kPrompt) == before[ParamGroup::kPrompt]) problems.push_back("stage 1 left prompts");

  // lambda = 0 against plain fine-tuning from the same start, same batches.
  const model::StudentModel start = m;
  std::size_t steps = 0;
  for (training::OptimizerKind kind : {training::OptimizerKind::kSgd, training::OptimizerKind::kAdam}) {
    model::StudentModel a = start, b = start;
    training::OptimizerSettings s{kind};
    s.grad_clip = 1.0;
    training::Optimizer oa(s, a), ob(s, b);
    training::GroupRates rates;
    rates.fill(1e-3);
    for (int i = 0; i < 10; ++i, ++steps) {
      const std::vector<SequenceInput> src = {training::encode_source(source[i % 6]),
                                              training::encode_source(source[(i + 1) % 6])};
      const std::vector<SequenceInput> tgt = {tgt_seq("tgt " + std::to_string(i)), tgt_seq("zz")};
      const double ly_adv = training::adversarial_step(a, oa, src, tgt, 0.0, rates).l_y;
      const double ly_ft = training::finetune_step(b, ob, src, rates);
      if (ly_adv != ly_ft) {
        problems.push_back(std::string("L_y differs at step ") + std::to_string(i));
        break;
      }
    }
    for (ParamGroup g : {ParamGroup::kBackbone, ParamGroup::kLmHead, ParamGroup::kPrompt}) {
      if (group_hash(a, g) != group_hash(b, g)) {
        problems.push_back(std::string(training::optimizer_name(kind)) + ": " + model::group_name(g) + " diverged");
      }
    }
  }
  std::string detail = "stage 1 frozen-group hashes unchanged, prompts moved; lambda=0 vs fine-tune bit-exact over " +
                       std::to_string(steps) + " steps (sgd, adam)";
  if (!problems.empty()) {
    detail.clear();
    for (const auto& p : problems) detail += (detail.empty() ? "" : "; ") + p;
  }
  return {problems.empty(), detail};
}

// ---- 6 and 7. the adversarial experiment ----

struct Experiment {
  training::RunConfig cfg;
  teacher::DomainDatasets data;
  eval::AblationGrid grid;
  double seconds = 0.0;  // pretraining plus every run, including reused ones
  fs::path dir;
};

training::RunConfig experiment_config() {
  training::RunConfig cfg;
  cfg.seed = 1;
  cfg.optimizer.kind = training::OptimizerKind::kAdam;
  cfg.mu_prompt = 1e-3;
  cfg.mu_finetune = 1e-4;
  cfg.lambda.lambda_max = 0.1;
  cfg.max_steps = 6000;
  cfg.eval_every = 250;
  cfg.patience = 24;
  cfg.eval_samples = 100;
  return cfg;
}

const std::vector<std::uint64_t> kExperimentSeeds = {1, 2, 3};

nlohmann::json read_json_or_empty(const fs::path& p) {
  if (!fs::exists(p)) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(model::read_file(p));
  } catch (const std::exception&) {
    return nlohmann::json::object();
  }
}

Experiment& experiment(const fs::path& work) {
  static std::unique_ptr<Experiment> cached;
  if (cached) return *cached;
  auto e = std::make_unique<Experiment>();
  e->dir = work / "experiment";
  fs::create_directories(e->dir);
  e->cfg = experiment_config();

  teacher::TeacherParams tp;
  tp.seed = e->cfg.seed;
  e->data = teacher::build_domain_datasets(teacher::default_source_spec(teacher::TaskKind::kLastLetter, e->cfg.seed),
                                           teacher::default_target_spec(teacher::TaskKind::kLastLetter, e->cfg.seed),
                                           teacher::DatasetSizes{}, tp);

  // Timings of finished work survive across invocations.
  const fs::path timing_path = e->dir / "timings.json";
  nlohmann::json timings = read_json_or_empty(timing_path);
  const std::string key = training::to_json(e->cfg).dump();
  if (timings.value("config", "") != key) timings = {{"config", key}, {"seconds", nlohmann::json::object()}};

  const fs::path stage0_path = e->dir / "stage0.ckpt";
  model::StudentModel stage0;
  if (fs::exists(stage0_path) && timings["seconds"].contains("stage0")) {
    stage0 = model::load_checkpoint(stage0_path, &e->cfg.model);
  } else {
    const auto t0 = Clock::now();
    std::cerr << "acceptance: pretraining the shared backbone\n";
    stage0 = model::StudentModel::initialize(e->cfg.model, e->cfg.seed);
    training::pretrain_backbone(stage0, training::pretrain_corpus(e->data, e->cfg.filler_lines, e->cfg.seed), e->cfg);
    model::save_checkpoint(stage0_path, stage0);
    timings["seconds"]["stage0"] = seconds_since(t0);
    model::write_file_atomic(timing_path, timings.dump(2));
  }

  eval::AblationOptions opt;
  opt.out_dir = e->dir / "runs";
  opt.reuse_finished = true;
  opt.probe.seed = e->cfg.seed;
  opt.parallel_runs = std::max(1u, std::thread::hardware_concurrency());
  std::cerr << "acceptance: ablation over " << eval::kAllArms.size() << " arms x " << kExperimentSeeds.size()
            << " seeds (finished runs in " << opt.out_dir.string() << " are reused)\n";
  const auto t_ablate = Clock::now();
  e->grid = eval::run_ablation(e->cfg, {eval::kAllArms.begin(), eval::kAllArms.end()}, e->data, stage0,
                               kExperimentSeeds, opt);
  const double fresh = seconds_since(t_ablate);
  double fresh_sum = 0.0;
  for (const auto& r : e->grid.runs) fresh_sum += r.seconds;
  // Concurrent runs overlap; charge fresh runs the wall clock they shared.
  for (const auto& r : e->grid.runs) {
    const std::string tag = std::string(eval::arm_slug(r.arm)) + "_s" + std::to_string(r.seed);
    if (r.seconds > 0.0) timings["seconds"][tag] = fresh_sum > 0.0 ? fresh * r.seconds / fresh_sum : 0.0;
  }
  model::write_file_atomic(timing_path, timings.dump(2));
  for (const auto& [k, v] : timings["seconds"].items()) e->seconds += v.get<double>();

  for (const auto& r : e->grid.runs) {
    const fs::path run_dir = opt.out_dir / (std::string(eval::arm_slug(r.arm)) + "_s" + std::to_string(r.seed));
    model::write_file_atomic(run_dir / "convergence.svg",
                             eval::convergence_svg(r.log, kSmoothWindow, std::string(eval::arm_id(r.arm))));
  }
  model::write_file_atomic(e->dir / "ablation.csv", eval::ablation_csv(e->grid));
  model::write_file_atomic(e->dir / "ablation.txt", eval::ablation_table(e->grid));
  std::cerr << eval::ablation_table(e->grid);
  cached = std::move(e);
  return *cached;
}

std::size_t arm_index(const eval::AblationGrid& g, eval::Arm arm) {
  return static_cast<std::size_t>(std::find(g.arms.begin(), g.arms.end(), arm) - g.arms.begin());
}

Outcome adversarial_effect(const fs::path& work) {
  const Experiment& e = experiment(work);
  const auto& g = e.grid;
  const std::size_t ly = arm_index(g, eval::Arm::kTaskOnly), lp = arm_index(g, eval::Arm::kPrompt),
                    ld = arm_index(g, eval::Arm::kAdversarial), full = arm_index(g, eval::Arm::kFull);
  const double probe_full = g.probe_acc[full].mean, probe_l0 = g.probe_acc[lp].mean;
  const double t_full = g.target_acc[full][0].mean, t_ld = g.target_acc[ld][0].mean, t_ly = g.target_acc[ly][0].mean;
  const double s_full = g.source_acc[full].mean, s_ly = g.source_acc[ly].mean;

  const bool a = probe_full <= probe_l0 - kProbeGap;
  const bool b = t_full >= t_ld && t_ld >= t_ly && t_full - t_ly >= kTargetGain;
  const bool c = std::abs(s_full - s_ly) <= kSourceGap;
  const bool budget = e.seconds < kExperimentSeconds;
  std::string detail = std::string("(a) ") + (a ? "ok" : "FAIL") + " probe full " + num(probe_full) +
                       " vs lambda=0 " + num(probe_l0) + "; (b) " + (b ? "ok" : "FAIL") + " target full " +
                       num(t_full) + " / L_y+L_d " + num(t_ld) + " / L_y " + num(t_ly) + "; (c) " +
                       (c ? "ok" : "FAIL") + " source full " + num(s_full) + " vs L_y " + num(s_ly) + "; runtime " +
                       (budget ? "ok " : "FAIL ") + num(e.seconds / 60.0, 1) + " min on " +
                       std::to_string(std::max(1u, std::thread::hardware_concurrency())) + " core(s)";
  return {a && b && c && budget, detail};
}

Outcome convergence_artifact(const fs::path& work) {
  const Experiment& e = experiment(work);
  const auto it = std::find_if(e.grid.runs.begin(), e.grid.runs.end(),
                               [](const eval::ArmRun& r) { return r.arm == eval::Arm::kFull; });
  if (it == e.grid.runs.end()) return {false, "no full-arm run"};
  const fs::path run_dir = e.dir / "runs" / (std::string("full_s") + std::to_string(it->seed));
  const fs::path csv = run_dir / "metrics.csv", svg = run_dir / "convergence.svg";
  const auto log = training::read_metric_csv(csv);
  if (log.size() < kSmoothWindow) return {false, "only " + std::to_string(log.size()) + " logged steps"};
  std::vector<double> ly;
  for (const auto& row : log) ly.push_back(row.l_y);
  const auto sm = eval::smooth(ly, kSmoothWindow);
  const bool files = fs::exists(csv) && fs::exists(svg) && model::read_file(svg).find("<svg") != std::string::npos;
  const bool lower = sm.back() < sm[kSmoothWindow - 1];
  return {files && lower, "smoothed L_y " + num(sm[kSmoothWindow - 1], 4) + " at step " +
                              std::to_string(log[kSmoothWindow - 1].step) + " -> " + num(sm.back(), 4) +
                              " at step " + std::to_string(log.back().step) + "; " +
                              (files ? "metrics.csv and convergence.svg written" : "artifacts missing")};
}

// ---- 8. reproducibility through the command-line tool ----

int spawn_cli(const std::vector<std::string>& args, const fs::path& log, pid_t* pid_out = nullptr) {
  std::vector<std::string> full{PRADA_CLI};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : full) argv.push_back(s.data());
  argv.push_back(nullptr);
  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  posix_spawn_file_actions_addopen(&fa, 1, log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  posix_spawn_file_actions_adddup2(&fa, 1, 2);
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, full[0].c_str(), &fa, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&fa);
  if (rc != 0) return -1;
  if (pid_out) {
    *pid_out = pid;
    return 0;
  }
  int status = 0;
  waitpid(pid, &status, 0);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool same_file(const fs::path& a, const fs::path& b) {
  return fs::exists(a) && fs::exists(b) && model::read_file(a) == model::read_file(b);
}

Outcome reproducibility(const fs::path& work) {
  const fs::path dir = work / "repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path log = dir / "cli.log";
  const std::string d = (dir / "data").string(), cfg = (dir / "tiny.json").string();
  {
    std::ofstream(cfg) << R"({"model": {"hidden": 8, "layers": 1, "heads": 2, "prompt_len": 2},
 "pretrain_steps": 30, "prompt_steps": 10, "max_steps": 40, "eval_every": 10, "eval_samples": 6,
 "checkpoint_every": 3, "max_new_tokens": 24, "filler_lines": 60, "optimizer": {"kind": "adam"}})";
  }
  std::vector<std::string> problems;
  auto run = [&](const std::vector<std::string>& args) {
    const int code = spawn_cli(args, log);
    if (code != 0) {
      std::string joined;
      for (const auto& a : args) joined += " " + a;
      problems.push_back("exit " + std::to_string(code) + " from" + joined);
    }
    return code;
  };
  const std::string ra = (dir / "a").string(), rb = (dir / "b").string(), rc = (dir / "c").string();
  run({"gen", "--task", "last_letter", "--n", "120", "--n-target", "120", "--n-eval", "20", "--seed", "9", "--out", d});
  run({"train", "--data", d, "--out", ra, "--config", cfg, "--seed", "4"});
  if (!problems.empty()) return {false, problems.front()};

  // Every manifest reproduces its artifacts.
  std::size_t verified = 0;
  for (const fs::path& m : {fs::path(d) / "manifest-gen.json", fs::path(ra) / "manifest-train-all.json"}) {
    const auto before = nlohmann::json::parse(model::read_file(m));
    if (run({"rerun", m.string()}) == 0) verified += before.at("artifacts").size();
    const auto after = nlohmann::json::parse(model::read_file(m));
    if (before.at("artifacts") != after.at("artifacts")) problems.push_back("artifact digests changed for " + m.string());
  }

  // Interrupted at a fixed step, then resumed.
  run({"train", "--data", d, "--out", rb, "--config", cfg, "--seed", "4", "--stop-after", "17"});
  run({"train", "--data", d, "--out", rb, "--config", cfg, "--seed", "4", "--resume"});
  const bool stop_same = same_file(fs::path(ra) / "stage2.ckpt", fs::path(rb) / "stage2.ckpt") &&
                         same_file(fs::path(ra) / "metrics.csv", fs::path(rb) / "metrics.csv");
  if (!stop_same) problems.push_back("stop-and-resume differs from the uninterrupted run");

  // Killed with SIGKILL once a resumable state exists, then resumed.
  bool killed = false;
  {
    pid_t pid = 0;
    spawn_cli({"train", "--data", d, "--out", rc, "--config", cfg, "--seed", "4"}, log, &pid);
    const fs::path state = fs::path(rc) / "train_state.bin";
    int status = 0;
    while (true) {
      if (waitpid(pid, &status, WNOHANG) == pid) break;
      if (fs::exists(state)) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        kill(pid, SIGKILL);
        waitpid(pid, &status, 0);
        killed = WIFSIGNALED(status);
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    fs::remove(fs::path(rc) / ".prada.lock");  // left behind by the killed writer
    run({"train", "--data", d, "--out", rc, "--config", cfg, "--seed", "4", "--resume"});
  }
  const bool kill_same = same_file(fs::path(ra) / "stage2.ckpt", fs::path(rc) / "stage2.ckpt") &&
                         same_file(fs::path(ra) / "metrics.csv", fs::path(rc) / "metrics.csv");
  if (!kill_same) problems.push_back("kill-and-resume differs from the uninterrupted run");
  if (!killed) problems.push_back("training finished before it could be killed");

  std::string detail = std::to_string(verified) +
                       " artifacts re-run from manifests byte-identical; stop-after-17 and SIGKILL resumes match "
                       "the uninterrupted run";
  if (!problems.empty()) {
    detail.clear();
    for (const auto& p : problems) detail += (detail.empty() ? "" : "; ") + p;
  }
  return {problems.empty(), detail};
}

// ---- 9. loss sanity and projection ----

Outcome loss_and_projection() {
  const std::size_t V = model::CharTokenizer::kVocabSize;
  double ce = 0.0;
  {
    ad::Tape t;
    ad::Var logits = t.leaf(ad::Tensor({5, V}));
    ce = ad::softmax_cross_entropy(logits, {0, 7, 19, V - 1, 3}, ones(5)).value().item();
  }
  const double ce_err = std::abs(ce - std::log(static_cast<double>(V)));

  // A planted plane in R^6: points a u + b v plus a constant offset.
  Rng rng(31);
  const std::size_t D = 6, N = 200;
  std::vector<double> u(D), v(D), offset(D);
  for (std::size_t k = 0; k < D; ++k) {
    u[k] = rng.normal();
    v[k] = rng.normal();
    offset[k] = rng.normal();
  }
  ad::Tensor x({N, D});
  std::vector<std::string> domains;
  for (std::size_t i = 0; i < N; ++i) {
    const double a = 3.0 * rng.normal(), b = rng.normal();
    for (std::size_t k = 0; k < D; ++k) x.at(i, k) = offset[k] + a * u[k] + b * v[k];
    domains.push_back(i % 2 ? "source" : "target");
  }
  const eval::Projection p = eval::principal_projection(x, domains, "planted");
  const double rec = eval::reconstruction_error(x, p);
  const bool pass = ce_err <= kUniformCeTol && rec < kReconstructionTol;
  return {pass, "uniform-logit CE " + num(ce, 9) + " vs ln|V| = ln " + std::to_string(V) + " (|diff| " + sci(ce_err) +
                    "); planted-plane reconstruction error " + sci(rec)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  const fs::path work = PRADA_ACCEPTANCE_WORK;
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradcheck suite", gradcheck_suite},
      {"gradient reversal contract", grl_contract},
      {"update-rule equality", update_rule},
      {"teacher filter postcondition", filter_postcondition},
      {"stage isolation", stage_isolation},
      {"adversarial effect", [&] { return adversarial_effect(work); }},
      {"convergence artifact", [&] { return convergence_artifact(work); }},
      {"reproducibility", [&] { return reproducibility(work); }},
      {"uniform-logit loss and projection", loss_and_projection},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << "criterion " << id << " [" << criteria[i].first << "]: " << (o.pass ? "PASS" : "FAIL") << " | "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
