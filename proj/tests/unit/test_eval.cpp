#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "prada/eval/ablation.hpp"
#include "prada/eval/decode.hpp"
#include "prada/eval/plot.hpp"
#include "prada/eval/probe.hpp"
#include "prada/eval/projection.hpp"
#include "prada/eval/report.hpp"
#include "prada/util/error.hpp"
#include "prada/util/rng.hpp"
#include "support/oracles.hpp"

using namespace prada;
using namespace prada::eval;

namespace {

// A tiny model trained to reproduce one completion verbatim.
const model::StudentModel& memorized() {
  static const model::StudentModel m = [] {
    auto cfg = prada::testing::tiny_config(16, 1, 2, 0, 48);
    auto model = model::StudentModel::initialize(cfg, 5);
    training::OptimizerSettings s{training::OptimizerKind::kAdam};
    training::Optimizer opt(s, model);
    training::GroupRates rates;
    rates.fill(1e-2);
    const std::vector<model::SequenceInput> batch{
        training::encode_source({"ab cd ###", "b d --> bd END", teacher::Domain::kSource})};
    for (int i = 0; i < 400; ++i) training::finetune_step(model, opt, batch, rates);
    return model;
  }();
  return m;
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("prada_eval_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

// ---- answer extraction and decoding ----

TEST(Extract, CompletionFormat) {
  EXPECT_EQ(extract_answer("The last letter of 'cat' is 't'. The last letter of 'dog' is 'g'. --> tg END"), "tg");
  EXPECT_FALSE(extract_answer("garbled").has_value());
  EXPECT_FALSE(extract_answer("no end --> x").has_value());
  EXPECT_EQ(extract_answer("a --> b --> c END"), "c");
  EXPECT_EQ(extract_answer("r -->   spaced  END"), "spaced");
}

TEST(Decode, ZeroBudgetIsEmptyAndTruncated) {
  const auto r = greedy_decode(memorized(), "ab cd ###", 0);
  EXPECT_EQ(r.completion, "");
  EXPECT_TRUE(r.truncated);
}

TEST(Decode, QuestionMustCarrySuffix) { EXPECT_THROW(greedy_decode(memorized(), "ab cd", 5), ContractError); }

TEST(Decode, MemorizedCompletionIsReproduced) {
  const auto r = greedy_decode(memorized(), "ab cd ###", 30);
  EXPECT_EQ(r.completion, "b d --> bd END");
  EXPECT_FALSE(r.truncated);
}

TEST(Decode, Deterministic) {
  const auto m = model::StudentModel::initialize(prada::testing::tiny_config(8, 1, 2, 2, 40), 3);
  const auto a = greedy_decode(m, "xyz ###", 20), b = greedy_decode(m, "xyz ###", 20);
  EXPECT_EQ(a.completion, b.completion);
  EXPECT_EQ(a.truncated, b.truncated);
}

TEST(Decode, BudgetExhaustionKeepsText) {
  const auto r = greedy_decode(memorized(), "ab cd ###", 4);
  EXPECT_TRUE(r.truncated);
  EXPECT_EQ(r.completion, "b d");
}

// ---- accuracy reports ----

TEST(Accuracy, ScoresAndRecords) {
  const std::vector<teacher::EvalRecord> set{{"ab cd ###", "bd"}, {"ab cd ###", "BD "}, {"ab cd ###", "xx"}};
  const EvalReport r = accuracy(memorized(), set, "toy", 30);
  EXPECT_EQ(r.n, 3u);
  EXPECT_EQ(r.samples.size(), 3u);
  EXPECT_EQ(r.n_correct, 2u);
  EXPECT_EQ(r.accuracy, 2.0 / 3.0);
  std::size_t flags = 0;
  for (const auto& s : r.samples) flags += s.correct ? 1 : 0;
  EXPECT_EQ(static_cast<double>(flags) / static_cast<double>(r.n), r.accuracy);
  const EvalReport threaded = accuracy(memorized(), set, "toy", 30, 3);
  for (std::size_t i = 0; i < set.size(); ++i) {
    EXPECT_EQ(threaded.samples[i].completion, r.samples[i].completion);
    EXPECT_EQ(threaded.samples[i].correct, r.samples[i].correct);
  }
}

TEST(Accuracy, AllCorrectAndAbsentExtraction) {
  EXPECT_EQ(accuracy(memorized(), {{"ab cd ###", "bd"}}, "one", 30).accuracy, 1.0);
  const EvalReport cut = accuracy(memorized(), {{"ab cd ###", "bd"}}, "cut", 3);
  EXPECT_FALSE(cut.samples[0].extracted.has_value());
  EXPECT_EQ(cut.accuracy, 0.0);
}

TEST(Accuracy, EmptySetIsError) { EXPECT_THROW(accuracy(memorized(), {}, "none", 5), DataError); }

TEST(Accuracy, ReportFiles) {
  const auto dir = temp_dir("report");
  const EvalReport r = accuracy(memorized(), {{"ab cd ###", "bd"}, {"ab cd ###", "q"}}, "toy", 30);
  write_eval_report(dir / "r.json", dir / "r.jsonl", r);
  std::ifstream in(dir / "r.jsonl");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("c"));
    ++rows;
  }
  EXPECT_EQ(rows, 2u);
  std::ifstream js(dir / "r.json");
  const auto summary = nlohmann::json::parse(js);
  EXPECT_EQ(summary.at("n").get<int>(), 2);
  EXPECT_EQ(summary.at("accuracy").get<double>(), 0.5);
}

// ---- domain probe ----

TEST(Probe, NoSignalGivesChance) {
  const auto m = model::StudentModel::initialize(prada::testing::tiny_config(16, 1, 2, 0, 96), 7);
  const auto spec = teacher::default_source_spec(teacher::TaskKind::kLastLetter, 9);
  std::vector<std::string> a, b;
  for (const auto& s : teacher::generate_samples(spec, 400, 0)) a.push_back(teacher::format_question(s.q));
  for (const auto& s : teacher::generate_samples(spec, 400, 400)) b.push_back(teacher::format_question(s.q));
  const auto r = domain_probe(m, a, b);
  EXPECT_NEAR(r.accuracy, 0.5, 0.07);
  EXPECT_EQ(r.n_train, 640u);
  EXPECT_EQ(r.n_test, 160u);
}

TEST(Probe, SeparatesShiftedClusters) {
  Rng rng(4);
  ad::Tensor x(ad::Shape{200, 5});
  std::vector<int> labels;
  for (std::size_t i = 0; i < 200; ++i) {
    labels.push_back(i % 2 == 0 ? 0 : 1);
    for (std::size_t k = 0; k < 5; ++k) x.at(i, k) = rng.normal() + (k == 2 && i % 2 ? 6.0 : 0.0);
  }
  const auto r = probe_features(x, labels);
  EXPECT_GT(r.accuracy, 0.95);
  const auto again = probe_features(x, labels);
  EXPECT_EQ(r.accuracy, again.accuracy);
  EXPECT_EQ(r.train_accuracy, again.train_accuracy);
}

TEST(Probe, ImbalanceIsError) {
  ad::Tensor x(ad::Shape{5, 2});
  EXPECT_THROW(probe_features(x, {0, 0, 0, 1, 1}), DataError);
  const auto m = model::StudentModel::initialize(prada::testing::tiny_config(8, 1, 2, 0, 32), 7);
  EXPECT_THROW(domain_probe(m, {"a ###", "b ###"}, {"c ###"}), DataError);
}

TEST(Probe, PoolingMatchesDomainClassifierInput) {
  const auto m = model::StudentModel::initialize(prada::testing::tiny_config(8, 1, 2, 2, 32), 2);
  const ad::Tensor f = pooled_features(m, {"ab ###", "xyz ###", "q ###"}, 2);
  ad::Tape tape;
  const auto bound = m.bind(tape, model::GroupMask::none());
  const auto pb = model::pack_sequences(m.config(), {training::encode_target("xyz ###")});
  const auto ref = ad::mean_pool_rows(bound.forward_features(pb), pb.question_rows).value();
  for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(f.at(1, k), ref.at(0, k));
}

// ---- projection ----

TEST(Projection, RecoversPlantedPlane) {
  // Points on the plane spanned by u, v through c; the normal n is known, so
  // both recovered axes must be orthogonal to it and span the data exactly.
  const double u[3] = {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0), 0.0};
  const double v[3] = {1.0 / std::sqrt(3.0), -1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0)};
  const double n[3] = {u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
  const double c[3] = {0.3, -1.2, 2.0};
  Rng rng(11);
  ad::Tensor x(ad::Shape{60, 3});
  std::vector<std::string> domains;
  for (std::size_t i = 0; i < 60; ++i) {
    const double a = 3.0 * rng.normal(), b = rng.normal();
    for (std::size_t k = 0; k < 3; ++k) x.at(i, k) = c[k] + a * u[k] + b * v[k];
    domains.push_back(i < 30 ? "s" : "t");
  }
  const Projection p = principal_projection(x, domains, "arm");
  EXPECT_LT(reconstruction_error(x, p), 1e-8);
  for (const auto& axis : p.axes) {
    double dot_n = 0.0, norm = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      dot_n += axis[k] * n[k];
      norm += axis[k] * axis[k];
    }
    EXPECT_NEAR(dot_n, 0.0, 1e-10);
    EXPECT_NEAR(norm, 1.0, 1e-12);
    const double first = std::abs(axis[0]) > 1e-12 ? axis[0] : axis[1];
    EXPECT_GT(first, 0.0);
  }
  EXPECT_GT(p.variance[0], p.variance[1]);
}

TEST(Projection, DuplicatesAndRowCount) {
  const auto m = model::StudentModel::initialize(prada::testing::tiny_config(8, 1, 2, 0, 96), 3);
  std::vector<LabeledQuestion> qs;
  for (int i = 0; i < 12; ++i) qs.push_back({"same question ###", "source"});
  for (int i = 0; i < 12; ++i) qs.push_back({"other " + std::to_string(i) + " ###", "target"});
  const Projection p = project_embeddings(m, qs, "base");
  ASSERT_EQ(p.points.size(), qs.size());
  for (int i = 1; i < 12; ++i) {
    EXPECT_EQ(p.points[i].x, p.points[0].x);
    EXPECT_EQ(p.points[i].y, p.points[0].y);
  }
  const std::string csv = projection_csv(p.points);
  EXPECT_EQ(csv.rfind("x,y,domain,arm\n", 0), 0u);
  EXPECT_EQ(count(csv, "\n"), qs.size() + 1);
  EXPECT_EQ(count(projection_svg(p.points, "t"), "<circle"), qs.size() + 2);
}

TEST(Projection, NeedsTwoDomainsWithTenSamples) {
  const auto m = model::StudentModel::initialize(prada::testing::tiny_config(8, 1, 2, 0, 32), 3);
  std::vector<LabeledQuestion> one(12, {"a ###", "source"});
  EXPECT_THROW(project_embeddings(m, one, "x"), DataError);
  auto few = one;
  few.push_back({"b ###", "target"});
  EXPECT_THROW(project_embeddings(m, few, "x"), DataError);
}

// ---- convergence plot ----

TEST(Plot, TrailingMovingAverage) {
  EXPECT_EQ(smooth({1, 2, 3, 4}, 2), (std::vector<double>{1, 1.5, 2.5, 3.5}));
  EXPECT_EQ(smooth({4, 2}, 50), (std::vector<double>{4, 3}));
  EXPECT_THROW(smooth({1}, 0), ConfigError);
}

TEST(Plot, ConvergenceSvgHasFourSeries) {
  std::vector<training::MetricRow> log;
  for (std::size_t s = 1; s <= 120; ++s) log.push_back({s, 2.0 / static_cast<double>(s), 0.7, 0.69, 0.1, {}, {}});
  const std::string svg = convergence_svg(log, 50);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_EQ(count(svg, "<polyline"), 4u);
  EXPECT_NE(svg.find("L_y (smoothed)"), std::string::npos);
}

// ---- ablation ----

TEST(Ablation, ArmIdsAndParsing) {
  EXPECT_STREQ(arm_id(Arm::kFull), "{L_y,L_p,L_d}");
  for (Arm a : kAllArms) {
    EXPECT_EQ(parse_arm(arm_id(a)), a);
    EXPECT_EQ(parse_arm(arm_slug(a)), a);
  }
  EXPECT_THROW(parse_arm("L_q"), ConfigError);
}

TEST(Ablation, ArmConfigsAndContradictions) {
  training::RunConfig full;
  const auto ly = arm_config(full, Arm::kTaskOnly);
  EXPECT_EQ(ly.model.prompt_len, 0u);
  EXPECT_EQ(ly.lambda.lambda_max, 0.0);
  const auto lp = arm_config(full, Arm::kPrompt);
  EXPECT_EQ(lp.model.prompt_len, full.model.prompt_len);
  EXPECT_EQ(lp.lambda.lambda_max, 0.0);
  const auto ld = arm_config(full, Arm::kAdversarial);
  EXPECT_EQ(ld.model.prompt_len, 0u);
  EXPECT_EQ(ld.lambda.lambda_max, full.lambda.lambda_max);

  training::RunConfig no_prompts = full;
  no_prompts.model.prompt_len = 0;
  EXPECT_THROW(arm_config(no_prompts, Arm::kPrompt), ConfigError);
  EXPECT_THROW(check_arm(full, Arm::kTaskOnly), ConfigError);
  training::RunConfig no_lambda = full;
  no_lambda.lambda.lambda_max = 0.0;
  EXPECT_THROW(arm_config(no_lambda, Arm::kFull), ConfigError);
}

TEST(Ablation, ArmsShareInitialization) {
  training::RunConfig full;
  full.model = prada::testing::tiny_config(8, 1, 2, 3, 40);
  full.seed = 4;
  const auto stage0 = model::StudentModel::initialize(full.model, 99);
  const auto a = arm_initial_model(stage0, arm_config(full, Arm::kFull));
  const auto b = arm_initial_model(stage0, arm_config(full, Arm::kTaskOnly));
  EXPECT_EQ(b.group_size(model::ParamGroup::kPrompt), 0u);
  EXPECT_EQ(a.group_hash(model::ParamGroup::kBackbone), stage0.group_hash(model::ParamGroup::kBackbone));
  EXPECT_EQ(b.group_hash(model::ParamGroup::kBackbone), stage0.group_hash(model::ParamGroup::kBackbone));
  EXPECT_EQ(a.group_hash(model::ParamGroup::kDomain), b.group_hash(model::ParamGroup::kDomain));
}

TEST(Ablation, SingleArmSingleSeedGrid) {
  teacher::TeacherParams tp;
  const auto data = teacher::build_domain_datasets(teacher::default_source_spec(teacher::TaskKind::kModAdd, 1),
                                                   teacher::default_target_spec(teacher::TaskKind::kModAdd, 1),
                                                   {30, 30, 12, 12}, tp);
  training::RunConfig full;
  full.model = prada::testing::tiny_config(8, 1, 2, 2, 160);
  full.max_steps = 3;
  full.eval_every = 3;
  full.eval_samples = 2;
  full.max_new_tokens = 4;
  full.batch_source = full.batch_target = 2;
  full.prompt_steps = 2;
  const auto stage0 = model::StudentModel::initialize(full.model, 1);
  AblationOptions opt;
  opt.out_dir = temp_dir("ablation");
  opt.target_column = "mod_add";
  opt.probe_samples = 10;
  const auto grid = run_ablation(full, {Arm::kFull}, data, stage0, {7}, opt);
  ASSERT_EQ(grid.arms.size(), 1u);
  ASSERT_EQ(grid.target_acc.size(), 1u);
  ASSERT_EQ(grid.target_acc[0].size(), 1u);
  EXPECT_EQ(grid.runs.size(), 1u);
  EXPECT_EQ(grid.runs[0].log.size(), 3u);
  EXPECT_TRUE(std::filesystem::exists(opt.out_dir / "full_s7" / "result.json"));

  // A second call reuses the finished run.
  const auto again = run_ablation(full, {Arm::kFull}, data, stage0, {7}, opt);
  EXPECT_EQ(again.runs[0].probe_acc, grid.runs[0].probe_acc);
  EXPECT_EQ(training::metric_csv(again.runs[0].log), training::metric_csv(grid.runs[0].log));
}

TEST(Ablation, CsvAndTable) {
  std::vector<ArmRun> runs;
  for (Arm a : kAllArms) {
    for (int s = 0; s < 3; ++s) {
      ArmRun r;
      r.arm = a;
      r.seed = static_cast<std::uint64_t>(s);
      r.target_acc = 0.1 * static_cast<double>(s) + (a == Arm::kFull ? 0.2 : 0.0);
      runs.push_back(r);
    }
  }
  const auto grid = summarize_runs(runs, "last_letter");
  EXPECT_NEAR(grid.target_acc[3][0].mean, 0.3, 1e-12);
  EXPECT_NEAR(grid.target_acc[0][0].stddev, 0.1, 1e-12);
  const std::string csv = ablation_csv(grid);
  EXPECT_EQ(count(csv, "\n"), 1u + 4u * 3u);
  EXPECT_NE(csv.find("\"{L_y,L_p,L_d}\",1,1,1,last_letter,target_acc,0.3,"), std::string::npos);
  const std::string table = ablation_table(grid);
  EXPECT_NE(table.find("30.00 ± 10.00"), std::string::npos);
  EXPECT_EQ(count(table, "✓"), 4u + 2u + 2u);
}
