#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "prada/autodiff/ops.hpp"
#include "prada/eval/decode.hpp"
#include "prada/model/student.hpp"
#include "prada/model/tokenizer.hpp"
#include "prada/teacher/teacher.hpp"
#include "prada/training/optimizer.hpp"
#include "prada/training/trainer.hpp"
#include "prada/util/rng.hpp"

using namespace prada;

namespace {

ad::Tensor random_tensor(ad::Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  ad::Tensor t(std::move(shape));
  for (double& x : t.data()) x = rng.normal();
  return t;
}

teacher::DomainDatasets small_data() {
  teacher::TeacherParams tp;
  tp.seed = 3;
  return teacher::build_domain_datasets(teacher::default_source_spec(teacher::TaskKind::kLastLetter, 3),
                                        teacher::default_target_spec(teacher::TaskKind::kLastLetter, 3),
                                        {64, 64, 8, 8}, tp);
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const ad::Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    ad::Tape t;
    benchmark::DoNotOptimize(ad::matmul(t.constant(a), t.constant(b)).value().raw());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(256);

static void BM_AttentionForwardBackward(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const ad::Tensor qkv = random_tensor({4 * len, 96}, 3);
  const std::vector<ad::Segment> segs{{0, len}, {len, len}, {2 * len, len}, {3 * len, len}};
  for (auto _ : state) {
    ad::Tape t;
    ad::Var x = t.leaf(qkv);
    benchmark::DoNotOptimize(t.backward(ad::sum(ad::causal_attention(x, segs, 4))).size());
  }
}
BENCHMARK(BM_AttentionForwardBackward)->Arg(64)->Arg(256);

static void BM_TeacherGenerate(benchmark::State& state) {
  const auto samples = teacher::generate_samples(teacher::default_source_spec(teacher::TaskKind::kLastLetter, 1), 256);
  teacher::TeacherParams tp;
  std::uint64_t i = 0;
  for (auto _ : state) {
    const auto& s = samples[i % samples.size()];
    benchmark::DoNotOptimize(teacher::filter_and_format(s, teacher::teacher_cot(s, tp, i), teacher::Domain::kSource));
    ++i;
  }
}
BENCHMARK(BM_TeacherGenerate);

static void BM_AdversarialStep(benchmark::State& state) {
  const auto data = small_data();
  training::RunConfig cfg;
  model::StudentModel m = model::StudentModel::initialize(cfg.model, 1);
  training::Optimizer opt({training::OptimizerKind::kAdam}, m);
  const auto src = training::encode_sources(data.source);
  const auto tgt = training::encode_targets(data.target);
  const std::size_t b = cfg.batch_source;
  training::GroupRates rates;
  rates.fill(1e-5);
  std::size_t off = 0;
  for (auto _ : state) {
    const std::vector<model::SequenceInput> sb(src.begin() + off % (src.size() - b), src.begin() + off % (src.size() - b) + b);
    const std::vector<model::SequenceInput> tb(tgt.begin() + off % (tgt.size() - b), tgt.begin() + off % (tgt.size() - b) + b);
    benchmark::DoNotOptimize(training::adversarial_step(m, opt, sb, tb, 0.5, rates).l_y);
    off += b;
  }
}
BENCHMARK(BM_AdversarialStep)->Unit(benchmark::kMillisecond);

static void BM_GreedyDecode(benchmark::State& state) {
  const auto data = small_data();
  training::RunConfig cfg;
  const model::StudentModel m = model::StudentModel::initialize(cfg.model, 1);
  const auto budget = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(eval::greedy_decode(m, data.source_eval[0].q, budget).completion);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(budget));
}
BENCHMARK(BM_GreedyDecode)->Arg(100)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
