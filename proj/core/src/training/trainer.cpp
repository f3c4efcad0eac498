#include "prada/training/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "prada/autodiff/ops.hpp"
#include "prada/eval/report.hpp"
#include "prada/model/checkpoint.hpp"
#include "prada/model/tokenizer.hpp"
#include "prada/util/error.hpp"
#include "prada/util/log.hpp"
#include "prada/util/text.hpp"

namespace prada::training {

using model::PackedBatch;
using model::SequenceInput;
using model::StudentModel;

namespace {

constexpr std::uint64_t kPretrainStream = 0x70726530;
constexpr std::uint64_t kPackStream = 0x7061636b;
constexpr std::uint64_t kPromptStream = 0x70726531;
constexpr std::uint64_t kAdversarialStream = 0x70726532;
constexpr std::uint64_t kFillerStream = 0x66696c6c;

const std::vector<std::string> kFillerWords = {
    "cat",   "dog",   "sun",   "map",   "cup",    "hat",    "pen",    "box",    "fox",    "jam",   "kite",
    "lamp",  "nest",  "rope",  "sand",  "tree",   "wolf",   "bird",   "fish",   "frog",   "leaf",  "moon",
    "rain",  "ship",  "star",  "cake",  "milk",   "coat",   "door",   "drum",   "gate",   "hill",  "lake",
    "road",  "boat",  "bell",  "corn",  "desk",   "film",   "gift",   "blanket", "kitchen", "lantern", "meadow",
    "harbor", "violin", "marble", "pepper", "cotton", "shadow", "tomato", "wagon",  "zebra",  "igloo", "flute",
    "crown", "dream", "flame", "globe", "honey",  "ivory",  "juice",  "koala",  "llama",  "maple", "noble"};

// [B] mask of ones.
std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

ad::Var lm_loss(const model::BoundModel& bound, const PackedBatch& batch, ad::Var features) {
  return ad::softmax_cross_entropy(bound.lm_logits(features, batch.loss_rows), batch.loss_targets,
                                   ones(batch.loss_rows.size()));
}

std::vector<SequenceInput> lm_sequences(const StudentModel& model, const std::vector<std::string>& lines) {
  std::vector<SequenceInput> out;
  for (const auto& line : lines) {
    std::vector<std::size_t> ids = model::CharTokenizer::encode(line);
    if (ids.size() > model.config().max_seq) ids.resize(model.config().max_seq);
    if (ids.size() < 2) continue;
    out.push_back({{ids.front()}, std::vector<std::size_t>(ids.begin() + 1, ids.end())});
  }
  return out;
}

// Shuffled lines joined by newlines into chunks of at most max_seq symbols, so
// pretraining covers every position the model will later decode at.
std::vector<SequenceInput> packed_lm_sequences(const StudentModel& model, const std::vector<std::string>& lines,
                                               std::uint64_t seed) {
  const std::size_t cap = model.config().max_seq;
  std::vector<std::size_t> order(lines.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<SequenceInput> out;
  std::vector<std::size_t> chunk;
  const auto flush = [&] {
    if (chunk.size() >= 2) out.push_back({{chunk.front()}, std::vector<std::size_t>(chunk.begin() + 1, chunk.end())});
    chunk.clear();
  };
  for (std::size_t i : order) {
    std::vector<std::size_t> ids = model::CharTokenizer::encode(lines[i]);
    if (ids.size() > cap) ids.resize(cap);
    if (!chunk.empty() && chunk.size() + 1 + ids.size() > cap) flush();
    if (!chunk.empty()) chunk.push_back(model::CharTokenizer::kNewlineId);
    chunk.insert(chunk.end(), ids.begin(), ids.end());
  }
  flush();
  return out;
}

template <class T>
std::vector<T> pick(const std::vector<T>& all, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

void require_finite(double v, const std::string& what, std::size_t step) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "non-finite " << what << " (" << v << ") at step " << step;
    throw DivergenceError(os.str());
  }
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

SequenceInput encode_source(const teacher::ReasoningSample& s) {
  return {model::CharTokenizer::encode(s.q), model::CharTokenizer::encode(" " + s.c)};
}

SequenceInput encode_target(const std::string& q) { return {model::CharTokenizer::encode(q), {}}; }

std::vector<SequenceInput> encode_sources(const std::vector<teacher::ReasoningSample>& samples) {
  std::vector<SequenceInput> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(encode_source(s));
  return out;
}

std::vector<SequenceInput> encode_targets(const std::vector<teacher::TargetRecord>& records) {
  std::vector<SequenceInput> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(encode_target(r.q));
  return out;
}

EpochSampler::EpochSampler(std::size_t n, std::uint64_t seed) : n_(n), rng_(seed), pos_(0) {
  if (n == 0) throw ConfigError("EpochSampler: empty dataset");
}

std::vector<std::size_t> EpochSampler::next(std::size_t count) {
  std::vector<std::size_t> out;
  out.reserve(count);
  while (out.size() < count) {
    if (pos_ == order_.size()) {
      order_.resize(n_);
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      rng_.shuffle(order_);
      pos_ = 0;
    }
    out.push_back(order_[pos_++]);
  }
  return out;
}

nlohmann::json EpochSampler::state() const {
  return {{"n", n_}, {"rng", rng_.state()}, {"order", order_}, {"pos", pos_}};
}

void EpochSampler::restore(const nlohmann::json& s) {
  if (s.at("n").get<std::size_t>() != n_) throw DataError("sampler state is for a dataset of different size");
  rng_.set_state(s.at("rng").get<std::string>());
  order_ = s.at("order").get<std::vector<std::size_t>>();
  pos_ = s.at("pos").get<std::size_t>();
}

// ---- Stage 0 ----

std::vector<std::string> filler_text(std::size_t lines, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kFillerStream));
  auto word = [&]() -> const std::string& { return kFillerWords[rng.below(kFillerWords.size())]; };
  std::vector<std::string> out;
  out.reserve(lines);
  for (std::size_t i = 0; i < lines; ++i) {
    const std::string a = word(), b = word(), c = word(), d = word();
    std::string line;
    switch (rng.below(7)) {
      case 0: line = "The " + a + " and the " + b + " went to the " + c + "."; break;
      case 1: line = "Repeat '" + a + " " + b + "': '" + a + " " + b + "'."; break;
      case 2: line = "Repeat '" + a + " " + b + " " + c + "': '" + a + " " + b + " " + c + "'."; break;
      case 3: {
        std::vector<std::string> letters;
        for (char ch : a) letters.emplace_back(1, ch);
        line = "Spell '" + a + "': " + join(letters, " ") + ".";
        break;
      }
      case 4: line = "A " + a + " is not a " + b + ", and a " + c + " is not a " + d + "."; break;
      case 5: line = "'" + a + "' ends with '" + a.back() + "', and '" + b + "' ends with '" + b.back() + "'."; break;
      default: line = "First '" + a + "', then '" + b + "', then '" + c + "'."; break;
    }
    out.push_back(std::move(line));
  }
  return out;
}

std::vector<std::string> pretrain_corpus(const teacher::DomainDatasets& data, std::size_t filler_lines,
                                         std::uint64_t seed) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& s : data.source) {
    if (seen.insert(s.q).second) out.push_back(s.q);
  }
  for (const auto& t : data.target) {
    if (seen.insert(t.q).second) out.push_back(t.q);
  }
  for (auto& f : filler_text(filler_lines, seed)) out.push_back(std::move(f));
  return out;
}

double lm_cross_entropy(const StudentModel& model, const std::vector<std::string>& lines, std::size_t batch) {
  const std::vector<SequenceInput> seqs = lm_sequences(model, lines);
  if (seqs.empty()) throw DataError("lm_cross_entropy: no usable lines");
  double total = 0.0;
  std::size_t tokens = 0;
  for (std::size_t start = 0; start < seqs.size(); start += batch) {
    const std::vector<SequenceInput> part(seqs.begin() + start, seqs.begin() + std::min(seqs.size(), start + batch));
    ad::Tape tape;
    const auto bound = model.bind(tape, model::GroupMask::none());
    const PackedBatch pb = model::pack_sequences(model.config(), part, 0);
    const double ce = lm_loss(bound, pb, bound.forward_features(pb)).value().item();
    total += ce * static_cast<double>(pb.loss_rows.size());
    tokens += pb.loss_rows.size();
  }
  return total / static_cast<double>(tokens);
}

StageReport pretrain_backbone(StudentModel& model, const std::vector<std::string>& corpus, const RunConfig& cfg) {
  StageReport report;
  if (cfg.pretrain_steps == 0) return report;
  const std::vector<SequenceInput> seqs =
      packed_lm_sequences(model, corpus, derive_seed(cfg.seed, kPackStream));
  if (seqs.empty()) throw ConfigError("pretrain_backbone: empty corpus");

  model::GroupMask mask = model::GroupMask::none();
  mask.backbone = true;
  mask.lm_head = true;
  GroupRates rates{};
  rates[static_cast<std::size_t>(model::ParamGroup::kBackbone)] = cfg.pretrain_lr;
  rates[static_cast<std::size_t>(model::ParamGroup::kLmHead)] = cfg.pretrain_lr;

  Optimizer opt(cfg.pretrain_optimizer, model);
  EpochSampler sampler(seqs.size(), derive_seed(cfg.seed, kPretrainStream));
  for (std::size_t step = 0; step < cfg.pretrain_steps; ++step) {
    const auto batch = pick(seqs, sampler.next(cfg.pretrain_batch));
    ad::Tape tape;
    const auto bound = model.bind(tape, mask);
    const PackedBatch pb = model::pack_sequences(model.config(), batch, 0);
    ad::Var loss = lm_loss(bound, pb, bound.forward_features(pb));
    const double v = loss.value().item();
    require_finite(v, "pretraining loss", step + 1);
    opt.step(model, collect_gradients(bound, tape.backward(loss)), rates);
    report.losses.push_back(v);
    if ((step + 1) % 100 == 0) log_info("pretrain step " + std::to_string(step + 1) + " CE " + fmt_double(v));
  }
  return report;
}

// ---- Stage 1 ----

double completion_cross_entropy(const StudentModel& model, const std::vector<SequenceInput>& data,
                                std::size_t batch) {
  if (data.empty()) throw DataError("completion_cross_entropy: empty set");
  double total = 0.0;
  std::size_t tokens = 0;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    const std::vector<SequenceInput> part(data.begin() + start, data.begin() + std::min(data.size(), start + batch));
    ad::Tape tape;
    const auto bound = model.bind(tape, model::GroupMask::none());
    const PackedBatch pb = model::pack_sequences(model.config(), part);
    const double ce = lm_loss(bound, pb, bound.forward_features(pb)).value().item();
    total += ce * static_cast<double>(pb.loss_rows.size());
    tokens += pb.loss_rows.size();
  }
  return total / static_cast<double>(tokens);
}

StageReport prompt_learning_stage(StudentModel& model, const std::vector<teacher::ReasoningSample>& source,
                                  const RunConfig& cfg) {
  if (source.empty()) throw ConfigError("prompt_learning_stage: empty source set");
  StageReport report;
  if (model.config().prompt_len == 0) {
    log_warning("prompt_learning_stage: prompt_len is 0, nothing to train; stage skipped");
    return report;
  }
  const std::vector<SequenceInput> seqs = encode_sources(source);
  const GroupRates rates = cfg.prompt_stage_rates();
  Optimizer opt(cfg.optimizer, model);
  EpochSampler sampler(seqs.size(), derive_seed(cfg.seed, kPromptStream));
  for (std::size_t step = 0; step < cfg.prompt_steps; ++step) {
    const auto batch = pick(seqs, sampler.next(cfg.batch_source));
    ad::Tape tape;
    const auto bound = model.bind(tape, model::GroupMask::only(model::ParamGroup::kPrompt));
    const PackedBatch pb = model::pack_sequences(model.config(), batch);
    ad::Var loss = lm_loss(bound, pb, bound.forward_features(pb));
    const double v = loss.value().item();
    require_finite(v, "prompt-stage loss", step + 1);
    opt.step(model, collect_gradients(bound, tape.backward(loss)), rates);
    report.losses.push_back(v);
    if ((step + 1) % 100 == 0) log_info("prompt step " + std::to_string(step + 1) + " CE " + fmt_double(v));
  }
  return report;
}

// ---- Stage 2 ----

StepLosses adversarial_step(StudentModel& model, Optimizer& opt, const std::vector<SequenceInput>& source,
                            const std::vector<SequenceInput>& target, double lambda, const GroupRates& rates) {
  if (source.empty()) throw ContractError("adversarial_step: empty source batch");
  if (source.size() != target.size()) {
    throw ContractError("adversarial_step: domain labels not balanced (" + std::to_string(source.size()) +
                        " source vs " + std::to_string(target.size()) + " target)");
  }
  for (const auto& s : source) {
    if (s.completion.empty()) throw ContractError("adversarial_step: source record without completion");
  }
  for (const auto& t : target) {
    if (!t.completion.empty()) throw ContractError("adversarial_step: target record carries a completion");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ContractError("adversarial_step: lambda must be >= 0");

  const std::size_t b = source.size();
  const std::vector<std::size_t> src_labels(b, static_cast<std::size_t>(teacher::Domain::kSource));
  const std::vector<std::size_t> tgt_labels(b, static_cast<std::size_t>(teacher::Domain::kTarget));

  ad::Tape tape;
  const auto bound = model.bind(tape, model::GroupMask::all());
  const PackedBatch sb = model::pack_sequences(model.config(), source);
  const PackedBatch tb = model::pack_sequences(model.config(), target);
  ad::Var fs = bound.forward_features(sb);
  ad::Var ly = lm_loss(bound, sb, fs);
  ad::Var ft = bound.forward_features(tb);

  ad::Var lds, ldt, total;
  if (lambda > 0.0) {
    lds = ad::softmax_cross_entropy(bound.domain_logits(fs, sb.question_rows, true), src_labels, ones(b));
    ldt = ad::softmax_cross_entropy(bound.domain_logits(ft, tb.question_rows, true), tgt_labels, ones(b));
    total = ad::add(ly, ad::scale(ad::add(lds, ldt), lambda));
  } else {
    auto probe = [&](ad::Var f, const PackedBatch& pb) {
      return bound.domain_head(ad::detach(ad::mean_pool_rows(f, pb.question_rows)));
    };
    lds = ad::softmax_cross_entropy(probe(fs, sb), src_labels, ones(b));
    ldt = ad::softmax_cross_entropy(probe(ft, tb), tgt_labels, ones(b));
    total = ad::add(ly, ad::add(lds, ldt));
  }

  StepLosses out{ly.value().item(), lds.value().item(), ldt.value().item(), lambda};
  require_finite(total.value().item(), "adversarial objective", opt.steps() + 1);
  opt.step(model, collect_gradients(bound, tape.backward(total)), rates);
  return out;
}

double finetune_step(StudentModel& model, Optimizer& opt, const std::vector<SequenceInput>& source,
                     const GroupRates& rates) {
  if (source.empty()) throw ContractError("finetune_step: empty source batch");
  model::GroupMask mask = model::GroupMask::all();
  mask.domain = false;
  ad::Tape tape;
  const auto bound = model.bind(tape, mask);
  const PackedBatch sb = model::pack_sequences(model.config(), source);
  ad::Var ly = lm_loss(bound, sb, bound.forward_features(sb));
  const double v = ly.value().item();
  require_finite(v, "fine-tune loss", opt.steps() + 1);
  opt.step(model, collect_gradients(bound, tape.backward(ly)), rates);
  return v;
}

std::string metric_csv(const std::vector<MetricRow>& rows) {
  std::string out = "step,L_y,L_d_src,L_d_tgt,lambda,src_acc,tgt_acc\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + "," + fmt_double(r.l_y) + "," + fmt_double(r.l_d_src) + "," +
           fmt_double(r.l_d_tgt) + "," + fmt_double(r.lambda) + "," + (r.src_acc ? fmt_double(*r.src_acc) : "") +
           "," + (r.tgt_acc ? fmt_double(*r.tgt_acc) : "") + "\n";
  }
  return out;
}

void write_metric_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
  model::write_file_atomic(path, metric_csv(rows));
}

std::vector<MetricRow> read_metric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metric log " + path.string());
  std::string line;
  std::getline(in, line);
  if (trim(line) != "step,L_y,L_d_src,L_d_tgt,lambda,src_acc,tgt_acc") {
    throw DataError(path.string() + ": unexpected metric log header");
  }
  std::vector<MetricRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 7) throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 7 columns");
    try {
      MetricRow r;
      r.step = std::stoul(f[0]);
      r.l_y = std::stod(f[1]);
      r.l_d_src = std::stod(f[2]);
      r.l_d_tgt = std::stod(f[3]);
      r.lambda = std::stod(f[4]);
      if (!f[5].empty()) r.src_acc = std::stod(f[5]);
      if (!f[6].empty()) r.tgt_acc = std::stod(f[6]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

TrainData TrainData::from(const teacher::DomainDatasets& data, bool monitor_target) {
  TrainData d;
  d.source = encode_sources(data.source);
  d.target = encode_targets(data.target);
  d.source_val = data.source_eval;
  if (monitor_target) d.target_monitor = data.target_eval;
  return d;
}

namespace {

struct LoopState {
  std::size_t step = 0;
  std::size_t bad_evals = 0;
  bool early_stopped = false;
};

nlohmann::json row_json(const MetricRow& r) {
  return {r.step,
          r.l_y,
          r.l_d_src,
          r.l_d_tgt,
          r.lambda,
          r.src_acc ? nlohmann::json(*r.src_acc) : nlohmann::json(nullptr),
          r.tgt_acc ? nlohmann::json(*r.tgt_acc) : nlohmann::json(nullptr)};
}

MetricRow row_from(const nlohmann::json& j) {
  MetricRow r;
  r.step = j.at(0).get<std::size_t>();
  r.l_y = j.at(1).get<double>();
  r.l_d_src = j.at(2).get<double>();
  r.l_d_tgt = j.at(3).get<double>();
  r.lambda = j.at(4).get<double>();
  if (!j.at(5).is_null()) r.src_acc = j.at(5).get<double>();
  if (!j.at(6).is_null()) r.tgt_acc = j.at(6).get<double>();
  return r;
}

void save_state(const std::filesystem::path& path, const RunConfig& cfg, const StudentModel& model,
                const Optimizer& opt, const EpochSampler& src, const EpochSampler& tgt, const LoopState& loop,
                const AdversarialResult& res) {
  model::ArrayFile file = model::model_to_arrays(model);
  file.meta["format"] = "prada-train-state";
  file.meta["config"] = to_json(cfg);
  file.meta["step"] = loop.step;
  file.meta["bad_evals"] = loop.bad_evals;
  file.meta["early_stopped"] = loop.early_stopped;
  file.meta["best_source_acc"] = res.best_source_acc;
  file.meta["best_step"] = res.best_step;
  file.meta["source_sampler"] = src.state();
  file.meta["target_sampler"] = tgt.state();
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : res.log) rows.push_back(row_json(r));
  file.meta["log"] = rows;
  for (const auto& p : res.model.parameters()) file.arrays.push_back({"best:" + p.name, "best", p.value});
  opt.save(file);
  model::write_array_file(path, file);
}

}  // namespace

AdversarialResult train_adversarial(StudentModel model, const TrainData& data, const RunConfig& cfg,
                                    const AdversarialOptions& options) {
  cfg.validate();
  if (data.source.empty()) throw ConfigError("train_adversarial: empty source set");
  if (data.target.empty()) throw ConfigError("train_adversarial: empty target set");
  if (data.source_val.empty()) throw ConfigError("train_adversarial: empty source validation set");
  if (!(model.config() == cfg.model)) {
    throw ConfigError("train_adversarial: model does not match the run config's model section");
  }

  Optimizer opt(cfg.optimizer, model);
  EpochSampler src_sampler(data.source.size(), derive_seed(cfg.seed, kAdversarialStream, 0));
  EpochSampler tgt_sampler(data.target.size(), derive_seed(cfg.seed, kAdversarialStream, 1));
  AdversarialResult res;
  res.model = model;
  LoopState loop;

  if (options.resume) {
    const model::ArrayFile file = model::read_array_file(options.state_path);
    if (file.meta.value("format", "") != "prada-train-state") {
      throw DataError(options.state_path.string() + " is not a training state file");
    }
    if (file.meta.at("config") != to_json(cfg)) {
      throw ConfigError("resume: run config differs from the one recorded in " + options.state_path.string());
    }
    model = model::model_from_arrays(file, &cfg.model);
    model::ArrayFile best;
    best.meta["model_config"] = file.meta.at("model_config");
    for (const auto& a : file.arrays) {
      if (a.group == "best") best.arrays.push_back({a.name.substr(5), a.group, a.value});
    }
    res.model = model::model_from_arrays(best, &cfg.model);
    opt.load(file);
    src_sampler.restore(file.meta.at("source_sampler"));
    tgt_sampler.restore(file.meta.at("target_sampler"));
    loop.step = file.meta.at("step").get<std::size_t>();
    loop.bad_evals = file.meta.at("bad_evals").get<std::size_t>();
    loop.early_stopped = file.meta.at("early_stopped").get<bool>();
    res.best_source_acc = file.meta.at("best_source_acc").get<double>();
    res.best_step = file.meta.at("best_step").get<std::size_t>();
    for (const auto& r : file.meta.at("log")) res.log.push_back(row_from(r));
    log_info("resumed adversarial training at step " + std::to_string(loop.step));
  }

  const std::vector<teacher::EvalRecord> val(
      data.source_val.begin(),
      data.source_val.begin() + std::min(cfg.eval_samples == 0 ? data.source_val.size() : cfg.eval_samples,
                                         data.source_val.size()));
  const GroupRates rates = cfg.finetune_rates();
  const bool stateful = !options.state_path.empty();

  while (loop.step < cfg.max_steps && !loop.early_stopped) {
    const double p = static_cast<double>(loop.step) / static_cast<double>(cfg.max_steps);
    const double lam = lambda_at(cfg.lambda, p);
    const auto sbatch = pick(data.source, src_sampler.next(cfg.batch_source));
    const auto tbatch = pick(data.target, tgt_sampler.next(cfg.batch_target));
    const StepLosses l = adversarial_step(model, opt, sbatch, tbatch, lam, rates);
    ++loop.step;

    MetricRow row{loop.step, l.l_y, l.l_d_src, l.l_d_tgt, l.lambda, std::nullopt, std::nullopt};
    if (loop.step % cfg.eval_every == 0 || loop.step == cfg.max_steps) {
      const double acc = eval::accuracy(model, val, "source_val", cfg.max_new_tokens, options.eval_workers).accuracy;
      row.src_acc = acc;
      if (!data.target_monitor.empty()) {
        row.tgt_acc =
            eval::accuracy(model, data.target_monitor, "target_monitor", cfg.max_new_tokens, options.eval_workers)
                .accuracy;
      }
      if (acc > res.best_source_acc) {
        res.best_source_acc = acc;
        res.best_step = loop.step;
        res.model = model;
        loop.bad_evals = 0;
      } else if (++loop.bad_evals >= cfg.patience) {
        loop.early_stopped = true;
      }
      log_info("step " + std::to_string(loop.step) + " L_y " + fmt_double(l.l_y) + " src_acc " + fmt_double(acc) +
               (row.tgt_acc ? " tgt_acc " + fmt_double(*row.tgt_acc) : std::string()));
    }
    res.log.push_back(row);

    const bool stop_now = options.stop_after != 0 && loop.step == options.stop_after;
    if (stateful && (loop.step % cfg.checkpoint_every == 0 || stop_now || loop.early_stopped ||
                     loop.step == cfg.max_steps)) {
      save_state(options.state_path, cfg, model, opt, src_sampler, tgt_sampler, loop, res);
    }
    if (stop_now && loop.step < cfg.max_steps && !loop.early_stopped) {
      res.interrupted = true;
      break;
    }
  }
  res.steps_run = loop.step;
  res.early_stopped = loop.early_stopped;
  if (res.best_source_acc < 0.0) res.model = model;
  return res;
}

}  // namespace prada::training
