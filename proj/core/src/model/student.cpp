#include "prada/model/student.hpp"

#include <cmath>
#include <cstring>

#include "prada/util/rng.hpp"

namespace prada::model {

using ad::Shape;
using ad::Tensor;
using ad::Var;

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kBackbone: return "backbone";
    case ParamGroup::kLmHead: return "lm_head";
    case ParamGroup::kPrompt: return "prompt";
    case ParamGroup::kDomain: return "domain";
  }
  return "?";
}

ParamGroup parse_group(const std::string& name) {
  for (std::size_t i = 0; i < kNumGroups; ++i) {
    if (name == group_name(static_cast<ParamGroup>(i))) return static_cast<ParamGroup>(i);
  }
  throw DataError("unknown parameter group '" + name + "'");
}

GroupMask GroupMask::only(ParamGroup g) {
  GroupMask m = none();
  switch (g) {
    case ParamGroup::kBackbone: m.backbone = true; break;
    case ParamGroup::kLmHead: m.lm_head = true; break;
    case ParamGroup::kPrompt: m.prompt = true; break;
    case ParamGroup::kDomain: m.domain = true; break;
  }
  return m;
}

bool GroupMask::contains(ParamGroup g) const {
  switch (g) {
    case ParamGroup::kBackbone: return backbone;
    case ParamGroup::kLmHead: return lm_head;
    case ParamGroup::kPrompt: return prompt;
    case ParamGroup::kDomain: return domain;
  }
  return false;
}

PackedBatch pack_sequences(const ModelConfig& config, const std::vector<SequenceInput>& sequences) {
  return pack_sequences(config, sequences, config.prompt_len);
}

PackedBatch pack_sequences(const ModelConfig& config, const std::vector<SequenceInput>& sequences,
                           std::size_t prompt_slots) {
  if (prompt_slots != 0 && prompt_slots != config.prompt_len) {
    throw ContractError("pack_sequences: prompt slots must be 0 or prompt_len");
  }
  PackedBatch batch;
  const std::size_t kp = prompt_slots;
  for (const SequenceInput& seq : sequences) {
    const std::size_t len = kp + seq.question.size() + seq.completion.size();
    if (len > config.max_seq) {
      throw LengthError("sequence of " + std::to_string(len) + " positions (" + std::to_string(kp) +
                        " prompt slots) exceeds max_seq " + std::to_string(config.max_seq));
    }
    if (seq.question.empty()) throw DataError("pack_sequences: empty question");
    const std::size_t offset = batch.token_ids.size();
    batch.segments.push_back({offset, len});
    for (std::size_t j = 0; j < kp; ++j) {
      batch.prompt_placements.emplace_back(offset + j, j);
      batch.token_ids.push_back(0);
    }
    std::vector<std::size_t> qrows;
    for (std::size_t id : seq.question) {
      qrows.push_back(batch.token_ids.size());
      batch.token_ids.push_back(id);
    }
    for (std::size_t id : seq.completion) {
      batch.loss_rows.push_back(batch.token_ids.size() - 1);
      batch.loss_targets.push_back(id);
      batch.token_ids.push_back(id);
    }
    for (std::size_t p = 0; p < len; ++p) batch.positions.push_back(p);
    batch.question_rows.push_back(std::move(qrows));
  }
  return batch;
}

ParameterReport expected_parameter_counts(const ModelConfig& c) {
  ParameterReport r;
  const std::size_t h = c.hidden, f = c.mlp_ratio * c.hidden;
  r.token_embedding = c.vocab_size * h;
  const std::size_t per_layer = 2 * h + (h * 3 * h + 3 * h) + (h * h + h) + 2 * h + (h * f + f) + (f * h + h);
  r.backbone_rest = c.max_seq * h + c.layers * per_layer;
  r.lm_head = 2 * h + h * c.vocab_size + c.vocab_size;
  r.prompt = c.prompt_banks() * c.prompt_len * h;
  r.domain = h * c.domain_hidden() + c.domain_hidden() + c.domain_hidden() * c.domain_classes + c.domain_classes;
  return r;
}

std::string StudentModel::layer_param(std::size_t layer, const char* field) {
  return "layer" + std::to_string(layer) + "." + field;
}

std::string StudentModel::prompt_bank(std::size_t layer) { return "prompt" + std::to_string(layer); }

void StudentModel::add(std::string name, ParamGroup group, Shape shape) {
  params_.push_back(Parameter{std::move(name), group, Tensor(std::move(shape))});
}

namespace {

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool ends_with(const std::string& s, const char* suffix) {
  const std::size_t n = std::strlen(suffix);
  return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
}

// Each parameter draws from its own stream keyed by (seed, name), so any
// subset can be re-drawn without disturbing the others.
void init_parameter(Parameter& p, const ModelConfig& c, std::uint64_t seed) {
  Rng rng(derive_seed(seed, fnv1a(p.name.data(), p.name.size())));
  const std::string& n = p.name;
  double stddev = 0.02;
  double constant = 0.0;
  bool random = true;
  if (ends_with(n, ".g")) {
    random = false;
    constant = 1.0;
  } else if (ends_with(n, ".b") || ends_with(n, "b_qkv") || ends_with(n, "b_out") || ends_with(n, "b_in") ||
             n == "domain.b1" || n == "domain.b2" || n == "lm.b") {
    random = false;
  } else if (n == "domain.w1" || n == "domain.w2") {
    stddev = 1.0 / std::sqrt(static_cast<double>(p.value.rows()));
  } else if (ends_with(n, "attn.w_out") || ends_with(n, "mlp.w_out")) {
    stddev = 0.02 / std::sqrt(2.0 * static_cast<double>(std::max<std::size_t>(c.layers, 1)));
  }
  for (double& v : p.value.storage()) v = random ? stddev * rng.normal() : constant;
}

}  // namespace

StudentModel StudentModel::initialize(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  StudentModel m;
  m.config_ = c;
  const std::size_t h = c.hidden, f = c.mlp_ratio * c.hidden;
  m.add("tok_emb", ParamGroup::kBackbone, {c.vocab_size, h});
  m.add("pos_emb", ParamGroup::kBackbone, {c.max_seq, h});
  for (std::size_t l = 0; l < c.layers; ++l) {
    m.add(layer_param(l, "ln1.g"), ParamGroup::kBackbone, {h});
    m.add(layer_param(l, "ln1.b"), ParamGroup::kBackbone, {h});
    m.add(layer_param(l, "attn.w_qkv"), ParamGroup::kBackbone, {h, 3 * h});
    m.add(layer_param(l, "attn.b_qkv"), ParamGroup::kBackbone, {3 * h});
    m.add(layer_param(l, "attn.w_out"), ParamGroup::kBackbone, {h, h});
    m.add(layer_param(l, "attn.b_out"), ParamGroup::kBackbone, {h});
    m.add(layer_param(l, "ln2.g"), ParamGroup::kBackbone, {h});
    m.add(layer_param(l, "ln2.b"), ParamGroup::kBackbone, {h});
    m.add(layer_param(l, "mlp.w_in"), ParamGroup::kBackbone, {h, f});
    m.add(layer_param(l, "mlp.b_in"), ParamGroup::kBackbone, {f});
    m.add(layer_param(l, "mlp.w_out"), ParamGroup::kBackbone, {f, h});
    m.add(layer_param(l, "mlp.b_out"), ParamGroup::kBackbone, {h});
  }
  m.add("lm.ln.g", ParamGroup::kLmHead, {h});
  m.add("lm.ln.b", ParamGroup::kLmHead, {h});
  m.add("lm.w", ParamGroup::kLmHead, {h, c.vocab_size});
  m.add("lm.b", ParamGroup::kLmHead, {c.vocab_size});
  if (c.prompt_len > 0) {
    for (std::size_t l = 0; l < c.prompt_banks(); ++l) m.add(prompt_bank(l), ParamGroup::kPrompt, {c.prompt_len, h});
  }
  m.add("domain.w1", ParamGroup::kDomain, {h, c.domain_hidden()});
  m.add("domain.b1", ParamGroup::kDomain, {c.domain_hidden()});
  m.add("domain.w2", ParamGroup::kDomain, {c.domain_hidden(), c.domain_classes});
  m.add("domain.b2", ParamGroup::kDomain, {c.domain_classes});
  for (Parameter& p : m.params_) init_parameter(p, c, seed);
  return m;
}

void StudentModel::reinitialize_adapters(std::uint64_t seed) {
  for (Parameter& p : params_) {
    if (p.group == ParamGroup::kPrompt || p.group == ParamGroup::kDomain) init_parameter(p, config_, seed);
  }
}

std::size_t StudentModel::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw DataError("model has no parameter named '" + name + "'");
}

BoundModel StudentModel::bind(ad::Tape& tape, const GroupMask& trainable) const {
  BoundModel b;
  b.model_ = this;
  b.tape_ = &tape;
  b.vars_.reserve(params_.size());
  for (const Parameter& p : params_) b.vars_.push_back(tape.leaf(p.value, trainable.contains(p.group)));
  return b;
}

ParameterReport StudentModel::parameter_counts() const {
  ParameterReport r;
  for (const Parameter& p : params_) {
    const std::size_t n = p.value.size();
    switch (p.group) {
      case ParamGroup::kBackbone: (p.name == "tok_emb" ? r.token_embedding : r.backbone_rest) += n; break;
      case ParamGroup::kLmHead: r.lm_head += n; break;
      case ParamGroup::kPrompt: r.prompt += n; break;
      case ParamGroup::kDomain: r.domain += n; break;
    }
  }
  return r;
}

std::size_t StudentModel::group_size(ParamGroup g) const {
  std::size_t n = 0;
  for (const Parameter& p : params_) {
    if (p.group == g) n += p.value.size();
  }
  return n;
}

std::uint64_t StudentModel::group_hash(ParamGroup g) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Parameter& p : params_) {
    if (p.group != g) continue;
    h = fnv1a(p.name.data(), p.name.size(), h);
    h = fnv1a(p.value.raw(), p.value.size() * sizeof(double), h);
  }
  return h;
}

Var BoundModel::param(const std::string& name) const { return vars_[model_->index_of(name)]; }

Var BoundModel::attach_prompts(const PackedBatch& batch) const {
  Var embedded = ad::embedding_gather(param("tok_emb"), batch.token_ids);
  if (batch.prompt_placements.empty()) return embedded;
  return ad::overwrite_rows(embedded, param(StudentModel::prompt_bank(0)), batch.prompt_placements);
}

Var BoundModel::forward_features(const PackedBatch& batch, Var embedded) const {
  const ModelConfig& c = model_->config();
  Var x = ad::add(embedded, ad::embedding_gather(param("pos_emb"), batch.positions));
  for (std::size_t l = 0; l < c.layers; ++l) {
    if (l > 0 && !batch.prompt_placements.empty()) {
      x = ad::overwrite_rows(x, param(StudentModel::prompt_bank(l)), batch.prompt_placements);
    }
    auto p = [&](const char* field) { return param(StudentModel::layer_param(l, field)); };
    Var h = ad::layer_norm(x, p("ln1.g"), p("ln1.b"));
    Var qkv = ad::add_bias(ad::matmul(h, p("attn.w_qkv")), p("attn.b_qkv"));
    Var att = ad::causal_attention(qkv, batch.segments, c.heads);
    x = ad::add(x, ad::add_bias(ad::matmul(att, p("attn.w_out")), p("attn.b_out")));
    Var h2 = ad::layer_norm(x, p("ln2.g"), p("ln2.b"));
    Var mid = ad::gelu(ad::add_bias(ad::matmul(h2, p("mlp.w_in")), p("mlp.b_in")));
    x = ad::add(x, ad::add_bias(ad::matmul(mid, p("mlp.w_out")), p("mlp.b_out")));
  }
  return x;
}

Var BoundModel::lm_logits(Var features) const {
  Var h = ad::layer_norm(features, param("lm.ln.g"), param("lm.ln.b"));
  return ad::add_bias(ad::matmul(h, param("lm.w")), param("lm.b"));
}

Var BoundModel::lm_logits(Var features, const std::vector<std::size_t>& rows) const {
  return lm_logits(ad::gather_rows(features, rows));
}

Var BoundModel::domain_head(Var pooled) const {
  Var h = ad::tanh(ad::add_bias(ad::matmul(pooled, param("domain.w1")), param("domain.b1")));
  return ad::add_bias(ad::matmul(h, param("domain.w2")), param("domain.b2"));
}

Var BoundModel::domain_logits(Var features, const std::vector<std::vector<std::size_t>>& question_rows,
                              bool reverse_gradient) const {
  for (const auto& rows : question_rows) {
    if (rows.empty()) throw DataError("domain_logits: degenerate batch, empty question mask");
  }
  Var pooled = ad::mean_pool_rows(features, question_rows);
  if (reverse_gradient) pooled = ad::grad_reverse(pooled);
  return domain_head(pooled);
}

}  // namespace prada::model
