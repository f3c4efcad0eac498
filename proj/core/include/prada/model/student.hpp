#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "prada/autodiff/ops.hpp"
#include "prada/model/config.hpp"
#include "prada/util/error.hpp"

namespace prada::model {

// Disjoint trainable groups: backbone (G_F, incl. token embedding), language
// modeling head (G_Y), prompt banks, and the domain classifier (G_D).
enum class ParamGroup { kBackbone = 0, kLmHead = 1, kPrompt = 2, kDomain = 3 };
inline constexpr std::size_t kNumGroups = 4;

const char* group_name(ParamGroup g);
ParamGroup parse_group(const std::string& name);

struct Parameter {
  std::string name;
  ParamGroup group;
  ad::Tensor value;
};

// Which groups receive gradient on a given tape.
struct GroupMask {
  bool backbone = true;
  bool lm_head = true;
  bool prompt = true;
  bool domain = true;

  static GroupMask all() { return {}; }
  static GroupMask none() { return {false, false, false, false}; }
  static GroupMask only(ParamGroup g);
  bool contains(ParamGroup g) const;
};

// One training or inference sequence, as token ids. Target-domain records
// have an empty completion.
struct SequenceInput {
  std::vector<std::size_t> question;
  std::vector<std::size_t> completion;
};

// Several sequences packed into one [T x H] activation. Each segment starts
// with prompt_len prompt slots, followed by question then completion tokens.
struct PackedBatch {
  std::vector<ad::Segment> segments;
  std::vector<std::size_t> token_ids;  // prompt slots hold id 0 (overwritten)
  std::vector<std::size_t> positions;
  std::vector<std::pair<std::size_t, std::size_t>> prompt_placements;  // (row, bank row)
  std::vector<std::vector<std::size_t>> question_rows;                // per sequence
  std::vector<std::size_t> loss_rows;                                 // rows predicting a completion token
  std::vector<std::size_t> loss_targets;

  std::size_t total_rows() const { return token_ids.size(); }
};

// Thrown when a sequence does not fit max_seq.
class LengthError : public DataError {
 public:
  explicit LengthError(const std::string& what) : DataError(what) {}
};

PackedBatch pack_sequences(const ModelConfig& config, const std::vector<SequenceInput>& sequences);
// prompt_slots = 0 packs plain text with no prompt prefix (LM pretraining).
PackedBatch pack_sequences(const ModelConfig& config, const std::vector<SequenceInput>& sequences,
                           std::size_t prompt_slots);

struct ParameterReport {
  std::size_t token_embedding = 0;
  std::size_t backbone_rest = 0;  // positions, blocks
  std::size_t lm_head = 0;
  std::size_t prompt = 0;
  std::size_t domain = 0;
  std::size_t total() const { return token_embedding + backbone_rest + lm_head + prompt + domain; }
};

// Closed-form parameter counts implied by a config.
ParameterReport expected_parameter_counts(const ModelConfig& config);

class StudentModel;

// Parameters placed on a tape for one forward/backward pass.
class BoundModel {
 public:
  const StudentModel& model() const { return *model_; }
  ad::Tape& tape() const { return *tape_; }
  ad::Var param(std::size_t index) const { return vars_[index]; }
  ad::Var param(const std::string& name) const;

  // Layer-0 input: token embeddings with the first prompt bank written over
  // each segment's prompt slots. No positional term.
  ad::Var attach_prompts(const PackedBatch& batch) const;

  // Causal transformer stack over packed sequences; deeper prompt banks
  // overwrite the prompt slots before each layer >= 1.
  ad::Var forward_features(const PackedBatch& batch, ad::Var embedded) const;
  ad::Var forward_features(const PackedBatch& batch) const { return forward_features(batch, attach_prompts(batch)); }

  // G_Y: final layer norm plus projection to vocabulary, on selected rows.
  ad::Var lm_logits(ad::Var features, const std::vector<std::size_t>& rows) const;
  ad::Var lm_logits(ad::Var features) const;

  // G_D: mean over each sequence's question rows, then (optionally) gradient
  // reversal, then a tanh perceptron. One row of logits per sequence.
  ad::Var domain_logits(ad::Var features, const std::vector<std::vector<std::size_t>>& question_rows,
                        bool reverse_gradient = true) const;
  // The domain head applied to already pooled features [B x H].
  ad::Var domain_head(ad::Var pooled) const;

 private:
  friend class StudentModel;
  const StudentModel* model_ = nullptr;
  ad::Tape* tape_ = nullptr;
  std::vector<ad::Var> vars_;
};

class StudentModel {
 public:
  StudentModel() = default;

  static StudentModel initialize(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::size_t index_of(const std::string& name) const;
  Parameter& parameter(const std::string& name) { return params_[index_of(name)]; }
  const Parameter& parameter(const std::string& name) const { return params_[index_of(name)]; }

  // Re-draws the prompt banks and the domain classifier from a seed, leaving
  // backbone and LM head untouched.
  void reinitialize_adapters(std::uint64_t seed);

  BoundModel bind(ad::Tape& tape, const GroupMask& trainable) const;

  ParameterReport parameter_counts() const;
  std::size_t group_size(ParamGroup g) const;

  // FNV-1a over the raw bytes of every parameter in a group.
  std::uint64_t group_hash(ParamGroup g) const;

  static std::string layer_param(std::size_t layer, const char* field);
  static std::string prompt_bank(std::size_t layer);

 private:
  void add(std::string name, ParamGroup group, ad::Shape shape);

  ModelConfig config_;
  std::vector<Parameter> params_;
};

}  // namespace prada::model
