#pragma once

#include <cstddef>

#include <nlohmann/json.hpp>

#include "prada/model/tokenizer.hpp"

namespace prada::model {

struct ModelConfig {
  std::size_t vocab_size = CharTokenizer::kVocabSize;
  std::size_t hidden = 32;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t max_seq = 320;
  std::size_t prompt_len = 4;  // prompt slots per layer
  std::size_t domain_classes = 2;
  std::size_t mlp_ratio = 4;

  // Throws ConfigError on a violated invariant.
  void validate() const;

  std::size_t head_dim() const { return hidden / heads; }
  std::size_t prompt_banks() const { return layers == 0 ? 1 : layers; }
  std::size_t domain_hidden() const { return hidden / 2; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace prada::model
