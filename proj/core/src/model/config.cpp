#include "prada/model/config.hpp"

#include <string>

#include "prada/util/error.hpp"

namespace prada::model {

void ModelConfig::validate() const {
  if (vocab_size == 0 || hidden == 0 || heads == 0 || max_seq == 0 || mlp_ratio == 0) {
    throw ConfigError("model config: vocab_size, hidden, heads, max_seq and mlp_ratio must be positive");
  }
  if (hidden % heads != 0) {
    throw ConfigError("model config: hidden " + std::to_string(hidden) + " not divisible by heads " +
                      std::to_string(heads));
  }
  if (hidden < 2) throw ConfigError("model config: hidden must be at least 2 for the domain classifier");
  if (domain_classes < 2) throw ConfigError("model config: domain_classes must be at least 2");
  if (prompt_len >= max_seq) throw ConfigError("model config: prompt_len leaves no room in max_seq");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size}, {"hidden", c.hidden},         {"layers", c.layers},
                     {"heads", c.heads},           {"max_seq", c.max_seq},       {"prompt_len", c.prompt_len},
                     {"domain_classes", c.domain_classes}, {"mlp_ratio", c.mlp_ratio}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.hidden = j.value("hidden", d.hidden);
  c.layers = j.value("layers", d.layers);
  c.heads = j.value("heads", d.heads);
  c.max_seq = j.value("max_seq", d.max_seq);
  c.prompt_len = j.value("prompt_len", d.prompt_len);
  c.domain_classes = j.value("domain_classes", d.domain_classes);
  c.mlp_ratio = j.value("mlp_ratio", d.mlp_ratio);
}

}  // namespace prada::model
