#pragma once

#include <cstddef>
#include <vector>

#include "prada/model/student.hpp"

namespace prada::model {

// Tape-free forward for one sequence that caches per-layer keys and values, so
// appending a token costs one position's worth of work. Computes the same
// function as BoundModel::forward_features + lm_logits.
class InferenceSession {
 public:
  explicit InferenceSession(const StudentModel& model);

  // Pushes the prompt slots followed by `tokens`; returns next-token logits.
  std::vector<double> start(const std::vector<std::size_t>& tokens);
  // Appends one token; returns next-token logits.
  std::vector<double> append(std::size_t token);

  std::size_t length() const noexcept { return length_; }
  // Residual-stream output of the last pushed position.
  const std::vector<double>& last_features() const noexcept { return last_features_; }

 private:
  void push(const std::vector<double>& embedded);
  std::vector<double> logits() const;

  const StudentModel* model_;
  const ModelConfig* config_;
  std::size_t length_ = 0;
  std::vector<std::vector<double>> keys_;    // per layer, [length x H]
  std::vector<std::vector<double>> values_;  // per layer, [length x H]
  std::vector<double> last_features_;
  std::vector<const ad::Tensor*> layer_params_;  // 12 per layer
  const ad::Tensor* tok_emb_;
  const ad::Tensor* pos_emb_;
  std::vector<const ad::Tensor*> banks_;
};

}  // namespace prada::model
