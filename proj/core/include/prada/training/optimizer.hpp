#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "prada/autodiff/tape.hpp"
#include "prada/model/checkpoint.hpp"
#include "prada/model/student.hpp"
#include "prada/training/config.hpp"

namespace prada::training {

// Gradient per model parameter, index-aligned with StudentModel::parameters();
// empty when the parameter received none.
using ParamGrads = std::vector<std::optional<ad::Tensor>>;

ParamGrads collect_gradients(const model::BoundModel& bound, const ad::GradientMap& grads);

// First-order update with a learning rate per parameter group. Plain SGD
// applies p -= lr * g exactly.
class Optimizer {
 public:
  Optimizer(const OptimizerSettings& settings, const model::StudentModel& model);

  void step(model::StudentModel& model, const ParamGrads& grads, const GroupRates& rates);

  const OptimizerSettings& settings() const { return settings_; }
  std::uint64_t steps() const { return t_; }

  // Moment buffers as named arrays ("<slot>:<param>") plus the step count.
  void save(model::ArrayFile& file) const;
  void load(const model::ArrayFile& file);

 private:
  OptimizerSettings settings_;
  std::uint64_t t_ = 0;
  std::vector<ad::Tensor> m_;
  std::vector<ad::Tensor> v_;
};

}  // namespace prada::training
