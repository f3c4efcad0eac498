#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "prada/autodiff/tensor.hpp"
#include "prada/model/student.hpp"

namespace prada::eval {

// Mean of the final-layer features over each question's rows (the pooling
// the domain classifier sees), one row per question. Questions are formatted
// ("... ###").
ad::Tensor pooled_features(const model::StudentModel& model, const std::vector<std::string>& questions,
                           std::size_t batch = 32);

struct ProbeOptions {
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  std::size_t epochs = 300;  // full-batch gradient steps
  double learning_rate = 0.5;
  double l2 = 1e-4;
};

struct ProbeResult {
  double accuracy = 0.0;  // held-out
  double train_accuracy = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

// Fresh logistic-regression classifier on standardized features, trained on
// a stratified split and scored on the held-out part. labels are 0 or 1 and
// must be balanced, else DataError.
ProbeResult probe_features(const ad::Tensor& features, const std::vector<int>& labels, const ProbeOptions& options = {});

// Domain separability of a frozen model's pooled features: source questions
// get label 0, target questions label 1.
ProbeResult domain_probe(const model::StudentModel& model, const std::vector<std::string>& source_questions,
                         const std::vector<std::string>& target_questions, const ProbeOptions& options = {});

}  // namespace prada::eval
