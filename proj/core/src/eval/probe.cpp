#include "prada/eval/probe.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "prada/autodiff/ops.hpp"
#include "prada/training/trainer.hpp"
#include "prada/util/error.hpp"
#include "prada/util/rng.hpp"

namespace prada::eval {

ad::Tensor pooled_features(const model::StudentModel& model, const std::vector<std::string>& questions,
                           std::size_t batch) {
  if (batch == 0) throw ContractError("pooled_features: batch must be positive");
  const std::size_t h = model.config().hidden;
  ad::Tensor out(ad::Shape{questions.size(), h});
  for (std::size_t start = 0; start < questions.size(); start += batch) {
    const std::size_t end = std::min(questions.size(), start + batch);
    std::vector<model::SequenceInput> seqs;
    for (std::size_t i = start; i < end; ++i) seqs.push_back(training::encode_target(questions[i]));
    ad::Tape tape;
    const auto bound = model.bind(tape, model::GroupMask::none());
    const auto pb = model::pack_sequences(model.config(), seqs);
    const ad::Tensor pooled = ad::mean_pool_rows(bound.forward_features(pb), pb.question_rows).value();
    for (std::size_t i = start; i < end; ++i) {
      for (std::size_t k = 0; k < h; ++k) out.at(i, k) = pooled.at(i - start, k);
    }
  }
  return out;
}

namespace {

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

ProbeResult probe_features(const ad::Tensor& features, const std::vector<int>& labels, const ProbeOptions& options) {
  if (features.ndim() != 2 || features.rows() != labels.size()) {
    throw ContractError("probe_features: one label per feature row required");
  }
  if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0)) {
    throw ConfigError("probe: train_fraction must lie in (0, 1)");
  }
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("probe: labels must be 0 or 1");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  if (by_class[0].size() != by_class[1].size()) {
    throw DataError("probe: class imbalance (" + std::to_string(by_class[0].size()) + " vs " +
                    std::to_string(by_class[1].size()) + " samples)");
  }
  const std::size_t per_class = by_class[0].size();
  const std::size_t train_per_class =
      static_cast<std::size_t>(std::llround(options.train_fraction * static_cast<double>(per_class)));
  if (train_per_class == 0 || train_per_class == per_class) {
    throw DataError("probe: too few samples for a train/test split");
  }

  Rng rng(derive_seed(options.seed, 0x70726f62));
  std::vector<std::size_t> train, test;
  for (auto& idx : by_class) {
    rng.shuffle(idx);
    train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train_per_class));
    test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(train_per_class), idx.end());
  }

  const std::size_t d = features.cols();
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (std::size_t i : train) {
    for (std::size_t k = 0; k < d; ++k) mu[k] += features.at(i, k);
  }
  for (double& m : mu) m /= static_cast<double>(train.size());
  for (std::size_t i : train) {
    for (std::size_t k = 0; k < d; ++k) sd[k] += (features.at(i, k) - mu[k]) * (features.at(i, k) - mu[k]);
  }
  for (double& s : sd) s = std::sqrt(s / static_cast<double>(train.size())) + 1e-8;
  auto z = [&](std::size_t i, std::size_t k) { return (features.at(i, k) - mu[k]) / sd[k]; };

  std::vector<double> w(d, 0.0), grad(d);
  double b = 0.0;
  const double n = static_cast<double>(train.size());
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i : train) {
      double logit = b;
      for (std::size_t k = 0; k < d; ++k) logit += w[k] * z(i, k);
      const double err = sigmoid(logit) - static_cast<double>(labels[i]);
      for (std::size_t k = 0; k < d; ++k) grad[k] += err * z(i, k);
      gb += err;
    }
    for (std::size_t k = 0; k < d; ++k) w[k] -= options.learning_rate * (grad[k] / n + options.l2 * w[k]);
    b -= options.learning_rate * gb / n;
  }

  auto score = [&](const std::vector<std::size_t>& rows) {
    std::size_t hit = 0;
    for (std::size_t i : rows) {
      double logit = b;
      for (std::size_t k = 0; k < d; ++k) logit += w[k] * z(i, k);
      if ((logit > 0.0 ? 1 : 0) == labels[i]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(rows.size());
  };
  return {score(test), score(train), train.size(), test.size()};
}

ProbeResult domain_probe(const model::StudentModel& model, const std::vector<std::string>& source_questions,
                         const std::vector<std::string>& target_questions, const ProbeOptions& options) {
  if (source_questions.size() != target_questions.size()) {
    throw DataError("domain_probe: class imbalance (" + std::to_string(source_questions.size()) + " source vs " +
                    std::to_string(target_questions.size()) + " target questions)");
  }
  std::vector<std::string> all = source_questions;
  all.insert(all.end(), target_questions.begin(), target_questions.end());
  std::vector<int> labels(source_questions.size(), 0);
  labels.resize(all.size(), 1);
  return probe_features(pooled_features(model, all), labels, options);
}

}  // namespace prada::eval
