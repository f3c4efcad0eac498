#include "prada/training/optimizer.hpp"

#include <array>
#include <cmath>

#include "prada/util/error.hpp"

namespace prada::training {

ParamGrads collect_gradients(const model::BoundModel& bound, const ad::GradientMap& grads) {
  const std::size_t n = bound.model().parameters().size();
  ParamGrads out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto it = grads.find(bound.param(i).id());
    if (it != grads.end()) out[i] = it->second;
  }
  return out;
}

Optimizer::Optimizer(const OptimizerSettings& settings, const model::StudentModel& model) : settings_(settings) {
  settings_.validate();
  if (settings_.kind != OptimizerKind::kSgd) {
    for (const auto& p : model.parameters()) {
      m_.emplace_back(p.value.shape());
      if (settings_.kind == OptimizerKind::kAdam) v_.emplace_back(p.value.shape());
    }
  }
}

void Optimizer::step(model::StudentModel& model, const ParamGrads& grads, const GroupRates& rates) {
  auto& params = model.parameters();
  if (grads.size() != params.size()) throw ContractError("Optimizer::step: gradient list does not match model");
  ++t_;

  // Clipping is per group, so a group's update never depends on another
  // group's gradient.
  std::array<double, model::kNumGroups> clip{};
  clip.fill(1.0);
  if (settings_.grad_clip > 0.0) {
    std::array<double, model::kNumGroups> sq{};
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!grads[i]) continue;
      double& acc = sq[static_cast<std::size_t>(params[i].group)];
      for (double x : grads[i]->data()) acc += x * x;
    }
    for (std::size_t g = 0; g < model::kNumGroups; ++g) {
      const double norm = std::sqrt(sq[g]);
      if (norm > settings_.grad_clip) clip[g] = settings_.grad_clip / norm;
    }
  }

  const double b1 = settings_.beta1;
  const double b2 = settings_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));

  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i]) continue;
    const double lr = rates[static_cast<std::size_t>(params[i].group)];
    if (lr == 0.0) continue;
    const double clip_scale = clip[static_cast<std::size_t>(params[i].group)];
    double* w = params[i].value.raw();
    const double* g = grads[i]->raw();
    const std::size_t n = params[i].value.size();
    switch (settings_.kind) {
      case OptimizerKind::kSgd:
        if (clip_scale == 1.0) {
          for (std::size_t k = 0; k < n; ++k) w[k] -= lr * g[k];
        } else {
          for (std::size_t k = 0; k < n; ++k) w[k] -= lr * (clip_scale * g[k]);
        }
        break;
      case OptimizerKind::kMomentum: {
        double* m = m_[i].raw();
        for (std::size_t k = 0; k < n; ++k) {
          m[k] = settings_.momentum * m[k] + clip_scale * g[k];
          w[k] -= lr * m[k];
        }
        break;
      }
      case OptimizerKind::kAdam: {
        double* m = m_[i].raw();
        double* v = v_[i].raw();
        for (std::size_t k = 0; k < n; ++k) {
          const double gk = clip_scale * g[k];
          m[k] = b1 * m[k] + (1.0 - b1) * gk;
          v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
          w[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + settings_.epsilon);
        }
        break;
      }
    }
  }
}

void Optimizer::save(model::ArrayFile& file) const {
  file.meta["optimizer"] = {{"kind", optimizer_name(settings_.kind)}, {"t", t_}};
  for (std::size_t i = 0; i < m_.size(); ++i) file.arrays.push_back({"m:" + std::to_string(i), "optimizer", m_[i]});
  for (std::size_t i = 0; i < v_.size(); ++i) file.arrays.push_back({"v:" + std::to_string(i), "optimizer", v_[i]});
}

void Optimizer::load(const model::ArrayFile& file) {
  if (!file.meta.contains("optimizer")) throw DataError("state file has no optimizer section");
  const auto& o = file.meta.at("optimizer");
  if (o.at("kind").get<std::string>() != optimizer_name(settings_.kind)) {
    throw DataError("state file optimizer '" + o.at("kind").get<std::string>() + "' does not match configured '" +
                    optimizer_name(settings_.kind) + "'");
  }
  t_ = o.at("t").get<std::uint64_t>();
  std::size_t found = 0;
  for (const auto& a : file.arrays) {
    if (a.group != "optimizer") continue;
    const bool is_m = a.name.rfind("m:", 0) == 0;
    const std::size_t i = std::stoul(a.name.substr(2));
    auto& slot = is_m ? m_ : v_;
    if (i >= slot.size() || slot[i].shape() != a.value.shape()) throw DataError("optimizer state shape mismatch");
    slot[i] = a.value;
    ++found;
  }
  if (found != m_.size() + v_.size()) throw DataError("optimizer state incomplete");
}

}  // namespace prada::training
