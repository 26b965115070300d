#include "lift3d/optim.hpp"

#include <cmath>

#include "lift3d/errors.hpp"

namespace lift3d {

Adam::Adam(const ParameterStore& params, AdamConfig config) : config_(config) {
  for (const std::string& name : params.names()) {
    if (!params.trainable(name)) continue;
    names_.push_back(name);
    Slot slot;
    slot.m.assign(params.get(name).size(), 0.0);
    slot.v.assign(params.get(name).size(), 0.0);
    slots_.emplace(name, std::move(slot));
  }
}

void Adam::step(ParameterStore& params, double learning_rate) {
  ++t_;
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (const std::string& name : names_) {
    Tensor tensor = params.get(name);
    Slot& slot = slots_.at(name);
    const bool has_grad = tensor.has_grad();
    const std::vector<double>& grad = tensor.grad();
    std::vector<double>& values = tensor.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = has_grad ? grad[i] : 0.0;
      if (!std::isfinite(g))
        throw NumericError("adam: non-finite gradient in " + name);
      slot.m[i] = config_.beta1 * slot.m[i] + (1.0 - config_.beta1) * g;
      slot.v[i] = config_.beta2 * slot.v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = slot.m[i] / bias1;
      const double v_hat = slot.v[i] / bias2;
      values[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void Adam::restore(std::map<std::string, Slot> slots, std::uint64_t t) {
  for (const std::string& name : names_) {
    auto it = slots.find(name);
    if (it == slots.end() || it->second.m.size() != slots_.at(name).m.size())
      throw InvalidInputError("adam restore: slot mismatch for " + name);
  }
  slots_ = std::move(slots);
  t_ = t;
}

void agc_clip(const std::vector<double>& weights, const Shape& shape,
              std::vector<double>& grads, double lambda) {
  if (weights.size() != grads.size())
    throw ShapeError("agc_clip: weight/gradient size mismatch");
  const std::size_t units = shape.size() >= 2 ? shape[0] : 1;
  const std::size_t span = weights.size() / (units == 0 ? 1 : units);
  for (std::size_t u = 0; u < units; ++u) {
    const double* w = weights.data() + u * span;
    double* g = grads.data() + u * span;
    double wn2 = 0.0, gn2 = 0.0;
    for (std::size_t i = 0; i < span; ++i) {
      wn2 += w[i] * w[i];
      gn2 += g[i] * g[i];
    }
    const double grad_norm = std::sqrt(gn2);
    if (grad_norm == 0.0) continue;
    const double limit = lambda * std::max(std::sqrt(wn2), 1e-3);
    if (grad_norm > limit) {
      const double factor = limit / grad_norm;
      for (std::size_t i = 0; i < span; ++i) g[i] *= factor;
    }
  }
}

}  // namespace lift3d
