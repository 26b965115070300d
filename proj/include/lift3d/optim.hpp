#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lift3d/models.hpp"

namespace lift3d {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction. Moment slots follow the store's
// parameter order; a missing gradient counts as zero. Non-finite gradients
// abort the step with the offending parameter named.
class Adam {
 public:
  explicit Adam(const ParameterStore& params, AdamConfig config = {});

  void step(ParameterStore& params, double learning_rate);

  std::uint64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return config_; }

  // Checkpoint plumbing.
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
  };
  const std::map<std::string, Slot>& slots() const { return slots_; }
  void restore(std::map<std::string, Slot> slots, std::uint64_t t);

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::vector<std::string> names_;
  std::map<std::string, Slot> slots_;
};

// Adaptive gradient clipping: each unit's gradient is rescaled so its norm
// never exceeds lambda * max(||w_unit||, 1e-3). Units are the rows (output
// units) of rank >= 2 tensors; vectors and scalars form a single unit.
void agc_clip(const std::vector<double>& weights, const Shape& shape,
              std::vector<double>& grads, double lambda);

}  // namespace lift3d
