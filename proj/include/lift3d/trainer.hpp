#pragma once

#include <string>
#include <vector>

#include "lift3d/checkpoint.hpp"
#include "lift3d/dataset.hpp"
#include "lift3d/models.hpp"
#include "lift3d/optim.hpp"
#include "lift3d/subset_loss.hpp"

namespace lift3d {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  std::size_t steps = 5000;  // total target, including already-completed steps on resume
  AdamConfig adam;
  double agc_lambda = 0.1;
  std::uint64_t seed = 1;
  bool sequence_mode = false;  // every step trains on the whole sequence as one batch
  double occlusion_weight = 1.0;
  bool occlusion_enabled = true;
  bool augment_rotation = false;  // random in-plane rotation per sample (orthographic only)
  std::size_t checkpoint_every = 0;  // 0 = final checkpoint only
  std::string checkpoint_path;       // empty = keep everything in memory
  std::string metrics_path;          // per-step CSV log, empty = none
};

struct StepMetrics {
  std::uint64_t step = 0;
  double subset_loss = 0.0;
  double occlusion_loss = 0.0;
  double unclamped_cosine = 0.0;
  double wall_time_s = 0.0;
};

struct TrainResult {
  std::vector<StepMetrics> history;
  std::uint64_t first_step_below_clamp = 0;  // 1-based; 0 = cosine never crossed -0.05
  TrainState state;
};

// Fresh run: builds the optimizer and RNG from the config seed.
TrainResult train_model(LiftingModel& model, const Dataset& dataset,
                        const SubsetLossConfig& loss_config, const TrainConfig& config);

// Continuation: picks up from a loaded optimizer + train state and runs until
// config.steps total steps have completed. Step-for-step identical to a fresh
// run of the same length.
TrainResult continue_training(LiftingModel& model, Adam& adam, const TrainState& state,
                              const Dataset& dataset, const SubsetLossConfig& loss_config,
                              const TrainConfig& config);

}  // namespace lift3d
