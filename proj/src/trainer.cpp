#include "lift3d/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "lift3d/errors.hpp"
#include "lift3d/occlusion_loss.hpp"

namespace lift3d {

namespace {

// Batch observation tensors, with optional in-plane rotation augmentation.
struct BatchTensors {
  Tensor w;
  Tensor v;
  std::vector<double> v_flat;
};

BatchTensors build_batch(const Dataset& dataset, const std::vector<std::size_t>& indices,
                         bool augment, Rng& rng) {
  const std::size_t batch = indices.size();
  const std::size_t k = dataset.manifest.keypoints;
  std::vector<double> w_vals(batch * k * 2);
  std::vector<double> v_vals(batch * k);
  for (std::size_t b = 0; b < batch; ++b) {
    const Sample* sample = &dataset.samples[indices[b]];
    Sample rotated;
    if (augment) {
      rotated = augment_inplane_rotation(*sample, rng.uniform(0.0, 2.0 * M_PI),
                                         dataset.manifest.camera);
      sample = &rotated;
    }
    for (std::size_t j = 0; j < k; ++j) {
      w_vals[(b * k + j) * 2 + 0] = sample->w[j][0];
      w_vals[(b * k + j) * 2 + 1] = sample->w[j][1];
      v_vals[b * k + j] = static_cast<double>(sample->v[j]);
    }
  }
  BatchTensors out;
  out.v_flat = v_vals;
  out.w = Tensor::constant({batch, k, 2}, std::move(w_vals));
  out.v = Tensor::constant({batch, k}, std::move(v_vals));
  return out;
}

}  // namespace

TrainResult train_model(LiftingModel& model, const Dataset& dataset,
                        const SubsetLossConfig& loss_config, const TrainConfig& config) {
  Adam adam(model.params(), config.adam);
  TrainState state;
  state.step = 0;
  state.rng_state = Rng(config.seed).serialize();
  return continue_training(model, adam, state, dataset, loss_config, config);
}

TrainResult continue_training(LiftingModel& model, Adam& adam, const TrainState& state,
                              const Dataset& dataset, const SubsetLossConfig& loss_config,
                              const TrainConfig& config) {
  validate(dataset);
  const std::size_t samples = dataset.samples.size();
  if (samples == 0) throw InvalidInputError("train: empty dataset");
  if (dataset.manifest.keypoints != model.config().keypoints)
    throw InvalidInputError("train: dataset and model keypoint counts differ");
  const std::size_t batch_size = config.sequence_mode ? samples : config.batch_size;
  if (batch_size < 2) throw InvalidInputError("train: batch size must be >= 2");
  if (!config.sequence_mode && batch_size > samples)
    throw InvalidInputError("train: batch size exceeds dataset size");
  if (config.augment_rotation && dataset.manifest.camera.kind != CameraKind::kOrthographic)
    throw InvalidInputError("train: rotation augmentation needs an orthographic camera");

  Rng rng = Rng::deserialize(state.rng_state);

  std::ofstream metrics;
  if (!config.metrics_path.empty()) {
    const bool fresh = state.step == 0;
    metrics.open(config.metrics_path, fresh ? std::ios::trunc : std::ios::app);
    if (!metrics) throw IoError("cannot open metrics log: " + config.metrics_path);
    if (fresh) metrics << "step,subset_loss,occlusion_loss,unclamped_cosine,wall_time_s\n";
    metrics.precision(17);
  }

  // All-sample index list for sequence mode.
  std::vector<std::size_t> all_indices(samples);
  for (std::size_t i = 0; i < samples; ++i) all_indices[i] = i;

  TrainResult result;
  result.state = state;
  const auto start = std::chrono::steady_clock::now();
  std::uint64_t last_saved_step = state.step;

  auto save = [&](std::uint64_t step) {
    if (config.checkpoint_path.empty()) return;
    TrainState snapshot{step, rng.serialize()};
    save_checkpoint(config.checkpoint_path, model, &adam, &snapshot);
    last_saved_step = step;
  };

  for (std::uint64_t step = state.step + 1; step <= config.steps; ++step) {
    const std::vector<std::size_t> indices =
        config.sequence_mode ? all_indices
                             : rng.sample_without_replacement(samples, batch_size);
    const BatchTensors batch = build_batch(dataset, indices, config.augment_rotation, rng);

    Tensor tokens = make_input_tokens(batch.w, batch.v);
    Tensor prediction = model.forward(tokens, Mode::kTrain);
    Tensor lifted = inpaint(batch.w, batch.v, prediction);

    Tensor subset = batch_subset_loss(lifted, loss_config, rng);

    double cosine = 0.0;
    Tensor total = subset;
    Tensor occlusion;
    if (config.occlusion_enabled) {
      Tensor depths = reshape(slice(lifted, 2, 2, 1), {batch.v_flat.size()});
      occlusion = occlusion_loss(batch.v_flat, depths, &cosine);
      total = add(subset, mul_scalar(occlusion, config.occlusion_weight));
    }

    if (!std::isfinite(total.item())) {
      // Leave the last periodic checkpoint in place and stop.
      throw NumericError("train: non-finite loss at step " + std::to_string(step) +
                         "; last good checkpoint is at step " +
                         std::to_string(last_saved_step));
    }

    StepMetrics sm;
    sm.step = step;
    // Read before backward: interior graph buffers are released during it.
    sm.subset_loss = subset.item();
    sm.occlusion_loss = config.occlusion_enabled ? occlusion.item() : 0.0;
    sm.unclamped_cosine = cosine;

    model.params().zero_grad();
    backward(total);

    for (const std::string& name : model.params().names()) {
      if (!model.params().trainable(name)) continue;
      Tensor t = model.params().get(name);
      if (!t.has_grad()) continue;
      agc_clip(t.values(), t.shape(), t.mutable_grad(), config.agc_lambda);
    }
    adam.step(model.params(), config.learning_rate);
    sm.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (config.occlusion_enabled && result.first_step_below_clamp == 0 && cosine < -0.05)
      result.first_step_below_clamp = step;
    if (metrics.is_open()) {
      metrics << sm.step << "," << sm.subset_loss << "," << sm.occlusion_loss << ","
              << sm.unclamped_cosine << "," << sm.wall_time_s << "\n";
    }
    result.history.push_back(sm);

    if (config.checkpoint_every != 0 && step % config.checkpoint_every == 0 &&
        step != config.steps)
      save(step);
  }

  result.state.step = config.steps;
  result.state.rng_state = rng.serialize();
  if (!config.checkpoint_path.empty()) {
    save_checkpoint(config.checkpoint_path, model, &adam, &result.state);
  }
  return result;
}

}  // namespace lift3d
