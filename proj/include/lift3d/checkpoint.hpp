#pragma once

#include <memory>
#include <optional>
#include <string>

#include "lift3d/models.hpp"
#include "lift3d/optim.hpp"

namespace lift3d {

// Progress of a training run, carried through checkpoints so runs resume
// bit-exactly: the step counter plus the serialized RNG stream.
struct TrainState {
  std::uint64_t step = 0;
  std::string rng_state;
};

// Binary container: magic "L3CKPT01", u64 little-endian header length, JSON
// header (model config, step, RNG state, Adam scalars, tensor table), then
// raw little-endian f64 payloads in header order -- tensor values first,
// then per-trainable Adam moments when present. Full layout in
// docs/formats.md.
void save_checkpoint(const std::string& path, const LiftingModel& model,
                     const Adam* adam = nullptr, const TrainState* state = nullptr);

struct LoadedCheckpoint {
  std::unique_ptr<LiftingModel> model;
  std::unique_ptr<Adam> adam;  // null when the checkpoint carries no optimizer
  std::optional<TrainState> state;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace lift3d
