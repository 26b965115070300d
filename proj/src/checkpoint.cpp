#include "lift3d/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "lift3d/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace lift3d {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'L', '3', 'C', 'K', 'P', 'T', '0', '1'};

void write_doubles(std::ofstream& out, const std::vector<double>& values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::ifstream& in, std::size_t count) {
  std::vector<double> values(count);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw IoError("checkpoint: truncated payload");
  return values;
}

}  // namespace

void save_checkpoint(const std::string& path, const LiftingModel& model, const Adam* adam,
                     const TrainState* state) {
  const ModelConfig& cfg = model.config();
  json header;
  header["model"] = {{"family", family_name(cfg.family)},
                     {"depth", cfg.depth},
                     {"width", cfg.width},
                     {"keypoints", cfg.keypoints},
                     {"seed", cfg.seed}};
  header["step"] = state ? state->step : 0;
  if (state) header["rng"] = state->rng_state;
  if (adam) {
    header["adam"] = {{"t", adam->steps_taken()},
                      {"beta1", adam->config().beta1},
                      {"beta2", adam->config().beta2},
                      {"eps", adam->config().eps}};
  }
  json tensors = json::array();
  const ParameterStore& params = model.params();
  for (const std::string& name : params.names()) {
    tensors.push_back({{"name", name},
                       {"shape", params.get(name).shape()},
                       {"trainable", params.trainable(name)}});
  }
  header["tensors"] = std::move(tensors);

  const std::string header_text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

  for (const std::string& name : params.names()) write_doubles(out, params.get(name).values());
  if (adam) {
    for (const std::string& name : params.names()) {
      if (!params.trainable(name)) continue;
      const Adam::Slot& slot = adam->slots().at(name);
      write_doubles(out, slot.m);
      write_doubles(out, slot.v);
    }
  }
  if (!out) throw IoError("failed while writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw InvalidInputError("checkpoint: bad magic in " + path);
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || header_len > (1u << 26)) throw InvalidInputError("checkpoint: bad header length");
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw IoError("checkpoint: truncated header");

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw InvalidInputError(std::string("checkpoint: header parse error: ") + e.what());
  }

  ModelConfig cfg;
  cfg.family = family_from_name(header.at("model").at("family").get<std::string>());
  cfg.depth = header.at("model").at("depth").get<std::size_t>();
  cfg.width = header.at("model").at("width").get<std::size_t>();
  cfg.keypoints = header.at("model").at("keypoints").get<std::size_t>();
  cfg.seed = header.at("model").at("seed").get<std::uint64_t>();

  LoadedCheckpoint loaded;
  loaded.model = build_model(cfg);

  // The tensor table must match the freshly built model exactly.
  ParameterStore& params = loaded.model->params();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.names().size())
    throw InvalidInputError("checkpoint: tensor table size mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const std::string name = tensors[i].at("name").get<std::string>();
    if (name != params.names()[i])
      throw InvalidInputError("checkpoint: unexpected tensor " + name);
    const Shape shape = tensors[i].at("shape").get<Shape>();
    Tensor t = params.get(name);
    if (shape != t.shape()) throw InvalidInputError("checkpoint: shape mismatch for " + name);
    t.mutable_values() = read_doubles(in, t.size());
  }

  if (header.contains("adam")) {
    AdamConfig adam_cfg;
    adam_cfg.beta1 = header.at("adam").at("beta1").get<double>();
    adam_cfg.beta2 = header.at("adam").at("beta2").get<double>();
    adam_cfg.eps = header.at("adam").at("eps").get<double>();
    loaded.adam = std::make_unique<Adam>(params, adam_cfg);
    std::map<std::string, Adam::Slot> slots;
    for (const std::string& name : params.names()) {
      if (!params.trainable(name)) continue;
      Adam::Slot slot;
      slot.m = read_doubles(in, params.get(name).size());
      slot.v = read_doubles(in, params.get(name).size());
      slots.emplace(name, std::move(slot));
    }
    loaded.adam->restore(std::move(slots), header.at("adam").at("t").get<std::uint64_t>());
  }

  if (header.contains("rng")) {
    TrainState state;
    state.step = header.at("step").get<std::uint64_t>();
    state.rng_state = header.at("rng").get<std::string>();
    loaded.state = std::move(state);
  }
  return loaded;
}

}  // namespace lift3d
