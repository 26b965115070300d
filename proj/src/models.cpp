#include "lift3d/models.hpp"

#include <cmath>

#include "lift3d/errors.hpp"

namespace lift3d {

void validate(const ModelConfig& config) {
  if (config.depth < 1) throw InvalidInputError("model config: depth must be >= 1");
  if (config.width < 1) throw InvalidInputError("model config: width must be >= 1");
  if (config.keypoints < 4) throw InvalidInputError("model config: need at least 4 keypoints");
}

std::string family_name(ModelFamily family) {
  return family == ModelFamily::kMlp ? "mlp" : "mixer";
}

ModelFamily family_from_name(const std::string& name) {
  if (name == "mlp") return ModelFamily::kMlp;
  if (name == "mixer") return ModelFamily::kMixer;
  throw InvalidInputError("unknown model family: " + name);
}

Tensor ParameterStore::add(const std::string& name, Shape shape, std::vector<double> values,
                           bool trainable) {
  if (items_.count(name)) throw InvalidInputError("parameter already registered: " + name);
  Tensor t = Tensor::leaf(std::move(shape), std::move(values), trainable);
  items_.emplace(name, std::make_pair(t, trainable));
  order_.push_back(name);
  return t;
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = items_.find(name);
  if (it == items_.end()) throw InvalidInputError("unknown parameter: " + name);
  return it->second.first;
}

bool ParameterStore::trainable(const std::string& name) const {
  auto it = items_.find(name);
  if (it == items_.end()) throw InvalidInputError("unknown parameter: " + name);
  return it->second.second;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t count = 0;
  for (const auto& name : order_) {
    const auto& [tensor, trainable] = items_.at(name);
    if (trainable) count += tensor.size();
  }
  return count;
}

void ParameterStore::zero_grad() {
  for (const auto& name : order_) {
    auto& [tensor, trainable] = items_.at(name);
    if (trainable) const_cast<Tensor&>(tensor).zero_grad();
  }
}

namespace {

// Linear layer with (out, in) weight layout; rows are output units.
struct Linear {
  Tensor weight;
  Tensor bias;
  std::size_t in = 0, out = 0;

  static Linear create(ParameterStore& store, const std::string& name, std::size_t in,
                       std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(out * in);
    for (double& x : w) x = rng.uniform(-bound, bound);
    std::vector<double> b(out);
    for (double& x : b) x = rng.uniform(-bound, bound);
    Linear layer;
    layer.in = in;
    layer.out = out;
    layer.weight = store.add(name + ".weight", {out, in}, std::move(w), true);
    layer.bias = store.add(name + ".bias", {out}, std::move(b), true);
    return layer;
  }

  // x: (..., in) -> (..., out); matmul flattens the leading dims internally.
  Tensor forward(const Tensor& x) const {
    return add(matmul(x, transpose_last(weight)), bias);
  }
};

struct BatchNorm {
  Tensor gamma, beta, running_mean, running_var;
  std::size_t features = 0;

  static BatchNorm create(ParameterStore& store, const std::string& name, std::size_t features) {
    BatchNorm bn;
    bn.features = features;
    bn.gamma = store.add(name + ".gamma", {features}, std::vector<double>(features, 1.0), true);
    bn.beta = store.add(name + ".beta", {features}, std::vector<double>(features, 0.0), true);
    bn.running_mean =
        store.add(name + ".running_mean", {features}, std::vector<double>(features, 0.0), false);
    bn.running_var =
        store.add(name + ".running_var", {features}, std::vector<double>(features, 1.0), false);
    return bn;
  }

  // Normalizes the last axis; leading dims act as the batch.
  Tensor forward(const Tensor& x, Mode mode) {
    return batchnorm(x, gamma, beta, running_mean, running_var, 0.1, 1e-5, mode);
  }
};

class MlpModel final : public LiftingModel {
 public:
  explicit MlpModel(const ModelConfig& config) : LiftingModel(config) {
    Rng rng(config.seed);
    const std::size_t io = 3 * config.keypoints;
    const std::size_t w = config.width;
    stem_ = Linear::create(params_, "stem", io, w, rng);
    stem_bn_ = BatchNorm::create(params_, "stem.bn", w);
    for (std::size_t d = 0; d < config.depth; ++d) {
      const std::string name = "hidden" + std::to_string(d);
      hidden_.push_back(Linear::create(params_, name, w, w, rng));
      hidden_bn_.push_back(BatchNorm::create(params_, name + ".bn", w));
    }
    head_ = Linear::create(params_, "head", w, io, rng);
  }

  Tensor forward(const Tensor& tokens, Mode mode) override {
    check_tokens(tokens);
    const std::size_t batch = tokens.shape()[0];
    const std::size_t k = config_.keypoints;
    Tensor h = reshape(tokens, {batch, 3 * k});
    h = relu(stem_bn_.forward(stem_.forward(h), mode));
    for (std::size_t d = 0; d < hidden_.size(); ++d)
      h = relu(hidden_bn_[d].forward(hidden_[d].forward(h), mode));
    return reshape(head_.forward(h), {batch, k, 3});
  }

 private:
  void check_tokens(const Tensor& tokens) const {
    if (tokens.ndim() != 3 || tokens.shape()[1] != config_.keypoints || tokens.shape()[2] != 3)
      throw ShapeError("mlp forward: expected (B, K, 3) tokens");
  }

  Linear stem_, head_;
  BatchNorm stem_bn_;
  std::vector<Linear> hidden_;
  std::vector<BatchNorm> hidden_bn_;
};

// Mixer block: a token-mixing MLP over the keypoint axis and a channel-mixing
// MLP over the latent axis, each two-layer with 2x hidden expansion, residual
// connections, and BatchNorm + ReLU after the first linear.
class MixerModel final : public LiftingModel {
 public:
  explicit MixerModel(const ModelConfig& config) : LiftingModel(config) {
    Rng rng(config.seed);
    const std::size_t k = config.keypoints;
    const std::size_t n = config.width;
    embed_ = Linear::create(params_, "embed", 3, n, rng);
    for (std::size_t d = 0; d < config.depth; ++d) {
      const std::string name = "block" + std::to_string(d);
      Block block;
      block.token_fc1 = Linear::create(params_, name + ".token.fc1", k, 2 * k, rng);
      block.token_bn = BatchNorm::create(params_, name + ".token.bn", 2 * k);
      block.token_fc2 = Linear::create(params_, name + ".token.fc2", 2 * k, k, rng);
      block.channel_fc1 = Linear::create(params_, name + ".channel.fc1", n, 2 * n, rng);
      block.channel_bn = BatchNorm::create(params_, name + ".channel.bn", 2 * n);
      block.channel_fc2 = Linear::create(params_, name + ".channel.fc2", 2 * n, n, rng);
      blocks_.push_back(std::move(block));
    }
    head_ = Linear::create(params_, "head", n, 3, rng);
  }

  Tensor forward(const Tensor& tokens, Mode mode) override {
    check_tokens(tokens);
    Tensor h = embed_.forward(tokens);  // (B, K, n)
    for (auto& block : blocks_) {
      // Token mixing acts on the transposed state: n tokens of size K.
      Tensor t = transpose_last(h);  // (B, n, K)
      Tensor m = block.token_fc1.forward(t);
      m = relu(block.token_bn.forward(m, mode));
      m = block.token_fc2.forward(m);
      h = add(h, transpose_last(m));

      Tensor c = block.channel_fc1.forward(h);
      c = relu(block.channel_bn.forward(c, mode));
      c = block.channel_fc2.forward(c);
      h = add(h, c);
    }
    return head_.forward(h);  // (B, K, 3)
  }

 private:
  void check_tokens(const Tensor& tokens) const {
    if (tokens.ndim() != 3 || tokens.shape()[1] != config_.keypoints || tokens.shape()[2] != 3)
      throw ShapeError("mixer forward: expected (B, K, 3) tokens");
  }

  struct Block {
    Linear token_fc1, token_fc2, channel_fc1, channel_fc2;
    BatchNorm token_bn, channel_bn;
  };

  Linear embed_, head_;
  std::vector<Block> blocks_;
};

}  // namespace

std::unique_ptr<LiftingModel> build_model(const ModelConfig& config) {
  validate(config);
  if (config.family == ModelFamily::kMlp) return std::make_unique<MlpModel>(config);
  return std::make_unique<MixerModel>(config);
}

namespace {

void check_observation_shapes(const Tensor& w, const Tensor& v) {
  if (w.ndim() != 3 || w.shape()[2] != 2) throw ShapeError("observations: w must be (B, K, 2)");
  if (v.ndim() != 2 || v.shape()[0] != w.shape()[0] || v.shape()[1] != w.shape()[1])
    throw ShapeError("observations: v must be (B, K) matching w");
  for (double x : v.values())
    if (x != 0.0 && x != 1.0)
      throw InvalidInputError("observations: visibility mask must be binary");
}

}  // namespace

Tensor make_input_tokens(const Tensor& w, const Tensor& v) {
  check_observation_shapes(w, v);
  const std::size_t batch = w.shape()[0];
  const std::size_t k = w.shape()[1];
  std::vector<double> tokens(batch * k * 3);
  const double* wv = w.values().data();
  const double* vv = v.values().data();
  for (std::size_t i = 0; i < batch * k; ++i) {
    tokens[i * 3 + 0] = wv[i * 2 + 0];
    tokens[i * 3 + 1] = wv[i * 2 + 1];
    tokens[i * 3 + 2] = vv[i];
  }
  return Tensor::constant({batch, k, 3}, std::move(tokens));
}

Tensor inpaint(const Tensor& w, const Tensor& v, const Tensor& prediction) {
  check_observation_shapes(w, v);
  if (prediction.ndim() != 3 || prediction.shape()[0] != w.shape()[0] ||
      prediction.shape()[1] != w.shape()[1] || prediction.shape()[2] != 3)
    throw ShapeError("inpaint: prediction must be (B, K, 3)");

  const std::size_t batch = w.shape()[0];
  const std::size_t k = w.shape()[1];
  std::vector<double> keep(batch * k * 3);      // 1 where the prediction survives
  std::vector<double> observed(batch * k * 3);  // observed (x, y, 0) where visible
  const double* wv = w.values().data();
  const double* vv = v.values().data();
  for (std::size_t i = 0; i < batch * k; ++i) {
    const bool visible = vv[i] == 1.0;
    keep[i * 3 + 0] = visible ? 0.0 : 1.0;
    keep[i * 3 + 1] = visible ? 0.0 : 1.0;
    keep[i * 3 + 2] = 1.0;
    observed[i * 3 + 0] = visible ? wv[i * 2 + 0] : 0.0;
    observed[i * 3 + 1] = visible ? wv[i * 2 + 1] : 0.0;
  }
  const Shape shape{batch, k, 3};
  Tensor keep_mask = Tensor::constant(shape, std::move(keep));
  Tensor observed_t = Tensor::constant(shape, std::move(observed));
  return add(mul(prediction, keep_mask), observed_t);
}

}  // namespace lift3d
