#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lift3d/rng.hpp"
#include "lift3d/tensor.hpp"

namespace lift3d {

enum class ModelFamily { kMlp, kMixer };

// Network family and size. `width` is the hidden width for MLPs and the
// per-token latent size for mixers; `depth` counts hidden width x width
// blocks (MLP, after an input projection) or mixer blocks.
struct ModelConfig {
  ModelFamily family = ModelFamily::kMixer;
  std::size_t depth = 8;
  std::size_t width = 8;
  std::size_t keypoints = 0;
  std::uint64_t seed = 1;
};

void validate(const ModelConfig& config);

std::string family_name(ModelFamily family);
ModelFamily family_from_name(const std::string& name);

// Named tensor collection with per-name trainable flag; iteration follows
// creation order, which makes optimizer state and checkpoints reproducible.
class ParameterStore {
 public:
  Tensor add(const std::string& name, Shape shape, std::vector<double> values, bool trainable);
  Tensor get(const std::string& name) const;
  bool trainable(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  std::size_t parameter_count() const;  // trainable scalars only
  void zero_grad();

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::pair<Tensor, bool>> items_;
};

class LiftingModel {
 public:
  virtual ~LiftingModel() = default;

  // (B, K, 3) input tokens -> (B, K, 3) raw prediction.
  virtual Tensor forward(const Tensor& tokens, Mode mode) = 0;

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

 protected:
  explicit LiftingModel(const ModelConfig& config) : config_(config) {}
  ModelConfig config_;
  ParameterStore params_;
};

std::unique_ptr<LiftingModel> build_model(const ModelConfig& config);

// Per-keypoint network input (x, y, v); occluded coordinates enter as zeros.
Tensor make_input_tokens(const Tensor& w, const Tensor& v);

// Merge a prediction with the observations: visible keypoints keep their
// observed (x, y) exactly (no gradient there) and take the predicted depth;
// occluded keypoints are fully predicted.
Tensor inpaint(const Tensor& w, const Tensor& v, const Tensor& prediction);

}  // namespace lift3d
