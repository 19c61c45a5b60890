#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "amq/layers.hpp"
#include "amq/tensor.hpp"

namespace amq::nn {

struct ConvLayer {
  std::size_t out_channels = 8;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;
  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};
struct MaxPoolLayer {
  friend bool operator==(const MaxPoolLayer&, const MaxPoolLayer&) = default;
};
struct ReluLayer {
  friend bool operator==(const ReluLayer&, const ReluLayer&) = default;
};
struct DropoutLayer {
  double rate = 0.5;
  friend bool operator==(const DropoutLayer&, const DropoutLayer&) = default;
};
struct FlattenLayer {
  friend bool operator==(const FlattenLayer&, const FlattenLayer&) = default;
};
struct DenseLayer {
  std::size_t out_features = 128;
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};
struct SoftmaxLayer {
  friend bool operator==(const SoftmaxLayer&, const SoftmaxLayer&) = default;
};

using LayerSpec = std::variant<ConvLayer, MaxPoolLayer, ReluLayer, DropoutLayer, FlattenLayer, DenseLayer, SoftmaxLayer>;

std::string layer_name(const LayerSpec& layer);

struct ModelConfig {
  std::size_t in_channels = 1;
  std::size_t in_height = 64;
  std::size_t in_width = 64;
  std::size_t n_classes = 5;
  std::vector<LayerSpec> layers;

  // conv(3x3, 8) relu pool conv(3x3, 16) relu pool conv(3x3, 32) relu pool
  // dropout(0.25) flatten fc(128) relu dropout(0.5) fc(n_classes) softmax
  static ModelConfig standard(std::size_t height, std::size_t width, std::size_t n_classes);

  // Throws ShapeError/ConfigError unless the layers chain from the input
  // size, the network ends in dense(n_classes) followed by softmax, and
  // softmax appears nowhere else.
  void validate() const;

  // shapes[i] is the input of layer i; shapes.back() is the output.
  std::vector<Shape> activation_shapes() const;
  Shape input_shape() const { return {in_channels, in_height, in_width}; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Weight and bias of one layer; both empty for layers without parameters.
struct LayerParams {
  Tensor weights;
  Tensor bias;
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

// One LayerParams per config layer. `generation` increments on every
// update so caches can detect that they are stale.
struct Parameters {
  std::vector<LayerParams> layers;
  std::uint64_t generation = 0;

  std::size_t count() const;
  bool all_finite() const;
  // Zero tensors shaped like `config`'s parameters.
  static Parameters zeros(const ModelConfig& config);
  // Rounds every value to the nearest 32-bit float, the checkpoint precision.
  void round_to_storage();

  // Compares tensors only, not generation.
  bool same_values(const Parameters& other) const { return layers == other.layers; }
};

using Gradients = Parameters;

// He-normal weights (std = sqrt(2 / fan_in)), zero biases, rounded to
// storage precision. Each layer draws from its own derived stream.
Parameters init_weights(const ModelConfig& config, std::uint64_t seed);

// params <- params - learning_rate * grads. Throws ShapeError on mismatch.
void sgd_step(Parameters& params, const Gradients& grads, double learning_rate);

// Everything backward needs from one item's forward pass.
struct ItemCache {
  std::vector<Tensor> inputs;                       // input of each layer
  std::vector<std::vector<std::uint32_t>> argmax;   // pool layers
  std::vector<std::vector<double>> masks;           // dropout layers
  Tensor probs;
};

// Single-item forward. With `cache` null only the distribution is
// computed. The dropout stream is consumed layer by layer in order.
Tensor forward_item(const ModelConfig& config, const Parameters& params, const Tensor& input, Mode mode, Rng& rng,
                    ItemCache* cache);

// Gradient of scale * cross_entropy(probs, true_class). The logits receive
// scale * (probs - one_hot); layers are then differentiated in reverse.
Gradients backward_item(const ModelConfig& config, const Parameters& params, const ItemCache& cache,
                        std::size_t true_class, double scale);

// Adds `g` into `total` elementwise.
void accumulate(Gradients& total, const Gradients& g);

struct ForwardCache {
  std::vector<ItemCache> items;
  Mode mode = Mode::Eval;
  std::uint64_t params_generation = 0;
  const Parameters* params = nullptr;
};

struct ForwardResult {
  Tensor probs;  // B x n_classes
  ForwardCache cache;
};

// Batch forward over B x C x H x W. Item i draws dropout masks from
// Rng(derive_seed(dropout_seed, {i})), so results do not depend on how
// items are scheduled.
ForwardResult model_forward(const ModelConfig& config, const Parameters& params, const Tensor& batch, Mode mode,
                            std::uint64_t dropout_seed = 0, std::size_t threads = 1);

// Gradient of the mean cross-entropy over the batch. Per-item gradients
// are summed in item order regardless of `threads`. Throws ContractError
// when `cache` came from different or since-updated parameters.
Gradients model_backward(const ModelConfig& config, const Parameters& params, const ForwardCache& cache,
                         std::span<const std::size_t> true_classes, std::size_t threads = 1);

// Mean cross-entropy of a forward result.
double mean_loss(const Tensor& probs, std::span<const std::size_t> true_classes);

// Index of the largest element; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace amq::nn
