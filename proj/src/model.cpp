#include "amq/model.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "amq/errors.hpp"

namespace amq::nn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::string layer_name(const LayerSpec& layer) {
  return std::visit(overloaded{
                        [](const ConvLayer& c) {
                          return "conv(" + std::to_string(c.kernel) + "x" + std::to_string(c.kernel) + ", " +
                                 std::to_string(c.out_channels) + ", stride " + std::to_string(c.stride) + ", pad " +
                                 std::to_string(c.pad) + ")";
                        },
                        [](const MaxPoolLayer&) { return std::string("maxpool(2x2)"); },
                        [](const ReluLayer&) { return std::string("relu"); },
                        [](const DropoutLayer& d) { return "dropout(" + std::to_string(d.rate) + ")"; },
                        [](const FlattenLayer&) { return std::string("flatten"); },
                        [](const DenseLayer& d) { return "fc(" + std::to_string(d.out_features) + ")"; },
                        [](const SoftmaxLayer&) { return std::string("softmax"); },
                    },
                    layer);
}

ModelConfig ModelConfig::standard(std::size_t height, std::size_t width, std::size_t n_classes) {
  ModelConfig c;
  c.in_channels = 1;
  c.in_height = height;
  c.in_width = width;
  c.n_classes = n_classes;
  c.layers = {ConvLayer{8, 3, 1, 1},  ReluLayer{},     MaxPoolLayer{}, ConvLayer{16, 3, 1, 1},
              ReluLayer{},            MaxPoolLayer{},  ConvLayer{32, 3, 1, 1}, ReluLayer{},
              MaxPoolLayer{},         DropoutLayer{0.25}, FlattenLayer{}, DenseLayer{128},
              ReluLayer{},            DropoutLayer{0.5},  DenseLayer{n_classes}, SoftmaxLayer{}};
  return c;
}

std::vector<Shape> ModelConfig::activation_shapes() const {
  if (in_channels == 0 || in_height == 0 || in_width == 0) throw ShapeError("model input dims must be positive");
  std::vector<Shape> shapes{input_shape()};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Shape& in = shapes.back();
    const std::string where = "layer " + std::to_string(i) + " " + layer_name(layers[i]) + ": ";
    Shape out = std::visit(
        overloaded{
            [&](const ConvLayer& c) -> Shape {
              if (in.size() != 3) throw ShapeError(where + "needs CxHxW input, got " + shape_string(in));
              if (c.out_channels == 0) throw ShapeError(where + "zero output channels");
              try {
                return {c.out_channels, conv_output_extent(in[1], c.kernel, c.stride, c.pad),
                        conv_output_extent(in[2], c.kernel, c.stride, c.pad)};
              } catch (const ShapeError& e) {
                throw ShapeError(where + e.what());
              }
            },
            [&](const MaxPoolLayer&) -> Shape {
              if (in.size() != 3 || in[1] % 2 || in[2] % 2) {
                throw ShapeError(where + "needs CxHxW input with even H and W, got " + shape_string(in));
              }
              return {in[0], in[1] / 2, in[2] / 2};
            },
            [&](const ReluLayer&) -> Shape { return in; },
            [&](const DropoutLayer& d) -> Shape {
              if (!(d.rate >= 0.0 && d.rate < 1.0)) throw ConfigError(where + "rate must lie in [0, 1)");
              return in;
            },
            [&](const FlattenLayer&) -> Shape { return {shape_size(in)}; },
            [&](const DenseLayer& d) -> Shape {
              if (in.size() != 1) throw ShapeError(where + "needs a flat input, got " + shape_string(in));
              if (d.out_features == 0) throw ShapeError(where + "zero output features");
              return {d.out_features};
            },
            [&](const SoftmaxLayer&) -> Shape {
              if (in.size() != 1) throw ShapeError(where + "needs a flat input, got " + shape_string(in));
              return in;
            },
        },
        layers[i]);
    shapes.push_back(std::move(out));
  }
  return shapes;
}

void ModelConfig::validate() const {
  if (n_classes < 2) throw ConfigError("model needs at least two classes");
  if (layers.size() < 2 || !std::holds_alternative<SoftmaxLayer>(layers.back())) {
    throw ConfigError("model must end with a softmax layer");
  }
  const auto* last_dense = std::get_if<DenseLayer>(&layers[layers.size() - 2]);
  if (!last_dense || last_dense->out_features != n_classes) {
    throw ConfigError("softmax must follow fc(" + std::to_string(n_classes) + ")");
  }
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (std::holds_alternative<SoftmaxLayer>(layers[i])) throw ConfigError("softmax allowed only as the last layer");
  }
  activation_shapes();
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

bool Parameters::all_finite() const {
  return std::all_of(layers.begin(), layers.end(),
                     [](const LayerParams& l) { return l.weights.all_finite() && l.bias.all_finite(); });
}

Parameters Parameters::zeros(const ModelConfig& config) {
  config.validate();
  const auto shapes = config.activation_shapes();
  Parameters p;
  p.layers.resize(config.layers.size());
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    if (const auto* c = std::get_if<ConvLayer>(&config.layers[i])) {
      p.layers[i].weights = Tensor({c->out_channels, shapes[i][0], c->kernel, c->kernel});
      p.layers[i].bias = Tensor({c->out_channels});
    } else if (const auto* d = std::get_if<DenseLayer>(&config.layers[i])) {
      p.layers[i].weights = Tensor({d->out_features, shapes[i][0]});
      p.layers[i].bias = Tensor({d->out_features});
    }
  }
  return p;
}

void Parameters::round_to_storage() {
  for (auto& l : layers) {
    for (auto* t : {&l.weights, &l.bias}) {
      for (auto& v : t->data()) v = static_cast<double>(static_cast<float>(v));
    }
  }
}

Parameters init_weights(const ModelConfig& config, std::uint64_t seed) {
  Parameters p = Parameters::zeros(config);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& w = p.layers[i].weights;
    if (w.empty()) continue;
    const std::size_t fan_in = w.size() / w.dim(0);
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Rng rng(derive_seed(seed, {0x1a1e, i}));
    for (auto& v : w.data()) v = stddev * rng.normal();
  }
  p.round_to_storage();
  return p;
}

void sgd_step(Parameters& params, const Gradients& grads, double learning_rate) {
  if (params.layers.size() != grads.layers.size()) throw ShapeError("sgd_step: layer count mismatch");
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& p = params.layers[i];
    const auto& g = grads.layers[i];
    if (p.weights.shape() != g.weights.shape() || p.bias.shape() != g.bias.shape()) {
      throw ShapeError("sgd_step: shape mismatch at layer " + std::to_string(i));
    }
    for (std::size_t k = 0; k < p.weights.size(); ++k) p.weights[k] -= learning_rate * g.weights[k];
    for (std::size_t k = 0; k < p.bias.size(); ++k) p.bias[k] -= learning_rate * g.bias[k];
  }
  ++params.generation;
}

void accumulate(Gradients& total, const Gradients& g) {
  for (std::size_t i = 0; i < total.layers.size(); ++i) {
    auto& t = total.layers[i];
    const auto& s = g.layers[i];
    for (std::size_t k = 0; k < t.weights.size(); ++k) t.weights[k] += s.weights[k];
    for (std::size_t k = 0; k < t.bias.size(); ++k) t.bias[k] += s.bias[k];
  }
}

Tensor forward_item(const ModelConfig& config, const Parameters& params, const Tensor& input, Mode mode, Rng& rng,
                    ItemCache* cache) {
  if (input.shape() != config.input_shape()) {
    throw ShapeError("model input " + shape_string(input.shape()) + " != expected " +
                     shape_string(config.input_shape()));
  }
  if (params.layers.size() != config.layers.size()) throw ShapeError("parameters do not match config layer count");
  if (cache) {
    cache->inputs.assign(config.layers.size(), Tensor());
    cache->argmax.assign(config.layers.size(), {});
    cache->masks.assign(config.layers.size(), {});
  }
  Tensor x = input;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& lp = params.layers[i];
    Tensor y = std::visit(overloaded{
                              [&](const ConvLayer& c) { return conv2d(x, lp.weights, lp.bias, c.stride, c.pad); },
                              [&](const MaxPoolLayer&) {
                                auto r = maxpool2x2(x);
                                if (cache) cache->argmax[i] = std::move(r.argmax);
                                return std::move(r.output);
                              },
                              [&](const ReluLayer&) { return relu(x); },
                              [&](const DropoutLayer& d) {
                                auto r = dropout(x, d.rate, mode, rng);
                                if (cache) cache->masks[i] = std::move(r.mask);
                                return std::move(r.output);
                              },
                              [&](const FlattenLayer&) {
                                Tensor f = x;
                                f.reshape({x.size()});
                                return f;
                              },
                              [&](const DenseLayer&) { return fully_connected(x, lp.weights, lp.bias); },
                              [&](const SoftmaxLayer&) { return softmax(x); },
                          },
                          config.layers[i]);
    if (cache) {
      cache->inputs[i] = std::move(x);
    }
    x = std::move(y);
  }
  if (cache) cache->probs = x;
  return x;
}

Gradients backward_item(const ModelConfig& config, const Parameters& params, const ItemCache& cache,
                        std::size_t true_class, double scale) {
  if (cache.inputs.size() != config.layers.size() || cache.probs.empty()) {
    throw ContractError("backward_item: cache does not belong to this model");
  }
  if (true_class >= cache.probs.size()) throw DomainError("backward_item: class index out of range");
  Gradients grads;
  grads.layers.resize(config.layers.size());

  // Fused softmax + cross-entropy at the logits.
  Tensor g = cache.probs;
  g[true_class] -= 1.0;
  for (auto& v : g.data()) v *= scale;

  for (std::size_t i = config.layers.size() - 1; i-- > 0;) {
    const Tensor& in = cache.inputs[i];
    const auto& lp = params.layers[i];
    g = std::visit(overloaded{
                       [&](const ConvLayer& c) {
                         auto r = conv2d_backward(in, lp.weights, g, c.stride, c.pad, i > 0);
                         grads.layers[i].weights = std::move(r.weights);
                         grads.layers[i].bias = std::move(r.bias);
                         return std::move(r.input);
                       },
                       [&](const MaxPoolLayer&) { return maxpool2x2_backward(in.shape(), cache.argmax[i], g); },
                       [&](const ReluLayer&) { return relu_backward(in, g); },
                       [&](const DropoutLayer&) { return dropout_backward(cache.masks[i], g); },
                       [&](const FlattenLayer&) {
                         Tensor r = g;
                         r.reshape(in.shape());
                         return r;
                       },
                       [&](const DenseLayer&) {
                         auto r = fully_connected_backward(in, lp.weights, g);
                         grads.layers[i].weights = std::move(r.weights);
                         grads.layers[i].bias = std::move(r.bias);
                         return std::move(r.input);
                       },
                       [&](const SoftmaxLayer&) -> Tensor {
                         throw ContractError("softmax must be the final layer");
                       },
                   },
                   config.layers[i]);
  }
  return grads;
}

ForwardResult model_forward(const ModelConfig& config, const Parameters& params, const Tensor& batch, Mode mode,
                            std::uint64_t dropout_seed, std::size_t threads) {
  config.validate();
  if (batch.rank() != 4) throw ShapeError("model_forward expects BxCxHxW, got " + shape_string(batch.shape()));
  const std::size_t b = batch.dim(0);
  ForwardResult r{Tensor({b, config.n_classes}), {}};
  r.cache.items.resize(b);
  r.cache.mode = mode;
  r.cache.params_generation = params.generation;
  r.cache.params = &params;
  parallel_for(b, threads, [&](std::size_t i) {
    Rng rng(derive_seed(dropout_seed, {i}));
    const Tensor item = batch.item(i);
    forward_item(config, params, item, mode, rng, &r.cache.items[i]);
  });
  for (std::size_t i = 0; i < b; ++i) {
    std::copy(r.cache.items[i].probs.data().begin(), r.cache.items[i].probs.data().end(),
              r.probs.data().begin() + static_cast<std::ptrdiff_t>(i * config.n_classes));
  }
  return r;
}

Gradients model_backward(const ModelConfig& config, const Parameters& params, const ForwardCache& cache,
                         std::span<const std::size_t> true_classes, std::size_t threads) {
  if (cache.params != &params || cache.params_generation != params.generation) {
    throw ContractError("model_backward: forward cache is stale (parameters changed since the forward pass)");
  }
  if (true_classes.size() != cache.items.size() || cache.items.empty()) {
    throw DomainError("model_backward: need one label per batch item");
  }
  const double scale = 1.0 / static_cast<double>(cache.items.size());
  std::vector<Gradients> per_item(cache.items.size());
  parallel_for(cache.items.size(), threads, [&](std::size_t i) {
    per_item[i] = backward_item(config, params, cache.items[i], true_classes[i], scale);
  });
  Gradients total = Parameters::zeros(config);
  for (const auto& g : per_item) accumulate(total, g);
  return total;
}

double mean_loss(const Tensor& probs, std::span<const std::size_t> true_classes) {
  if (probs.rank() != 2 || probs.dim(0) != true_classes.size()) throw ShapeError("mean_loss: shape mismatch");
  const std::size_t n = probs.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < true_classes.size(); ++i) {
    if (true_classes[i] >= n) throw DomainError("mean_loss: class index out of range");
    total += -std::log(std::max(probs[i * n + true_classes[i]], kProbabilityFloor));
  }
  return total / static_cast<double>(true_classes.size());
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw DomainError("argmax of empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace amq::nn
