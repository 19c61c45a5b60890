#pragma once

// Single-item layer kernels and their backward passes. Feature maps are
// C x H x W; batching happens one level up in model.hpp.

#include <cstdint>
#include <vector>

#include "amq/rng.hpp"
#include "amq/tensor.hpp"

namespace amq::nn {

enum class Mode { Train, Eval };

// Output extent of a strided window; throws ShapeError when the window
// does not tile the padded input exactly.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

// Cross-correlation with zero padding:
//   out[o, y, x] = bias[o] + sum_{c, i, j} in[c, y*stride + i - pad, x*stride + j - pad] * w[o, c, i, j]
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride, std::size_t pad);

struct Conv2dGrads {
  Tensor input;  // empty when not requested
  Tensor weights;
  Tensor bias;
};

// Accumulates nothing in place; returns fresh gradient tensors.
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_output, std::size_t stride,
                            std::size_t pad, bool need_input_grad = true);

struct PoolResult {
  Tensor output;
  // Flat input index of each output's winning element.
  std::vector<std::uint32_t> argmax;
};

// 2x2 window, stride 2. Ties go to the first element in row-major order.
PoolResult maxpool2x2(const Tensor& input);
Tensor maxpool2x2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                           const Tensor& grad_output);

Tensor relu(const Tensor& input);
// Gradient passes where the forward input was strictly positive.
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

struct DropoutResult {
  Tensor output;
  // Per-element multiplier: 0 or 1/(1-rate). Empty in eval mode.
  std::vector<double> mask;
};

// Inverted dropout. Eval mode returns the input unchanged. Throws
// DomainError unless 0 <= rate < 1.
DropoutResult dropout(const Tensor& input, double rate, Mode mode, Rng& rng);
Tensor dropout_backward(const std::vector<double>& mask, const Tensor& grad_output);

// out = weights (m x n) * input (n) + bias (m). Input of any shape is read
// as a flat vector of n elements.
Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
DenseGrads fully_connected_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_output);

// Max-subtracted softmax over a flat vector of at least two logits.
Tensor softmax(const Tensor& logits);

inline constexpr double kProbabilityFloor = 1e-12;

// -ln(max(probs[true_class], 1e-12)).
double cross_entropy(const Tensor& probs, std::size_t true_class);

}  // namespace amq::nn
