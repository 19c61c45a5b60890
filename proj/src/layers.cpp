#include "amq/layers.hpp"

#include <algorithm>
#include <cmath>

#include "amq/errors.hpp"

namespace amq::nn {

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (kernel == 0 || stride == 0) throw ShapeError("kernel and stride must be positive");
  const std::size_t padded = in + 2 * pad;
  if (padded < kernel) throw ShapeError("kernel larger than padded input");
  if ((padded - kernel) % stride != 0) {
    throw ShapeError("window does not tile input: (" + std::to_string(in) + " + 2*" + std::to_string(pad) + " - " +
                     std::to_string(kernel) + ") not divisible by stride " + std::to_string(stride));
  }
  return (padded - kernel) / stride + 1;
}

namespace {

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t out_channels, kernel;
  std::size_t out_height, out_width;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& weights, std::size_t stride, std::size_t pad) {
  if (input.rank() != 3) throw ShapeError("conv2d input must be CxHxW, got " + shape_string(input.shape()));
  if (weights.rank() != 4 || weights.dim(1) != input.dim(0) || weights.dim(2) != weights.dim(3)) {
    throw ShapeError("conv2d weights " + shape_string(weights.shape()) + " incompatible with input " +
                     shape_string(input.shape()));
  }
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), weights.dim(0), weights.dim(2), 0, 0};
  g.out_height = conv_output_extent(g.height, g.kernel, stride, pad);
  g.out_width = conv_output_extent(g.width, g.kernel, stride, pad);
  return g;
}

// Output columns [lo, hi) whose tap at kernel offset `k` lands inside [0, in).
void valid_range(std::size_t k, std::size_t in, std::size_t out, std::size_t stride, std::size_t pad,
                 std::size_t& lo, std::size_t& hi) {
  // ox*stride + k - pad >= 0  and  <= in - 1
  lo = k >= pad ? 0 : (pad - k + stride - 1) / stride;
  const long top = static_cast<long>(in) - 1 + static_cast<long>(pad) - static_cast<long>(k);
  hi = top < 0 ? 0 : std::min(out, static_cast<std::size_t>(top) / stride + 1);
  if (lo > hi) lo = hi;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride, std::size_t pad) {
  const auto g = conv_geometry(input, weights, stride, pad);
  if (bias.size() != g.out_channels) throw ShapeError("conv2d bias size mismatch");

  Tensor out({g.out_channels, g.out_height, g.out_width});
  const double* in = input.data().data();
  const double* w = weights.data().data();
  double* o = out.data().data();
  const std::size_t plane = g.out_height * g.out_width;

  for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
    double* out_plane = o + oc * plane;
    std::fill(out_plane, out_plane + plane, bias[oc]);
    for (std::size_t c = 0; c < g.channels; ++c) {
      const double* in_plane = in + c * g.height * g.width;
      for (std::size_t ky = 0; ky < g.kernel; ++ky) {
        std::size_t y_lo, y_hi;
        valid_range(ky, g.height, g.out_height, stride, pad, y_lo, y_hi);
        for (std::size_t kx = 0; kx < g.kernel; ++kx) {
          const double wv = w[((oc * g.channels + c) * g.kernel + ky) * g.kernel + kx];
          std::size_t x_lo, x_hi;
          valid_range(kx, g.width, g.out_width, stride, pad, x_lo, x_hi);
          for (std::size_t oy = y_lo; oy < y_hi; ++oy) {
            const double* in_row = in_plane + (oy * stride + ky - pad) * g.width;
            double* out_row = out_plane + oy * g.out_width;
            if (stride == 1) {
              const double* src = in_row + kx - pad;
              for (std::size_t ox = x_lo; ox < x_hi; ++ox) out_row[ox] += wv * src[ox];
            } else {
              for (std::size_t ox = x_lo; ox < x_hi; ++ox) out_row[ox] += wv * in_row[ox * stride + kx - pad];
            }
          }
        }
      }
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_output, std::size_t stride,
                            std::size_t pad, bool need_input_grad) {
  const auto g = conv_geometry(input, weights, stride, pad);
  if (grad_output.shape() != Shape{g.out_channels, g.out_height, g.out_width}) {
    throw ShapeError("conv2d_backward: gradient shape " + shape_string(grad_output.shape()) + " mismatch");
  }
  Conv2dGrads grads{need_input_grad ? Tensor(input.shape()) : Tensor(), Tensor(weights.shape()),
                    Tensor({g.out_channels})};
  const double* in = input.data().data();
  const double* w = weights.data().data();
  const double* go = grad_output.data().data();
  double* gw = grads.weights.data().data();
  double* gi = need_input_grad ? grads.input.data().data() : nullptr;
  const std::size_t plane = g.out_height * g.out_width;

  for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
    const double* go_plane = go + oc * plane;
    double bsum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) bsum += go_plane[i];
    grads.bias[oc] = bsum;
    for (std::size_t c = 0; c < g.channels; ++c) {
      const double* in_plane = in + c * g.height * g.width;
      double* gi_plane = gi ? gi + c * g.height * g.width : nullptr;
      for (std::size_t ky = 0; ky < g.kernel; ++ky) {
        std::size_t y_lo, y_hi;
        valid_range(ky, g.height, g.out_height, stride, pad, y_lo, y_hi);
        for (std::size_t kx = 0; kx < g.kernel; ++kx) {
          const std::size_t widx = ((oc * g.channels + c) * g.kernel + ky) * g.kernel + kx;
          const double wv = w[widx];
          std::size_t x_lo, x_hi;
          valid_range(kx, g.width, g.out_width, stride, pad, x_lo, x_hi);
          double acc = 0.0;
          for (std::size_t oy = y_lo; oy < y_hi; ++oy) {
            const double* in_row = in_plane + (oy * stride + ky - pad) * g.width;
            const double* go_row = go_plane + oy * g.out_width;
            if (stride == 1) {
              const double* src = in_row + kx - pad;
              for (std::size_t ox = x_lo; ox < x_hi; ++ox) acc += go_row[ox] * src[ox];
            } else {
              for (std::size_t ox = x_lo; ox < x_hi; ++ox) acc += go_row[ox] * in_row[ox * stride + kx - pad];
            }
          }
          gw[widx] = acc;
          if (!gi_plane) continue;
          for (std::size_t oy = y_lo; oy < y_hi; ++oy) {
            double* gi_row = gi_plane + (oy * stride + ky - pad) * g.width;
            const double* go_row = go_plane + oy * g.out_width;
            if (stride == 1) {
              double* dst = gi_row + kx - pad;
              for (std::size_t ox = x_lo; ox < x_hi; ++ox) dst[ox] += wv * go_row[ox];
            } else {
              for (std::size_t ox = x_lo; ox < x_hi; ++ox) gi_row[ox * stride + kx - pad] += wv * go_row[ox];
            }
          }
        }
      }
    }
  }
  return grads;
}

PoolResult maxpool2x2(const Tensor& input) {
  if (input.rank() != 3) throw ShapeError("maxpool2x2 input must be CxHxW, got " + shape_string(input.shape()));
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("maxpool2x2 needs even spatial dims, got " + shape_string(input.shape()));
  PoolResult r{Tensor({c, h / 2, w / 2}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; y += 2) {
      for (std::size_t x = 0; x < w; x += 2) {
        const std::size_t base = (ch * h + y) * w + x;
        const std::size_t cand[4] = {base, base + 1, base + w, base + w + 1};
        std::size_t best = cand[0];
        for (std::size_t k = 1; k < 4; ++k) {
          if (input[cand[k]] > input[best]) best = cand[k];
        }
        r.output[o] = input[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
        ++o;
      }
    }
  }
  return r;
}

Tensor maxpool2x2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                           const Tensor& grad_output) {
  if (argmax.size() != grad_output.size()) throw ShapeError("maxpool2x2_backward: argmax size mismatch");
  Tensor grad(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad[argmax[i]] += grad_output[i];
  return grad;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
  if (input.size() != grad_output.size()) throw ShapeError("relu_backward: size mismatch");
  Tensor grad = grad_output;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(input[i] > 0.0)) grad[i] = 0.0;
  }
  return grad;
}

DropoutResult dropout(const Tensor& input, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw DomainError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  DropoutResult r{input, {}};
  if (mode == Mode::Eval) return r;
  const double keep_scale = 1.0 / (1.0 - rate);
  r.mask.resize(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    r.mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    r.output[i] *= r.mask[i];
  }
  return r;
}

Tensor dropout_backward(const std::vector<double>& mask, const Tensor& grad_output) {
  if (mask.empty()) return grad_output;
  if (mask.size() != grad_output.size()) throw ShapeError("dropout_backward: mask size mismatch");
  Tensor grad = grad_output;
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= mask[i];
  return grad;
}

Tensor fully_connected(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2 || weights.dim(1) != input.size() || bias.size() != weights.dim(0)) {
    throw ShapeError("fully_connected: weights " + shape_string(weights.shape()) + ", bias " +
                     shape_string(bias.shape()) + " incompatible with " + std::to_string(input.size()) + " inputs");
  }
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  Tensor out({m});
  const double* x = input.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = weights.data().data() + i * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    out[i] = acc + bias[i];
  }
  return out;
}

DenseGrads fully_connected_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_output) {
  if (weights.rank() != 2 || weights.dim(1) != input.size() || grad_output.size() != weights.dim(0)) {
    throw ShapeError("fully_connected_backward: shape mismatch");
  }
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  DenseGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({m})};
  const double* x = input.data().data();
  double* gx = g.input.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double gi = grad_output[i];
    g.bias[i] = gi;
    const double* row = weights.data().data() + i * n;
    double* grow = g.weights.data().data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      grow[j] = gi * x[j];
      gx[j] += row[j] * gi;
    }
  }
  return g;
}

Tensor softmax(const Tensor& logits) {
  if (logits.size() < 2) throw ShapeError("softmax needs at least two logits");
  const auto v = logits.data();
  const double peak = *std::max_element(v.begin(), v.end());
  Tensor out({logits.size()});
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - peak);
    total += out[i];
  }
  for (auto& p : out.data()) p /= total;
  return out;
}

double cross_entropy(const Tensor& probs, std::size_t true_class) {
  if (true_class >= probs.size()) throw DomainError("cross_entropy: class index out of range");
  return -std::log(std::max(probs[true_class], kProbabilityFloor));
}

}  // namespace amq::nn
