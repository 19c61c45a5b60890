#include <gtest/gtest.h>

#include <cmath>

#include "amq/errors.hpp"
#include "amq/layers.hpp"
#include "test_support.hpp"

namespace amq::nn {
namespace {

using testing::random_tensor;

// Zero-padded input copy, then a plain sliding window.
Tensor naive_conv(const Tensor& in, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const std::size_t c = in.dim(0), h = in.dim(1), wd = in.dim(2);
  const std::size_t o = w.dim(0), k = w.dim(2);
  const std::size_t ph = h + 2 * pad, pw = wd + 2 * pad;
  std::vector<double> padded(c * ph * pw, 0.0);
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < wd; ++x) padded[(ci * ph + y + pad) * pw + x + pad] = in[(ci * h + y) * wd + x];
  const std::size_t oh = (ph - k) / stride + 1, ow = (pw - k) / stride + 1;
  Tensor out({o, oh, ow});
  for (std::size_t oc = 0; oc < o; ++oc)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = b[oc];
        for (std::size_t ci = 0; ci < c; ++ci)
          for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
              s += padded[(ci * ph + y * stride + i) * pw + x * stride + j] * w[((oc * c + ci) * k + i) * k + j];
        out[(oc * oh + y) * ow + x] = s;
      }
  return out;
}

void expect_close(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "element " << i;
}

TEST(Conv2d, MatchesNaiveOracle) {
  struct Case {
    std::size_t c, h, w, o, k, stride, pad;
  };
  for (const Case& cs : {Case{1, 5, 5, 1, 3, 1, 1}, Case{3, 8, 6, 4, 3, 1, 1}, Case{2, 7, 7, 3, 3, 2, 0},
                         Case{2, 6, 6, 2, 1, 1, 0}, Case{1, 4, 4, 2, 4, 1, 0}}) {
    const Tensor in = random_tensor({cs.c, cs.h, cs.w}, 1, -1, 1);
    const Tensor w = random_tensor({cs.o, cs.c, cs.k, cs.k}, 2, -1, 1);
    const Tensor b = random_tensor({cs.o}, 3, -1, 1);
    expect_close(conv2d(in, w, b, cs.stride, cs.pad), naive_conv(in, w, b, cs.stride, cs.pad), 1e-12);
  }
}

TEST(Conv2d, HandComputedIdentityKernel) {
  Tensor in({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor w({1, 1, 3, 3}, 0.0);
  w[4] = 1.0;
  const Tensor out = conv2d(in, w, Tensor({1}, 0.5), 1, 1);
  EXPECT_EQ(out, Tensor({1, 2, 2}, std::vector<double>{1.5, 2.5, 3.5, 4.5}));
}

TEST(Conv2d, ShapeErrors) {
  EXPECT_EQ(conv_output_extent(64, 3, 1, 1), 64u);
  EXPECT_EQ(conv_output_extent(7, 3, 2, 0), 3u);
  EXPECT_THROW(conv_output_extent(6, 3, 2, 0), ShapeError);
  EXPECT_THROW(conv_output_extent(2, 5, 1, 0), ShapeError);
  const Tensor in = random_tensor({2, 4, 4}, 1);
  EXPECT_THROW(conv2d(in, Tensor({1, 3, 3, 3}), Tensor({1}), 1, 1), ShapeError);
  EXPECT_THROW(conv2d(in, Tensor({1, 2, 3, 3}), Tensor({2}), 1, 1), ShapeError);
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

TEST(Conv2dBackward, MatchesFiniteDifferences) {
  const Tensor in = random_tensor({2, 5, 5}, 4, -1, 1);
  Tensor w = random_tensor({3, 2, 3, 3}, 5, -1, 1);
  const Tensor b = random_tensor({3}, 6, -1, 1);
  const Tensor g = random_tensor({3, 5, 5}, 7, -1, 1);
  const auto grads = conv2d_backward(in, w, g, 1, 1);
  // The loss dot(g, conv(in, w, b)) is linear, so central differences are exact up to roundoff.
  const double h = 1e-3;
  for (std::size_t i = 0; i < in.size(); ++i) {
    Tensor p = in, m = in;
    p[i] += h;
    m[i] -= h;
    EXPECT_NEAR(grads.input[i], (dot(g, conv2d(p, w, b, 1, 1)) - dot(g, conv2d(m, w, b, 1, 1))) / (2 * h), 1e-8);
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    Tensor p = w, m = w;
    p[i] += h;
    m[i] -= h;
    EXPECT_NEAR(grads.weights[i], (dot(g, conv2d(in, p, b, 1, 1)) - dot(g, conv2d(in, m, b, 1, 1))) / (2 * h), 1e-8);
  }
  for (std::size_t o = 0; o < 3; ++o) {
    double s = 0.0;
    for (std::size_t k = 0; k < 25; ++k) s += g[o * 25 + k];
    EXPECT_NEAR(grads.bias[o], s, 1e-12);
  }
  EXPECT_TRUE(conv2d_backward(in, w, g, 1, 1, false).input.empty());
}

TEST(MaxPool, ValuesArgmaxAndTies) {
  Tensor in({1, 2, 4}, std::vector<double>{1, 5, 7, 7, 3, 2, 7, 7});
  const auto r = maxpool2x2(in);
  EXPECT_EQ(r.output, Tensor({1, 1, 2}, std::vector<double>{5, 7}));
  EXPECT_EQ(r.argmax, (std::vector<std::uint32_t>{1, 2}));
  const Tensor back = maxpool2x2_backward(in.shape(), r.argmax, Tensor({1, 1, 2}, std::vector<double>{10, 20}));
  EXPECT_EQ(back, Tensor({1, 2, 4}, std::vector<double>{0, 10, 20, 0, 0, 0, 0, 0}));
  EXPECT_THROW(maxpool2x2(Tensor({1, 3, 4})), ShapeError);
}

TEST(Relu, ForwardAndBackward) {
  Tensor in({4}, std::vector<double>{-1, 0, 0.5, 2});
  EXPECT_EQ(relu(in), Tensor({4}, std::vector<double>{0, 0, 0.5, 2}));
  EXPECT_EQ(relu_backward(in, Tensor({4}, 3.0)), Tensor({4}, std::vector<double>{0, 0, 3, 3}));
}

TEST(Dropout, EvalIsIdentity) {
  Rng rng(1);
  const Tensor in = random_tensor({3, 4, 4}, 1);
  const auto r = dropout(in, 0.5, Mode::Eval, rng);
  EXPECT_EQ(r.output, in);
  EXPECT_TRUE(r.mask.empty());
  EXPECT_EQ(rng.next(), Rng(1).next());
}

TEST(Dropout, TrainPreservesMeanAndMasksConsistently) {
  Rng rng(2);
  const Tensor in({100000}, 1.0);
  const auto r = dropout(in, 0.25, Mode::Train, rng);
  double sum = 0.0;
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    EXPECT_EQ(r.output[i], r.mask[i]);
    EXPECT_TRUE(r.mask[i] == 0.0 || r.mask[i] == 1.0 / 0.75);
    zeros += r.mask[i] == 0.0;
    sum += r.output[i];
  }
  EXPECT_NEAR(sum / in.size(), 1.0, 0.01);
  EXPECT_NEAR(static_cast<double>(zeros) / in.size(), 0.25, 0.005);
  EXPECT_EQ(dropout_backward(r.mask, in).data()[0], r.mask[0]);
  Rng rng0(3);
  EXPECT_EQ(dropout(in, 0.0, Mode::Train, rng0).output, in);
  EXPECT_THROW(dropout(in, 1.0, Mode::Train, rng0), DomainError);
  EXPECT_THROW(dropout(in, -0.1, Mode::Train, rng0), DomainError);
}

TEST(FullyConnected, HandComputedAndGradients) {
  Tensor w({2, 3}, std::vector<double>{1, 2, 3, -1, 0, 1});
  Tensor b({2}, std::vector<double>{0.5, -0.5});
  Tensor x({3, 1, 1}, std::vector<double>{1, 1, 2});
  EXPECT_EQ(fully_connected(x, w, b), Tensor({2}, std::vector<double>{9.5, 0.5}));
  const auto g = fully_connected_backward(x, w, Tensor({2}, std::vector<double>{1, 2}));
  EXPECT_EQ(g.input.shape(), x.shape());
  EXPECT_EQ(g.input, Tensor({3, 1, 1}, std::vector<double>{-1, 2, 5}));
  EXPECT_EQ(g.weights, Tensor({2, 3}, std::vector<double>{1, 1, 2, 2, 2, 4}));
  EXPECT_EQ(g.bias, Tensor({2}, std::vector<double>{1, 2}));
  EXPECT_THROW(fully_connected(Tensor({4}), w, b), ShapeError);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  const Tensor z = random_tensor({7}, 9, -3, 3);
  const Tensor p = softmax(z);
  double s = 0.0;
  for (double v : p.data()) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
  Tensor shifted = z;
  for (auto& v : shifted.data()) v += 123.0;
  expect_close(softmax(shifted), p, 1e-12);
  const Tensor big = softmax(Tensor({2}, std::vector<double>{1000, 0}));
  EXPECT_EQ(big[0], 1.0);
  EXPECT_GE(big[1], 0.0);
  EXPECT_LT(big[1], 1e-300);
  EXPECT_TRUE(big.all_finite());
  EXPECT_THROW(softmax(Tensor({1})), ShapeError);
}

TEST(CrossEntropy, UniformAndFloor) {
  EXPECT_NEAR(cross_entropy(Tensor({5}, 0.2), 3), std::log(5.0), 1e-12);
  EXPECT_NEAR(cross_entropy(Tensor({2}, std::vector<double>{1.0, 0.0}), 1), -std::log(1e-12), 1e-9);
  EXPECT_EQ(cross_entropy(Tensor({2}, std::vector<double>{1.0, 0.0}), 0), 0.0);
  EXPECT_ANY_THROW(cross_entropy(Tensor({2}, 0.5), 2));
}

TEST(Conv2d, WorkedExamples) {
  Tensor in({1, 3, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  EXPECT_EQ(conv2d(in, Tensor({1, 1, 3, 3}, 1.0), Tensor({1}, 0.0), 1, 0), Tensor({1, 1, 1}, std::vector<double>{45}));
  EXPECT_EQ(conv2d(in, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}, 0.0), 1, 0), in);
  const Tensor zero = conv2d(random_tensor({2, 4, 4}, 8), Tensor({3, 2, 3, 3}, 0.0),
                             Tensor({3}, std::vector<double>{1, -2, 0.5}), 1, 1);
  for (std::size_t i = 0; i < zero.size(); ++i) EXPECT_EQ(zero[i], (std::vector<double>{1, -2, 0.5})[i / 16]);
}

TEST(MaxPool, WorkedExamples) {
  EXPECT_EQ(maxpool2x2(Tensor({1, 2, 2}, std::vector<double>{1, 2, 3, 4})).output, Tensor({1, 1, 1}, 4.0));
  const auto tie = maxpool2x2(Tensor({1, 2, 2}, 5.0));
  EXPECT_EQ(tie.output, Tensor({1, 1, 1}, 5.0));
  EXPECT_EQ(tie.argmax, (std::vector<std::uint32_t>{0}));
  EXPECT_EQ(maxpool2x2(Tensor({2, 4, 6}, 0.7)).output, Tensor({2, 2, 3}, 0.7));
}

TEST(Dropout, MonteCarloMeanAtHalfRate) {
  Rng rng(11);
  const Tensor ones({4}, 1.0);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) sum += dropout(ones, 0.5, Mode::Train, rng).output[0];
  EXPECT_NEAR(sum / 10000, 1.0, 0.05);
}

TEST(FullyConnected, WorkedExamples) {
  const Tensor x({2}, std::vector<double>{3, 7});
  EXPECT_EQ(fully_connected(x, Tensor({2, 2}, 0.0), Tensor({2}, std::vector<double>{0.1, 0.2})),
            Tensor({2}, std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(fully_connected(x, Tensor({2, 2}, std::vector<double>{1, 0, 0, 1}), Tensor({2}, 0.0)), x);
  EXPECT_EQ(fully_connected(Tensor({2}, 1.0), Tensor({2, 2}, std::vector<double>{1, 2, 3, 4}), Tensor({2}, 1.0)),
            Tensor({2}, std::vector<double>{4, 8}));
}

TEST(Softmax, WorkedExamples) {
  EXPECT_EQ(softmax(Tensor({2}, 0.0)), Tensor({2}, 0.5));
  expect_close(softmax(Tensor({2}, std::vector<double>{1000, 0})), softmax(Tensor({2}, std::vector<double>{0, -1000})),
               0.0);
  EXPECT_EQ(relu(Tensor({2}, std::vector<double>{-1, 2})), Tensor({2}, std::vector<double>{0, 2}));
}

}  // namespace
}  // namespace amq::nn
