// Copyright 2026 The Brighteye Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <vector>

#include "brighteye/tensor.hpp"
#include "test_util.hpp"

namespace {

using namespace brighteye;
using brighteye::testing::grad_close;
using brighteye::testing::numeric_gradient;
using T = Tensor<double>;

T random_leaf(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = u(rng);
  return T::from_data(std::move(shape), std::move(v), true);
}

// Checks d/dleaf of sum(op(leaves) * w) for a fixed random w against central
// differences.
void check_op(const std::vector<T>& leaves, const std::function<T(const std::vector<T>&)>& op,
              std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  T probe;
  {
    NoGradGuard g;
    probe = op(leaves);
  }
  const T weights = random_leaf(probe.shape(), rng);
  auto loss_of = [&]() { return sum(mul(op(leaves), weights)); };
  for (auto leaf : leaves) leaf.zero_grad();
  backward(loss_of());
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const auto numeric = numeric_gradient<double>(leaves[li], [&] { return loss_of().item(); }, 1e-6);
    const auto analytic = leaves[li].grad();
    ASSERT_EQ(analytic.size(), numeric.size());
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      EXPECT_TRUE(grad_close(analytic[i], numeric[i], 1e-6, 1e-8))
          << "leaf " << li << " element " << i << ": analytic " << analytic[i] << " numeric " << numeric[i];
    }
  }
}

TEST(TensorOps, MatmulValues) {
  const auto a = T::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto b = T::from_data({3, 2}, {7, 8, 9, 10, 11, 12});
  const auto c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 2}));
  EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()), (std::vector<double>{58, 64, 139, 154}));
}

TEST(TensorOps, ShapeMismatchThrows) {
  const auto a = T::zeros({2, 3});
  EXPECT_THROW(matmul(a, a), DimensionError);
  EXPECT_THROW(add(a, T::zeros({3, 2})), DimensionError);
  EXPECT_THROW(reshape(a, {4}), DimensionError);
  EXPECT_THROW(slice(a, 1, 2, 2), DimensionError);
  EXPECT_THROW(softmax(a, 2), DimensionError);
  EXPECT_THROW(T::from_data({2, 2}, {1, 2, 3}), DimensionError);
}

TEST(TensorOps, NonFiniteValuesRejected) {
  EXPECT_THROW(T::from_data({1}, {std::nan("")}), NumericError);
  EXPECT_THROW(log(T::from_data({1}, {0.0})), NumericError);
}

TEST(TensorOps, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(3);
  const auto x = random_leaf({4, 7}, rng, -30, 30);
  const auto s = softmax(x, 1);
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 7; ++c) total += s.at(r, c);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(TensorOps, LayerNormNormalizesRows) {
  const auto x = T::from_data({2, 4}, {1, 2, 3, 4, -5, 0, 5, 10});
  const auto y = layer_norm(x, T::filled({4}, 1.0), T::zeros({4}));
  for (std::size_t r = 0; r < 2; ++r) {
    double mu = 0, var = 0;
    for (std::size_t c = 0; c < 4; ++c) mu += y.at(r, c);
    mu /= 4;
    for (std::size_t c = 0; c < 4; ++c) var += (y.at(r, c) - mu) * (y.at(r, c) - mu);
    EXPECT_NEAR(mu, 0.0, 1e-12);
    EXPECT_NEAR(var / 4, 1.0, 1e-4);
  }
}

TEST(TensorGradients, Elementwise) {
  std::mt19937_64 rng(11);
  const auto a = random_leaf({3, 4}, rng), b = random_leaf({3, 4}, rng);
  check_op({a, b}, [](const auto& v) { return add(v[0], v[1]); });
  check_op({a, b}, [](const auto& v) { return sub(v[0], v[1]); });
  check_op({a, b}, [](const auto& v) { return mul(v[0], v[1]); });
  check_op({a}, [](const auto& v) { return scale(v[0], 2.5); });
  check_op({a}, [](const auto& v) { return gelu(v[0]); });
}

TEST(TensorGradients, ReluAwayFromKink) {
  auto x = T::from_data({6}, {-0.9, -0.4, -0.1, 0.2, 0.5, 1.3}, true);
  check_op({x}, [](const auto& v) { return relu(v[0]); });
}

TEST(TensorGradients, LogAndClamp) {
  std::mt19937_64 rng(12);
  const auto x = random_leaf({5}, rng, 0.1, 0.9);
  check_op({x}, [](const auto& v) { return log(v[0]); });
  auto y = T::from_data({4}, {0.05, 0.3, 0.6, 0.95}, true);
  check_op({y}, [](const auto& v) { return clamp(v[0], 0.1, 0.9); });
}

TEST(TensorGradients, MatmulTransposeReshape) {
  std::mt19937_64 rng(13);
  const auto a = random_leaf({3, 5}, rng), b = random_leaf({5, 2}, rng);
  check_op({a, b}, [](const auto& v) { return matmul(v[0], v[1]); });
  check_op({a}, [](const auto& v) { return transpose(v[0]); });
  check_op({a}, [](const auto& v) { return reshape(v[0], {5, 3}); });
}

TEST(TensorGradients, BiasSumMean) {
  std::mt19937_64 rng(14);
  const auto x = random_leaf({4, 3}, rng), bias = random_leaf({3}, rng);
  check_op({x, bias}, [](const auto& v) { return add_bias(v[0], v[1]); });
  check_op({x}, [](const auto& v) { return reshape(sum(v[0]), {1}); });
  check_op({x}, [](const auto& v) { return reshape(mean(v[0]), {1}); });
}

TEST(TensorGradients, SoftmaxBothAxes) {
  std::mt19937_64 rng(15);
  const auto x = random_leaf({3, 4}, rng, -2, 2);
  check_op({x}, [](const auto& v) { return softmax(v[0], 1); });
  check_op({x}, [](const auto& v) { return softmax(v[0], 0); });
}

TEST(TensorGradients, LayerNormVectorAndScalarAffine) {
  std::mt19937_64 rng(16);
  const auto x = random_leaf({3, 5}, rng, -2, 2);
  const auto g = random_leaf({5}, rng, 0.5, 1.5), b = random_leaf({5}, rng);
  check_op({x, g, b}, [](const auto& v) { return layer_norm(v[0], v[1], v[2]); });
  const auto g1 = random_leaf({1}, rng, 0.5, 1.5), b1 = random_leaf({1}, rng);
  check_op({x, g1, b1}, [](const auto& v) { return layer_norm(v[0], v[1], v[2]); });
}

TEST(TensorGradients, ConcatSlice) {
  std::mt19937_64 rng(17);
  const auto a = random_leaf({2, 3}, rng), b = random_leaf({2, 2}, rng), c = random_leaf({1, 3}, rng);
  check_op({a, b}, [](const auto& v) { return concat(std::vector<T>{v[0], v[1]}, 1); });
  check_op({a, c}, [](const auto& v) { return concat(std::vector<T>{v[0], v[1]}, 0); });
  check_op({a}, [](const auto& v) { return slice(v[0], 1, 1, 3); });
  check_op({a}, [](const auto& v) { return slice(v[0], 0, 1, 2); });
}

TEST(Autodiff, SharedInputAccumulates) {
  auto x = T::from_data({1}, {3.0}, true);
  backward(sum(add(mul(x, x), scale(x, 2.0))));  // d/dx (x^2 + 2x) = 2x + 2
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
}

TEST(Autodiff, SecondBackwardOnSameLossThrows) {
  auto x = T::from_data({1}, {1.0}, true);
  const auto loss = sum(scale(x, 3.0));
  backward(loss);
  x.zero_grad();
  EXPECT_THROW(backward(loss), AutodiffError);
}

TEST(Autodiff, UnresetGradientThrows) {
  auto x = T::from_data({1}, {1.0}, true);
  backward(sum(scale(x, 3.0)));
  EXPECT_THROW(backward(sum(scale(x, 2.0))), AutodiffError);
  x.zero_grad();
  backward(sum(scale(x, 2.0)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
}

TEST(Autodiff, NoGradGuardStopsRecording) {
  auto x = T::from_data({1}, {1.0}, true);
  {
    NoGradGuard g;
    const auto y = scale(x, 2.0);
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(y.is_leaf());
  }
  EXPECT_TRUE(scale(x, 2.0).requires_grad());
}

TEST(Autodiff, IntermediatesAreReadOnly) {
  auto x = T::from_data({2}, {1.0, 2.0}, true);
  auto y = scale(x, 2.0);
  EXPECT_THROW(y.mutable_data(), AutodiffError);
}

TEST(Autodiff, TraceIsTopologicalAndUnique) {
  std::mt19937_64 rng(5);
  const auto a = random_leaf({2, 2}, rng), b = random_leaf({2, 2}, rng);
  const auto h = matmul(a, b);
  const auto loss = sum(add(softmax(h, 1), relu(h)));
  const auto rec = trace(loss);
  std::set<const detail::Node<double>*> seen;
  for (const auto& node : rec.nodes) {
    EXPECT_TRUE(seen.insert(node.get()).second);
    for (const auto& parent : node->parents) EXPECT_FALSE(seen.count(parent.get())) << "parent before child";
  }
  EXPECT_EQ(rec.nodes.front().get(), loss.node().get());
  EXPECT_EQ(rec.size(), 7u);  // loss, add, softmax, relu, matmul, a, b
}

}  // namespace
