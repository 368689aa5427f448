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

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "brighteye/checkpoint.hpp"
#include "brighteye/model.hpp"
#include "test_util.hpp"

namespace {

using namespace brighteye;
namespace bt = brighteye::testing;

ModelConfig tiny_config() {
  ModelConfig c;
  c.height = c.width = 16;
  c.patch = 8;
  c.dim = 8;
  c.depth = 1;
  c.heads = 2;
  c.agg_hidden = 6;
  c.mlp_hidden = 12;
  return c;
}

ModelConfig golden_config() {
  ModelConfig c;
  c.height = c.width = 32;
  c.patch = 16;
  c.dim = 16;
  c.depth = 2;
  c.heads = 2;
  c.agg_hidden = 16;
  c.mlp_hidden = 64;
  return c;
}

std::size_t counted_parameters(const ModelConfig& c) {
  std::size_t n = 0;
  for (const auto& p : BrighteyeModel<float>::zeros(c).parameters()) n += p.tensor.numel();
  return n;
}

TEST(Patchify, LayoutMatchesRowMajorPatches) {
  const auto img = bt::random_image<double>(16, 24, 1);
  const auto p = patchify(img, 8);
  ASSERT_EQ(p.shape(), (Shape{6, 192}));
  // patch 4 is row 1, column 1; element (dy=2, dx=5, c=1)
  EXPECT_EQ(p.at(4, (2 * 8 + 5) * 3 + 1), img[((8 + 2) * 24 + 8 + 5) * 3 + 1]);
  EXPECT_THROW(patchify(img, 5), DimensionError);
}

TEST(Patchify, RoundTrip) {
  const auto img = bt::random_image<double>(32, 16, 2);
  const auto back = unpatchify(patchify(img, 8), 32, 16, 8);
  EXPECT_EQ(back.shape(), img.shape());
  EXPECT_TRUE(std::equal(back.data().begin(), back.data().end(), img.data().begin()));
}

TEST(ModelConfig, ParameterCountClosedForm) {
  for (auto c : {tiny_config(), golden_config(), ModelConfig{}, ModelConfig::full_scale()}) {
    EXPECT_EQ(parameter_count(c), counted_parameters(c));
  }
  auto g = tiny_config();
  g.activation = Activation::gelu;
  EXPECT_EQ(parameter_count(g), parameter_count(tiny_config()));
}

TEST(ModelConfig, ValidationRejectsBadShapes) {
  auto c = tiny_config();
  c.patch = 5;
  EXPECT_THROW(c.validate(), DimensionError);
  c = tiny_config();
  c.heads = 3;
  EXPECT_THROW(c.validate(), DimensionError);
  EXPECT_EQ(ModelConfig::full_scale().num_patches(), 1024u);
}

TEST(ModelInit, TruncatedNormalAndDeterministic) {
  const auto a = BrighteyeModel<float>::initialize(golden_config(), 9);
  const auto b = BrighteyeModel<float>::initialize(golden_config(), 9);
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin()));
    for (float v : pa[i].tensor.data()) {
      if (pa[i].name.ends_with(".gain")) EXPECT_EQ(v, 1.0f);
      else if (pa[i].name.ends_with(".bias")) EXPECT_EQ(v, 0.0f);
      else EXPECT_LE(std::abs(v), 0.04f + 1e-7f);
    }
  }
}

TEST(Forward, MatchesLoopOracle) {
  for (auto act : {Activation::relu, Activation::gelu}) {
    auto c = golden_config();
    c.activation = act;
    auto m = BrighteyeModel<double>::zeros(c);
    bt::randomize(m, 21);
    const auto img = bt::random_image<double>(32, 32, 22);
    const auto out = forward(m, img);
    const auto ref = bt::oracle::forward(m, img);
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_NEAR(out.p_cls[i], ref.p_cls[i], 1e-12);
      EXPECT_NEAR(out.p_agg[i], ref.p_agg[i], 1e-12);
    }
    for (std::size_t i = 0; i < ref.weights.size(); ++i) EXPECT_NEAR(out.patch_weights[i], ref.weights[i], 1e-12);
  }
}

TEST(Forward, GoldenPrediction) {
  // Frozen from the loop oracle for this seed, config and input.
  constexpr double kGoldenPrediction = 0.50067940279106116;
  const auto m = BrighteyeModel<double>::initialize(golden_config(), 1234);
  const auto img = bt::random_image<double>(32, 32, 99);
  const double oracle = bt::oracle::forward(m, img).predict();
  EXPECT_NEAR(oracle, kGoldenPrediction, 1e-12);
  EXPECT_NEAR(predict(m, img), kGoldenPrediction, 1e-12);
}

TEST(Forward, FloatAgreesWithDouble) {
  auto m = BrighteyeModel<double>::zeros(golden_config());
  bt::randomize(m, 5, 0.1);
  const auto img = bt::random_image<double>(32, 32, 6);
  const auto mf = m.cast<float>();
  const auto imgf = Tensor<float>::from_data(img.shape(), std::vector<float>(img.data().begin(), img.data().end()));
  EXPECT_NEAR(predict(mf, imgf), predict(m, img), 1e-5);
}

TEST(Forward, RejectsWrongInputShape) {
  const auto m = BrighteyeModel<double>::zeros(tiny_config());
  EXPECT_THROW(forward(m, bt::random_image<double>(16, 24, 1)), DimensionError);
}

TEST(Forward, ProbabilitiesAreDistributions) {
  const auto m = BrighteyeModel<double>::initialize(golden_config(), 3);
  const auto out = forward(m, bt::random_image<double>(32, 32, 4));
  EXPECT_NEAR(out.p_cls[0] + out.p_cls[1], 1.0, 1e-12);
  EXPECT_NEAR(out.p_agg[0] + out.p_agg[1], 1.0, 1e-12);
  const double p = predict(out);
  EXPECT_GE(p, 0.0);
  EXPECT_LE(p, 1.0);
}

TEST(Aggregation, WeightsFormDistribution) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = BrighteyeModel<double>::zeros(tiny_config());
    bt::randomize(m, 100 + trial, 1.0);
    std::normal_distribution<double> z(0, 3);
    std::vector<double> f(7 * 8);
    for (auto& v : f) v = z(rng);
    const auto r = aggregate_patches(Tensor<double>::from_data({7, 8}, f), m.agg_head);
    double total = 0;
    for (double w : r.weights.data()) {
      EXPECT_GE(w, 0.0);
      total += w;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Aggregation, ZeroHeadIsExactlyUniform) {
  auto c = tiny_config();
  c.dim = 24;
  const auto head = BrighteyeModel<double>::zeros(c).agg_head;
  const auto f = reshape(bt::random_image<double>(5, 8, 1), {5, 24});
  const auto r = aggregate_patches(f, head);
  for (double w : r.weights.data()) EXPECT_EQ(w, 1.0 / 5.0);
}

TEST(Aggregation, PermutationEquivariant) {
  auto m = BrighteyeModel<double>::zeros(tiny_config());
  bt::randomize(m, 44, 1.0);
  std::mt19937_64 rng(45);
  std::normal_distribution<double> z(0, 2);
  std::vector<double> f(6 * 8);
  for (auto& v : f) v = z(rng);
  const std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  std::vector<double> g(f.size());
  for (std::size_t i = 0; i < 6; ++i) std::copy_n(f.begin() + perm[i] * 8, 8, g.begin() + i * 8);
  const auto a = aggregate_patches(Tensor<double>::from_data({6, 8}, f), m.agg_head);
  const auto b = aggregate_patches(Tensor<double>::from_data({6, 8}, g), m.agg_head);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(b.weights[i], a.weights[perm[i]], 1e-14);
  for (std::size_t e = 0; e < 8; ++e) EXPECT_NEAR(b.aggregated[e], a.aggregated[e], 1e-12);
}

TEST(Aggregation, HeadParametersReceiveGradient) {
  auto m = BrighteyeModel<double>::zeros(tiny_config());
  bt::randomize(m, 46, 1.0);
  const auto f = Tensor<double>::from_data({4, 8}, std::vector<double>{
      0.3, -1.2, 0.8, 2.0, -0.5, 0.1, 1.1, -0.7, 1.5, 0.2, -0.3, 0.9, 0.4, -1.0, 0.6, 0.0,
      -0.8, 0.7, 1.9, -0.2, 0.5, 1.3, -1.4, 0.3, 0.0, 0.6, -0.9, 1.2, -1.1, 0.8, 0.2, 1.7});
  const auto r = aggregate_patches(f, m.agg_head);
  backward(sum(mul(r.aggregated, Tensor<double>::from_data({1, 8}, {1, -1, 2, 0.5, -2, 1, 0.3, -0.7}))));
  auto nonzero = [](const Tensor<double>& t) {
    return std::any_of(t.grad().begin(), t.grad().end(), [](double v) { return v != 0.0; });
  };
  EXPECT_TRUE(nonzero(m.agg_head.proj1.weight));
  EXPECT_TRUE(nonzero(m.agg_head.proj2.weight));
  EXPECT_TRUE(nonzero(m.agg_head.norm2.gain));
}

TEST(ModelGradient, TinyModelMatchesFiniteDifferences) {
  auto m = BrighteyeModel<double>::zeros(tiny_config());
  bt::randomize(m, 77);
  const auto img = bt::random_image<double>(16, 16, 78);
  auto loss_of = [&] {
    const auto out = forward(m, img);
    return sum(add(log(out.p_cls), log(out.p_agg)));
  };
  backward(loss_of());
  for (const auto& p : m.parameters()) {
    const auto numeric = bt::numeric_gradient<double>(p.tensor, [&] { return loss_of().item(); }, 1e-6);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      ASSERT_TRUE(bt::grad_close(p.tensor.grad()[i], numeric[i]))
          << p.name << "[" << i << "] analytic " << p.tensor.grad()[i] << " numeric " << numeric[i];
    }
  }
}

TEST(Checkpoint, RoundTripPreservesParametersAndMetadata) {
  const auto m = BrighteyeModel<float>::initialize(golden_config(), 17);
  std::stringstream buf;
  write_checkpoint(buf, m, {{"task", "glaucoma"}, {"seed", "3"}});
  const auto ck = read_checkpoint<float>(buf);
  EXPECT_EQ(ck.model.config, m.config);
  EXPECT_EQ(ck.metadata.at("task"), "glaucoma");
  const auto a = m.parameters(), b = ck.model.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_TRUE(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin()));
  }
  std::stringstream again;
  write_checkpoint(again, ck.model, ck.metadata);
  EXPECT_EQ(again.str(), buf.str());
}

TEST(Checkpoint, CorruptInputsRejected) {
  const auto m = BrighteyeModel<float>::initialize(tiny_config(), 1);
  std::stringstream buf;
  write_checkpoint(buf, m);
  const std::string bytes = buf.str();
  auto read = [](const std::string& s) {
    std::stringstream in(s);
    return read_checkpoint<float>(in);
  };
  EXPECT_THROW(read("not-a-checkpoint 1\n"), CheckpointError);
  EXPECT_THROW(read("brighteye-checkpoint 7\n"), CheckpointError);
  EXPECT_THROW(read(bytes.substr(0, bytes.size() - 4)), CheckpointError);
  EXPECT_THROW(read(bytes + "x"), CheckpointError);
  EXPECT_NO_THROW(read(bytes));
}

}  // namespace
