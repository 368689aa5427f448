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

#pragma once

// Vision-transformer classifier with two heads: an MLP head on the output
// class token and a learnable patch-feature aggregation head.
//
// Token layout: row 0 is the class token, rows 1..N are patches in
// row-major patch order. Position embedding row 0 belongs to the class token.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "brighteye/tensor.hpp"

namespace brighteye {

enum class Activation { relu, gelu };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "gelu"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "gelu") return Activation::gelu;
  throw std::invalid_argument("unknown activation '" + s + "' (expected relu or gelu)");
}

struct ModelConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t patch = 16;
  std::size_t dim = 64;
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::size_t agg_hidden = 64;
  std::size_t mlp_hidden = 256;
  Activation activation = Activation::relu;

  std::size_t num_patches() const { return (height / patch) * (width / patch); }
  std::size_t patch_values() const { return 3 * patch * patch; }
  std::size_t tokens() const { return num_patches() + 1; }

  void validate() const {
    if (height == 0 || width == 0 || patch == 0 || dim == 0 || depth == 0 || heads == 0 ||
        agg_hidden == 0 || mlp_hidden == 0) {
      throw DimensionError("model config: all extents must be positive");
    }
    if (height % patch != 0 || width % patch != 0) {
      throw DimensionError("model config: input " + std::to_string(height) + "x" +
                           std::to_string(width) + " not divisible by patch " +
                           std::to_string(patch));
    }
    if (dim % heads != 0) {
      throw DimensionError("model config: dim " + std::to_string(dim) +
                           " not divisible by heads " + std::to_string(heads));
    }
  }

  /// 512x512 input, 16-pixel patches (N = 1024).
  static ModelConfig full_scale() {
    ModelConfig c;
    c.height = c.width = 512;
    c.patch = 16;
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Closed-form parameter count for a configuration.
inline std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t d = c.dim, m = c.mlp_hidden, a = c.agg_hidden;
  const std::size_t block = 2 * 2 * d + 4 * (d * d + d) + (d * m + m) + (m * d + d);
  return c.patch_values() * d + d        // patch projection
         + c.tokens() * d                // position embedding
         + d                             // class token
         + c.depth * block               // encoder
         + (2 * d + 2)                   // mlp head
         + (d * a + a) + 2 * a + (a + 1) + 2  // aggregation score path
         + (2 * d + 2);                  // final fc
}

template <typename T>
struct Linear {
  Tensor<T> weight;  // in x out
  Tensor<T> bias;    // out

  Tensor<T> operator()(const Tensor<T>& x) const { return add_bias(matmul(x, weight), bias); }
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gain;
  Tensor<T> bias;

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias); }
};

template <typename T>
struct EncoderBlock {
  LayerNormParams<T> norm1;
  Linear<T> query, key, value, output;
  LayerNormParams<T> norm2;
  Linear<T> fc1, fc2;
};

/// Scores patches with proj1 -> LN -> ReLU -> proj2 -> LN -> ReLU. The
/// second normalization runs across the N patch scores with a shared scalar
/// gain and bias, since a normalization over a single score would be constant.
template <typename T>
struct AggregationHead {
  Linear<T> proj1;
  LayerNormParams<T> norm1;
  Linear<T> proj2;
  LayerNormParams<T> norm2;
};

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
struct BrighteyeModel {
  ModelConfig config;
  Linear<T> patch_projection;
  Tensor<T> position_embedding;  // (N+1) x D
  Tensor<T> class_token;         // 1 x D
  std::vector<EncoderBlock<T>> blocks;
  Linear<T> mlp_head;
  AggregationHead<T> agg_head;
  Linear<T> final_fc;

  /// Every parameter tensor, in a fixed order. Handles share storage with
  /// the model.
  std::vector<NamedParameter<T>> parameters() const {
    std::vector<NamedParameter<T>> out;
    auto lin = [&out](const std::string& prefix, const Linear<T>& l) {
      out.push_back({prefix + ".weight", l.weight});
      out.push_back({prefix + ".bias", l.bias});
    };
    auto norm = [&out](const std::string& prefix, const LayerNormParams<T>& n) {
      out.push_back({prefix + ".gain", n.gain});
      out.push_back({prefix + ".bias", n.bias});
    };
    lin("patch_projection", patch_projection);
    out.push_back({"position_embedding", position_embedding});
    out.push_back({"class_token", class_token});
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = "blocks." + std::to_string(i);
      const auto& b = blocks[i];
      norm(p + ".norm1", b.norm1);
      lin(p + ".query", b.query);
      lin(p + ".key", b.key);
      lin(p + ".value", b.value);
      lin(p + ".output", b.output);
      norm(p + ".norm2", b.norm2);
      lin(p + ".fc1", b.fc1);
      lin(p + ".fc2", b.fc2);
    }
    lin("mlp_head", mlp_head);
    lin("agg_head.proj1", agg_head.proj1);
    norm("agg_head.norm1", agg_head.norm1);
    lin("agg_head.proj2", agg_head.proj2);
    norm("agg_head.norm2", agg_head.norm2);
    lin("final_fc", final_fc);
    return out;
  }

  /// Parameters allocated from the configuration, all zero.
  static BrighteyeModel zeros(const ModelConfig& config) {
    config.validate();
    const std::size_t d = config.dim;
    auto lin = [](std::size_t in, std::size_t out) {
      return Linear<T>{Tensor<T>::zeros({in, out}, true), Tensor<T>::zeros({out}, true)};
    };
    auto norm = [](std::size_t width) {
      return LayerNormParams<T>{Tensor<T>::filled({width}, T(1), true),
                                Tensor<T>::zeros({width}, true)};
    };
    BrighteyeModel m;
    m.config = config;
    m.patch_projection = lin(config.patch_values(), d);
    m.position_embedding = Tensor<T>::zeros({config.tokens(), d}, true);
    m.class_token = Tensor<T>::zeros({1, d}, true);
    for (std::size_t i = 0; i < config.depth; ++i) {
      m.blocks.push_back(EncoderBlock<T>{norm(d), lin(d, d), lin(d, d), lin(d, d), lin(d, d),
                                         norm(d), lin(d, config.mlp_hidden),
                                         lin(config.mlp_hidden, d)});
    }
    m.mlp_head = lin(d, 2);
    m.agg_head = AggregationHead<T>{lin(d, config.agg_hidden), norm(config.agg_hidden),
                                    lin(config.agg_hidden, 1), norm(1)};
    m.final_fc = lin(d, 2);
    return m;
  }

  /// Truncated-normal (sigma 0.02, cut at 2 sigma) weights and embeddings,
  /// zero biases, unit layer-norm gains.
  static BrighteyeModel initialize(const ModelConfig& config, std::uint64_t seed,
                                   T sigma = T(0.02)) {
    BrighteyeModel m = zeros(config);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& p : m.parameters()) {
      const std::string& n = p.name;
      const bool is_weight = n.ends_with(".weight") || n == "position_embedding" ||
                             n == "class_token";
      if (!is_weight) continue;
      for (T& v : p.tensor.mutable_data()) {
        double z = normal(rng);
        while (std::abs(z) > 2.0) z = normal(rng);
        v = static_cast<T>(z) * sigma;
      }
    }
    return m;
  }

  /// Same parameters in another scalar type.
  template <typename U>
  BrighteyeModel<U> cast() const {
    BrighteyeModel<U> out = BrighteyeModel<U>::zeros(config);
    auto src = parameters();
    auto dst = out.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
      auto from = src[i].tensor.data();
      auto to = dst[i].tensor.mutable_data();
      for (std::size_t j = 0; j < from.size(); ++j) to[j] = static_cast<U>(from[j]);
    }
    return out;
  }
};

/// Splits an HxWx3 image into N rows of 3P^2 values. Row k is patch
/// (k / (W/P), k % (W/P)); inside a row, element (dy*P + dx)*3 + c.
template <typename T>
Tensor<T> patchify(const Tensor<T>& image, std::size_t patch) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DimensionError("patchify: expected HxWx3 image, got " + shape_string(image.shape()));
  }
  const std::size_t h = image.dim(0), w = image.dim(1);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw DimensionError("patchify: " + std::to_string(h) + "x" + std::to_string(w) +
                         " not divisible by patch " + std::to_string(patch));
  }
  const std::size_t cols = w / patch, rows = h / patch;
  const std::size_t row_len = 3 * patch * patch;
  std::vector<T> out(rows * cols * row_len);
  const auto px = image.data();
  for (std::size_t pr = 0; pr < rows; ++pr)
    for (std::size_t pc = 0; pc < cols; ++pc) {
      T* dst = out.data() + (pr * cols + pc) * row_len;
      for (std::size_t dy = 0; dy < patch; ++dy) {
        const T* src = px.data() + ((pr * patch + dy) * w + pc * patch) * 3;
        std::copy_n(src, patch * 3, dst + dy * patch * 3);
      }
    }
  return Tensor<T>::from_data({rows * cols, row_len}, std::move(out));
}

/// Inverse of patchify.
template <typename T>
Tensor<T> unpatchify(const Tensor<T>& patches, std::size_t height, std::size_t width,
                     std::size_t patch) {
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw DimensionError("unpatchify: extents not divisible by patch");
  }
  const std::size_t cols = width / patch, rows = height / patch;
  const std::size_t row_len = 3 * patch * patch;
  if (patches.shape() != Shape{rows * cols, row_len}) {
    throw DimensionError("unpatchify: got " + shape_string(patches.shape()));
  }
  std::vector<T> out(height * width * 3);
  const auto pv = patches.data();
  for (std::size_t pr = 0; pr < rows; ++pr)
    for (std::size_t pc = 0; pc < cols; ++pc) {
      const T* src = pv.data() + (pr * cols + pc) * row_len;
      for (std::size_t dy = 0; dy < patch; ++dy) {
        std::copy_n(src + dy * patch * 3, patch * 3,
                    out.data() + ((pr * patch + dy) * width + pc * patch) * 3);
      }
    }
  return Tensor<T>::from_data({height, width, 3}, std::move(out));
}

template <typename T>
struct AggregateResult {
  Tensor<T> aggregated;  // 1 x D
  Tensor<T> weights;     // 1 x N
};

/// Softmax-weighted sum of the patch features (N x D, class token excluded).
template <typename T>
AggregateResult<T> aggregate_patches(const Tensor<T>& features, const AggregationHead<T>& head) {
  if (features.rank() != 2 || features.dim(0) == 0) {
    throw DimensionError("aggregate_patches: expected N x D features, got " +
                         shape_string(features.shape()));
  }
  const std::size_t n = features.dim(0);
  auto hidden = relu(head.norm1(head.proj1(features)));
  auto scores = reshape(head.proj2(hidden), {1, n});
  scores = relu(head.norm2(scores));
  auto weights = softmax(scores, 1);
  return {matmul(weights, features), weights};
}

template <typename T>
struct HeadOutputs {
  Tensor<T> p_cls;          // 1 x 2, class-token head
  Tensor<T> p_agg;          // 1 x 2, aggregation head
  Tensor<T> patch_weights;  // 1 x N
};

template <typename T>
Tensor<T> encoder_block(const EncoderBlock<T>& b, const Tensor<T>& x, std::size_t heads,
                        Activation activation) {
  const std::size_t d = x.dim(1);
  const std::size_t head_dim = d / heads;
  const T scale_factor = T(1) / std::sqrt(static_cast<T>(head_dim));
  auto h = b.norm1(x);
  auto q = b.query(h);
  auto k = b.key(h);
  auto v = b.value(h);
  std::vector<Tensor<T>> per_head;
  per_head.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    const std::size_t lo = i * head_dim, hi = lo + head_dim;
    auto qh = slice(q, 1, lo, hi);
    auto kh = slice(k, 1, lo, hi);
    auto vh = slice(v, 1, lo, hi);
    auto attn = softmax(scale(matmul(qh, transpose(kh)), scale_factor), 1);
    per_head.push_back(matmul(attn, vh));
  }
  auto attended = heads == 1 ? per_head.front() : concat(per_head, 1);
  auto y = add(x, b.output(attended));
  auto hidden = b.fc1(b.norm2(y));
  hidden = activation == Activation::relu ? relu(hidden) : gelu(hidden);
  return add(y, b.fc2(hidden));
}

/// Runs the encoder and both heads on an HxWx3 image with values in [0,1].
template <typename T>
HeadOutputs<T> forward(const BrighteyeModel<T>& model, const Tensor<T>& image) {
  const ModelConfig& c = model.config;
  if (image.shape() != Shape{c.height, c.width, 3}) {
    throw DimensionError("forward: image " + shape_string(image.shape()) +
                         " does not match model input " +
                         shape_string(Shape{c.height, c.width, 3}));
  }
  const std::size_t n = c.num_patches();
  auto tokens = model.patch_projection(patchify(image, c.patch));
  auto x = add(concat<T>({model.class_token, tokens}, 0), model.position_embedding);
  for (const auto& block : model.blocks) x = encoder_block(block, x, c.heads, c.activation);
  auto cls = slice(x, 0, 0, 1);
  auto patches = slice(x, 0, 1, n + 1);
  auto agg = aggregate_patches(patches, model.agg_head);
  return {softmax(model.mlp_head(cls), 1), softmax(model.final_fc(agg.aggregated), 1),
          agg.weights};
}

/// Positive-class probability averaged over both heads.
template <typename T>
T predict(const HeadOutputs<T>& out) {
  return (out.p_cls[1] + out.p_agg[1]) / T(2);
}

template <typename T>
T predict(const BrighteyeModel<T>& model, const Tensor<T>& image) {
  NoGradGuard no_grad;
  return predict(forward(model, image));
}

}  // namespace brighteye
