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

// Training: dual-head cross-entropy, Adam with step decay, class
// rebalancing and 4:1 splitting, and the per-task / 11-task training loops.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "brighteye/common.hpp"
#include "brighteye/dataset.hpp"
#include "brighteye/metrics.hpp"
#include "brighteye/model.hpp"
#include "brighteye/preprocess.hpp"
#include "brighteye/tensor.hpp"

namespace brighteye {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// How the two head terms combine: their mean (default) or their sum.
enum class LossForm { average, sum };

inline constexpr double kProbabilityClamp = 1e-7;

template <typename T>
struct LossValue {
  Tensor<T> total;
  T cls_term = 0;
  T agg_term = 0;
};

template <typename T>
std::array<T, 2> one_hot(int label) {
  if (label != 0 && label != 1) throw std::invalid_argument("one_hot: label must be 0 or 1");
  return label ? std::array<T, 2>{T(0), T(1)} : std::array<T, 2>{T(1), T(0)};
}

/// -sum_i y_i log p_i for both heads, combined per `form`. Probabilities are
/// clamped into [1e-7, 1 - 1e-7] before the log.
template <typename T>
LossValue<T> dual_bce_loss(const std::array<T, 2>& y, const Tensor<T>& p_cls, const Tensor<T>& p_agg,
                           LossForm form = LossForm::average) {
  const bool one_hot_ok = (y[0] == T(0) || y[0] == T(1)) && (y[1] == T(0) || y[1] == T(1)) &&
                          y[0] + y[1] == T(1);
  if (!one_hot_ok) throw std::invalid_argument("dual_bce_loss: target is not one-hot");
  if (p_cls.numel() != 2 || p_agg.numel() != 2) {
    throw DimensionError("dual_bce_loss: expected probability pairs, got " +
                         shape_string(p_cls.shape()) + " and " + shape_string(p_agg.shape()));
  }
  const auto target = Tensor<T>::from_data(p_cls.shape(), {y[0], y[1]});
  const T lo = static_cast<T>(kProbabilityClamp), hi = T(1) - lo;
  auto term = [&](const Tensor<T>& p) {
    return scale(sum(mul(target, log(clamp(reshape(p, p_cls.shape()), lo, hi)))), T(-1));
  };
  auto cls = term(p_cls);
  auto agg = term(p_agg);
  auto total = add(cls, agg);
  if (form == LossForm::average) total = scale(total, T(0.5));
  return {total, cls.item(), agg.item()};
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamSlot {
  std::vector<T> m;
  std::vector<T> v;
};

/// One bias-corrected Adam update of `param` at step `t` (1-based).
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, AdamSlot<T>& slot, std::size_t t,
                 double lr, const AdamOptions& opt = {}) {
  if (grad.size() != param.size()) {
    throw DimensionError("adam_update: gradient length " + std::to_string(grad.size()) +
                         " vs parameter length " + std::to_string(param.size()));
  }
  if (slot.m.empty()) {
    slot.m.assign(param.size(), T(0));
    slot.v.assign(param.size(), T(0));
  }
  if (slot.m.size() != param.size()) throw DimensionError("adam_update: state size mismatch");
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  const T b1 = static_cast<T>(opt.beta1), b2 = static_cast<T>(opt.beta2);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    slot.m[i] = b1 * slot.m[i] + (T(1) - b1) * g;
    slot.v[i] = b2 * slot.v[i] + (T(1) - b2) * g * g;
    const double m_hat = slot.m[i] / c1;
    const double v_hat = slot.v[i] / c2;
    param[i] -= static_cast<T>(lr * m_hat / (std::sqrt(v_hat) + opt.eps));
  }
}

/// Adam over a fixed parameter list. step() consumes the current gradients
/// and resets them.
template <typename T>
class Adam {
 public:
  explicit Adam(std::vector<Tensor<T>> params, AdamOptions opt = {})
      : params_(std::move(params)), slots_(params_.size()), opt_(opt) {}

  void step(double lr) {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      std::vector<T> zeros;
      std::span<const T> g = p.grad();
      if (!p.has_grad()) {
        zeros.assign(p.numel(), T(0));
        g = zeros;
      }
      adam_update<T>(p.mutable_data(), g, slots_[i], t_, lr, opt_);
      p.zero_grad();
    }
  }

  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<AdamSlot<T>> slots_;
  AdamOptions opt_;
  std::size_t t_ = 0;
};

struct LrSchedule {
  double lr0 = 2e-4;
  double factor = 0.5;
  std::size_t period = 5;

  /// lr0 * factor^floor(epoch / period)
  double operator()(std::size_t epoch) const {
    return lr0 * std::pow(factor, static_cast<double>(period ? epoch / period : 0));
  }
};

inline double lr_schedule(std::size_t epoch) { return LrSchedule{}(epoch); }

// ---------------------------------------------------------------------------
// Data split
// ---------------------------------------------------------------------------

struct SplitRatio {
  std::size_t train = 4;
  std::size_t val = 1;
};

struct DataSplit {
  std::vector<std::size_t> train;  // sample indices, ascending
  std::vector<std::size_t> val;
};

namespace detail {

template <typename Rng>
void seeded_shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(i));
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
}

}  // namespace detail

/// Count of a class's samples that go to training: n * train / (train + val),
/// rounded half up.
inline std::size_t train_share(std::size_t n, SplitRatio r) {
  const std::size_t total = r.train + r.val;
  return (2 * n * r.train + total) / (2 * total);
}

/// Keeps every positive, samples `negatives` negatives without replacement
/// (all of them when unset), then splits each class by `ratio`.
inline DataSplit rebalance_and_split(std::span<const int> labels, std::optional<std::size_t> negatives,
                                     SplitRatio ratio, std::uint64_t seed) {
  if (ratio.train + ratio.val == 0) throw std::invalid_argument("split ratio must not be 0:0");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("labels must be 0 or 1");
    (labels[i] ? pos : neg).push_back(i);
  }
  std::mt19937_64 rng(seed);
  if (negatives) {
    if (*negatives > neg.size()) {
      throw std::invalid_argument("requested " + std::to_string(*negatives) + " negatives, only " +
                                  std::to_string(neg.size()) + " available");
    }
    detail::seeded_shuffle(neg, rng);
    neg.resize(*negatives);
  }
  DataSplit split;
  for (auto* cls : {&pos, &neg}) {
    detail::seeded_shuffle(*cls, rng);
    const std::size_t n_train = train_share(cls->size(), ratio);
    split.train.insert(split.train.end(), cls->begin(), cls->begin() + n_train);
    split.val.insert(split.val.end(), cls->begin() + n_train, cls->end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

inline constexpr std::size_t kTaskCount = 1 + kFeatureCount;

/// "glaucoma" for task 0, "featureK" for task K.
inline std::string task_name(std::size_t task) {
  return task == 0 ? std::string("glaucoma") : "feature" + std::to_string(task);
}

inline std::size_t parse_task(const std::string& name) {
  if (name == "glaucoma") return 0;
  for (std::size_t k = 1; k <= kFeatureCount; ++k)
    if (name == task_name(k)) return k;
  throw std::invalid_argument("unknown task '" + name + "'");
}

struct TrainConfig {
  LrSchedule schedule;
  AdamOptions adam;
  std::size_t batch_size = 8;
  std::size_t epochs = 30;
  std::size_t max_steps = 0;  // 0: no cap
  std::uint64_t seed = 0;
  SplitRatio split;
  std::optional<std::size_t> negatives;  // glaucoma task only
  bool augment = true;
  AugmentParams augment_params;
  LossForm loss_form = LossForm::average;
};

struct TrainSetup {
  ModelConfig model;
  TrainConfig train;
  PreprocessOptions preprocess;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  std::size_t steps = 0;  // optimizer steps taken so far
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_metric;
  bool best = false;
};

struct TrainResult {
  std::size_t task = 0;
  BrighteyeModel<float> model;  // best validation epoch, or last epoch without validation
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::string val_metric_name;
  double final_train_loss = 0.0;  // returned model on un-augmented training images
  DataSplit split;
};

/// Per-task seed; task 0 of a bank and a standalone glaucoma run agree.
inline std::uint64_t task_seed(std::uint64_t seed, std::size_t task) { return mix_seed(seed, task); }

namespace detail {

struct Prepared {
  Image8 image;
  int label = 0;
};

inline std::vector<std::vector<float>> snapshot(const BrighteyeModel<float>& m) {
  std::vector<std::vector<float>> out;
  for (const auto& p : m.parameters()) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

inline void restore(BrighteyeModel<float>& m, const std::vector<std::vector<float>>& values) {
  auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor.mutable_data();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

struct Scored {
  double loss = 0.0;
  std::vector<double> scores;
  std::vector<int> labels;
};

inline Scored score_set(const BrighteyeModel<float>& model, const std::vector<Prepared>& set,
                        LossForm form) {
  NoGradGuard no_grad;
  Scored s;
  for (const auto& p : set) {
    const auto out = forward(model, to_model_input<float>(p.image));
    s.loss += dual_bce_loss(one_hot<float>(p.label), out.p_cls, out.p_agg, form).total.item();
    s.scores.push_back(predict(out));
    s.labels.push_back(p.label);
  }
  if (!set.empty()) s.loss /= static_cast<double>(set.size());
  return s;
}

inline double accuracy(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) hit += (scores[i] > 0.5 ? 1 : 0) == labels[i];
  return scores.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(scores.size());
}

}  // namespace detail

/// Trains one binary classifier (task 0: glaucoma, task k: feature k).
///
/// Every sample is prepared once (ROI plan, crop, background removal,
/// resize); training images are then augmented per epoch. The checkpoint
/// kept is the epoch with the best validation metric (TPR at 95%
/// specificity for glaucoma when both classes are present in validation,
/// otherwise accuracy at 0.5), ties broken by lower validation loss.
inline TrainResult train_task(const TrainSetup& setup, std::span<const FundusSample> samples,
                              std::size_t task) {
  if (task >= kTaskCount) throw std::invalid_argument("task index out of range");
  if (samples.empty()) throw TrainingError("empty training set");
  const TrainConfig& cfg = setup.train;
  if (cfg.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (setup.preprocess.input_size != static_cast<int>(setup.model.height) ||
      setup.model.height != setup.model.width) {
    throw DimensionError("preprocess input size must equal the square model input");
  }
  const std::uint64_t seed = task_seed(cfg.seed, task);

  std::vector<int> labels;
  for (const auto& s : samples) labels.push_back(s.label(task));
  TrainResult result;
  result.task = task;
  result.split = rebalance_and_split(labels, task == 0 ? cfg.negatives : std::nullopt, cfg.split,
                                     mix_seed(seed, 0));
  auto prepare = [&](const std::vector<std::size_t>& idx) {
    std::vector<detail::Prepared> out;
    for (std::size_t i : idx) {
      const auto& s = samples[i];
      const RoiPlan plan = select_roi(s.detections, setup.preprocess.confidence_floor);
      out.push_back({prepare_image(s.image, plan, setup.preprocess), labels[i]});
    }
    return out;
  };
  const auto train_set = prepare(result.split.train);
  const auto val_set = prepare(result.split.val);
  if (train_set.empty()) throw TrainingError("empty training set after split");
  {
    bool has_pos = false, has_neg = false;
    for (const auto& p : train_set) (p.label ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) throw TrainingError("training set of " + task_name(task) + " has a single class");
  }
  bool val_both = false;
  {
    bool has_pos = false, has_neg = false;
    for (const auto& p : val_set) (p.label ? has_pos : has_neg) = true;
    val_both = has_pos && has_neg;
  }
  result.val_metric_name = (task == 0 && val_both) ? "tpr_at_95" : "accuracy";

  result.model = BrighteyeModel<float>::initialize(setup.model, mix_seed(seed, 1));
  std::vector<Tensor<float>> handles;
  for (const auto& p : result.model.parameters()) handles.push_back(p.tensor);
  Adam<float> adam(handles, cfg.adam);

  std::optional<std::pair<double, double>> best;  // (metric, val loss)
  std::vector<std::vector<float>> best_params;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  bool capped = false;
  for (std::size_t epoch = 0; epoch < cfg.epochs && !capped; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = cfg.schedule(epoch);
    std::mt19937_64 rng(mix_seed(seed, 1000 + epoch));
    std::vector<std::size_t> perm = order;
    detail::seeded_shuffle(perm, rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < perm.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(perm.size(), start + cfg.batch_size);
      std::vector<Tensor<float>> losses;
      for (std::size_t b = start; b < stop; ++b) {
        const auto& sample = train_set[perm[b]];
        Image8 img = sample.image;
        if (cfg.augment) {
          std::mt19937_64 aug_rng(mix_seed(mix_seed(seed, 2000 + epoch), perm[b]));
          img = augment(img, cfg.augment_params, aug_rng);
        }
        const auto out = forward(result.model, to_model_input<float>(img));
        auto loss = dual_bce_loss(one_hot<float>(sample.label), out.p_cls, out.p_agg, cfg.loss_form);
        loss_sum += loss.total.item();
        losses.push_back(loss.total);
      }
      seen += stop - start;
      Tensor<float> batch_loss = losses.front();
      for (std::size_t i = 1; i < losses.size(); ++i) batch_loss = add(batch_loss, losses[i]);
      batch_loss = scale(batch_loss, 1.0f / static_cast<float>(losses.size()));
      backward(batch_loss);
      adam.step(rec.lr);
      if (cfg.max_steps && adam.steps() >= cfg.max_steps) {
        capped = true;
        break;
      }
    }
    rec.steps = adam.steps();
    rec.train_loss = loss_sum / static_cast<double>(seen);

    if (!val_set.empty()) {
      const auto scored = detail::score_set(result.model, val_set, cfg.loss_form);
      const double metric = result.val_metric_name == "tpr_at_95"
                                ? tpr_at_specificity(scored.scores, scored.labels, 0.95)
                                : detail::accuracy(scored.scores, scored.labels);
      rec.val_loss = scored.loss;
      rec.val_metric = metric;
      if (!best || metric > best->first || (metric == best->first && scored.loss < best->second)) {
        best = {metric, scored.loss};
        best_params = detail::snapshot(result.model);
        result.best_epoch = epoch;
        rec.best = true;
      }
    }
    result.epochs.push_back(rec);
  }
  if (best) {
    detail::restore(result.model, best_params);
  } else {
    result.best_epoch = result.epochs.empty() ? 0 : result.epochs.back().epoch;
    if (!result.epochs.empty()) result.epochs.back().best = true;
  }
  result.final_train_loss = detail::score_set(result.model, train_set, cfg.loss_form).loss;
  return result;
}

/// Epoch lines of a training log.
inline void write_epoch_records(std::ostream& out, const TrainResult& r) {
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::setprecision(9);
  for (const auto& e : r.epochs) {
    out << "task=" << task_name(r.task) << " epoch=" << e.epoch << " lr=" << e.lr << " steps=" << e.steps
        << " train_loss=" << e.train_loss;
    if (e.val_loss) out << " val_loss=" << *e.val_loss;
    if (e.val_metric) out << ' ' << r.val_metric_name << '=' << *e.val_metric;
    if (e.best) out << " best=1";
    out << '\n';
  }
  out << "task=" << task_name(r.task) << " best_epoch=" << r.best_epoch
      << " final_train_loss=" << r.final_train_loss << " train_samples=" << r.split.train.size()
      << " val_samples=" << r.split.val.size() << '\n';
  out.flags(flags);
  out.precision(precision);
}

struct TaskOutcome {
  std::size_t task = 0;
  std::optional<TrainResult> result;
  std::string skip_reason;  // set when result is empty
};

/// Trains the glaucoma classifier and the ten feature classifiers
/// independently. Feature tasks without both classes are skipped.
inline std::vector<TaskOutcome> train_bank(const TrainSetup& setup, std::span<const FundusSample> samples) {
  std::vector<TaskOutcome> out;
  for (std::size_t task = 0; task < kTaskCount; ++task) {
    TaskOutcome o;
    o.task = task;
    std::size_t positives = 0;
    for (const auto& s : samples) positives += s.label(task) != 0;
    if (task > 0 && positives == 0) {
      o.skip_reason = "no positive samples";
    } else if (task > 0 && positives == samples.size()) {
      o.skip_reason = "no negative samples";
    } else {
      o.result = train_task(setup, samples, task);
    }
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace brighteye
