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

// Screening metrics: ROC curve, AUC, sensitivity at fixed specificity and
// normalized Hamming distance over feature flags.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "brighteye/common.hpp"

namespace brighteye {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operating point "predict positive iff score >= threshold".
struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
  std::size_t false_positives = 0;
  std::size_t true_positives = 0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // threshold decreasing; starts at (0,0), ends at (1,1)
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// One point per distinct score plus the (0,0) origin at threshold +inf.
inline RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw MetricError("roc_curve: " + std::to_string(scores.size()) + " scores vs " +
                      std::to_string(labels.size()) + " labels");
  }
  RocCurve curve;
  for (int y : labels) {
    if (y != 0 && y != 1) throw MetricError("roc_curve: labels must be 0 or 1");
    (y ? curve.positives : curve.negatives)++;
  }
  if (curve.positives == 0 || curve.negatives == 0) {
    throw MetricError("roc_curve: need at least one positive and one negative label");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double pos = static_cast<double>(curve.positives);
  const double neg = static_cast<double>(curve.negatives);
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0, 0, 0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      (labels[order[i]] ? tp : fp)++;
      ++i;
    }
    curve.points.push_back({threshold, fp / neg, tp / pos, fp, tp});
  }
  return curve;
}

/// Trapezoidal area under the curve.
inline double auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return area;
}

inline double auc(std::span<const double> scores, std::span<const int> labels) {
  return auc(roc_curve(scores, labels));
}

/// Largest TPR among achievable thresholds whose FPR <= 1 - specificity.
/// No interpolation between operating points.
inline double tpr_at_specificity(const RocCurve& curve, double specificity = 0.95) {
  if (!(specificity >= 0.0 && specificity <= 1.0)) {
    throw MetricError("tpr_at_specificity: specificity must lie in [0,1]");
  }
  const auto allowed = static_cast<std::size_t>(
      std::floor((1.0 - specificity) * static_cast<double>(curve.negatives) + 1e-9));
  double best = 0.0;
  for (const auto& p : curve.points) {
    if (p.false_positives <= allowed) best = std::max(best, p.tpr);
  }
  return best;
}

inline double tpr_at_specificity(std::span<const double> scores, std::span<const int> labels,
                                 double specificity = 0.95) {
  return tpr_at_specificity(roc_curve(scores, labels), specificity);
}

/// Fraction of positions where the flags differ.
inline double normalized_hamming(std::span<const std::uint8_t> pred,
                                 std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw MetricError("normalized_hamming: length mismatch (" + std::to_string(pred.size()) +
                      " vs " + std::to_string(truth.size()) + ")");
  }
  std::size_t diff = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) diff += (pred[i] != 0) != (truth[i] != 0);
  return static_cast<double>(diff) / static_cast<double>(pred.size());
}

/// Score strictly above the threshold counts as present.
inline FeatureFlags threshold_features(const std::array<double, kFeatureCount>& probs,
                                       double threshold) {
  FeatureFlags out{};
  for (std::size_t k = 0; k < kFeatureCount; ++k) out[k] = probs[k] > threshold ? 1 : 0;
  return out;
}

struct EvalReport {
  double tpr_at_95 = 0.0;
  double auc = 0.0;
  double nhd_mean = 0.0;
  std::vector<double> per_sample_nhd;
  double threshold = 0.5;
  std::size_t samples = 0;
  RocCurve roc;
};

inline EvalReport evaluate_scores(std::span<const double> glaucoma_scores,
                                  std::span<const int> glaucoma_labels,
                                  std::span<const std::array<double, kFeatureCount>> feature_probs,
                                  std::span<const FeatureFlags> feature_truth,
                                  double threshold = 0.5) {
  if (feature_probs.size() != feature_truth.size() ||
      feature_probs.size() != glaucoma_scores.size()) {
    throw MetricError("evaluate: per-sample inputs differ in length");
  }
  EvalReport r;
  r.threshold = threshold;
  r.samples = glaucoma_scores.size();
  r.roc = roc_curve(glaucoma_scores, glaucoma_labels);
  r.auc = auc(r.roc);
  r.tpr_at_95 = tpr_at_specificity(r.roc, 0.95);
  double total = 0.0;
  for (std::size_t i = 0; i < feature_probs.size(); ++i) {
    const FeatureFlags pred = threshold_features(feature_probs[i], threshold);
    const double d = normalized_hamming(pred, feature_truth[i]);
    r.per_sample_nhd.push_back(d);
    total += d;
  }
  r.nhd_mean = r.per_sample_nhd.empty() ? 0.0 : total / static_cast<double>(r.per_sample_nhd.size());
  return r;
}

/// key=value report, fixed key order.
inline void write_report(std::ostream& out, const EvalReport& r,
                         std::span<const std::string> ids = {}) {
  const auto flags = out.flags();
  out << std::fixed << std::setprecision(6);
  out << "samples=" << r.samples << '\n';
  out << "positives=" << r.roc.positives << '\n';
  out << "negatives=" << r.roc.negatives << '\n';
  out << "tpr_at_95=" << r.tpr_at_95 << '\n';
  out << "auc=" << r.auc << '\n';
  out << "nhd_mean=" << r.nhd_mean << '\n';
  out << "feature_threshold=" << r.threshold << '\n';
  for (std::size_t i = 0; i < r.per_sample_nhd.size(); ++i) {
    out << "nhd." << (i < ids.size() ? ids[i] : std::to_string(i)) << '=' << r.per_sample_nhd[i]
        << '\n';
  }
  out.flags(flags);
}

/// threshold,fpr,tpr rows for external plotting.
inline void write_roc_csv(std::ostream& out, const RocCurve& curve) {
  const auto flags = out.flags();
  out << "threshold,fpr,tpr\n" << std::setprecision(17);
  for (const auto& p : curve.points) {
    if (std::isinf(p.threshold)) {
      out << "inf";
    } else {
      out << p.threshold;
    }
    out << ',' << p.fpr << ',' << p.tpr << '\n';
  }
  out.flags(flags);
}

}  // namespace brighteye
