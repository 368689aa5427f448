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

// Classifier banks: checkpoint metadata, loading, per-image scoring and
// evaluation of the glaucoma and feature tasks together.

#include <algorithm>
#include <array>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "brighteye/checkpoint.hpp"
#include "brighteye/dataset.hpp"
#include "brighteye/metrics.hpp"
#include "brighteye/preprocess.hpp"
#include "brighteye/train.hpp"

namespace brighteye {

/// Checkpoints are incompatible with each other or with the requested run.
class IncompatibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Metadata preprocess_metadata(const PreprocessOptions& p) {
  std::ostringstream floor;
  floor << std::setprecision(17) << p.confidence_floor;
  return {{"preprocess.od_crop", p.od_crop ? "true" : "false"},
          {"preprocess.bg_removal", p.bg_removal ? "true" : "false"},
          {"preprocess.bg_threshold", std::to_string(p.bg_threshold)},
          {"preprocess.confidence_floor", floor.str()},
          {"preprocess.input_size", std::to_string(p.input_size)}};
}

inline PreprocessOptions preprocess_from_metadata(const Metadata& m) {
  auto get = [&m](const std::string& k) {
    const auto it = m.find(k);
    if (it == m.end()) throw IncompatibleError("checkpoint lacks " + k);
    return it->second;
  };
  PreprocessOptions p;
  p.od_crop = get("preprocess.od_crop") == "true";
  p.bg_removal = get("preprocess.bg_removal") == "true";
  p.bg_threshold = static_cast<std::uint8_t>(std::stoi(get("preprocess.bg_threshold")));
  p.confidence_floor = std::stod(get("preprocess.confidence_floor"));
  p.input_size = std::stoi(get("preprocess.input_size"));
  return p;
}

inline Metadata task_metadata(const TrainSetup& setup, const TrainResult& r) {
  Metadata m = preprocess_metadata(setup.preprocess);
  m["task"] = task_name(r.task);
  m["seed"] = std::to_string(setup.train.seed);
  m["best_epoch"] = std::to_string(r.best_epoch);
  return m;
}

/// One glaucoma classifier plus up to ten feature classifiers, sharing one
/// architecture and one preprocessing setup.
struct Bank {
  std::optional<BrighteyeModel<float>> glaucoma;
  std::array<std::optional<BrighteyeModel<float>>, kFeatureCount> features;
  PreprocessOptions preprocess;

  const BrighteyeModel<float>* any() const {
    if (glaucoma) return &*glaucoma;
    for (const auto& f : features)
      if (f) return &*f;
    return nullptr;
  }
};

/// Loads checkpoints into a bank, slotting each by its recorded task.
inline Bank load_bank(std::span<const std::filesystem::path> paths) {
  if (paths.empty()) throw MissingInputError("no checkpoints given");
  Bank bank;
  std::optional<ModelConfig> config;
  std::optional<PreprocessOptions> prep;
  for (const auto& path : paths) {
    if (!std::filesystem::exists(path)) throw MissingInputError("checkpoint not found: " + path.string());
    auto ck = load_checkpoint<float>(path);
    const auto task_it = ck.metadata.find("task");
    if (task_it == ck.metadata.end()) throw IncompatibleError(path.string() + ": checkpoint has no task");
    std::size_t task = 0;
    try {
      task = parse_task(task_it->second);
    } catch (const std::invalid_argument& e) {
      throw IncompatibleError(path.string() + ": " + e.what());
    }
    const auto p = preprocess_from_metadata(ck.metadata);
    if (config && !(*config == ck.model.config)) throw IncompatibleError(path.string() + ": model config differs within bank");
    if (prep && !(*prep == p)) throw IncompatibleError(path.string() + ": preprocessing differs within bank");
    config = ck.model.config;
    prep = p;
    auto& slot = task == 0 ? bank.glaucoma : bank.features[task - 1];
    if (slot) throw IncompatibleError(path.string() + ": duplicate checkpoint for " + task_name(task));
    slot = std::move(ck.model);
  }
  bank.preprocess = *prep;
  return bank;
}

/// Every *.ckpt file in a directory, sorted by name.
inline std::vector<std::filesystem::path> bank_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw MissingInputError("bank directory not found: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".ckpt") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

struct SampleScores {
  double glaucoma = 0.0;
  std::array<double, kFeatureCount> features{};  // 0 for tasks without a classifier
};

inline SampleScores score_image(const Bank& bank, const Image8& image, const RoiPlan& plan) {
  const Image8 prepared = prepare_image(image, plan, bank.preprocess);
  const auto input = to_model_input<float>(prepared);
  SampleScores s;
  if (bank.glaucoma) s.glaucoma = predict(*bank.glaucoma, input);
  for (std::size_t k = 0; k < kFeatureCount; ++k)
    if (bank.features[k]) s.features[k] = predict(*bank.features[k], input);
  return s;
}

inline SampleScores score_sample(const Bank& bank, const FundusSample& sample) {
  return score_image(bank, sample.image, select_roi(sample.detections, bank.preprocess.confidence_floor));
}

struct BankEvaluation {
  EvalReport report;
  std::vector<std::string> ids;
  std::vector<SampleScores> scores;
  std::vector<int> labels;
  std::vector<FeatureFlags> truth;
};

/// Evaluates any per-sample scorer (FundusSample -> SampleScores).
template <typename Scorer>
BankEvaluation evaluate_with(Scorer&& scorer, std::span<const FundusSample> samples, double threshold) {
  BankEvaluation ev;
  std::vector<double> glaucoma;
  std::vector<std::array<double, kFeatureCount>> features;
  for (const auto& s : samples) {
    const SampleScores sc = scorer(s);
    ev.ids.push_back(s.id);
    ev.scores.push_back(sc);
    ev.labels.push_back(s.rg);
    ev.truth.push_back(s.features);
    glaucoma.push_back(sc.glaucoma);
    features.push_back(sc.features);
  }
  ev.report = evaluate_scores(glaucoma, ev.labels, features, ev.truth, threshold);
  return ev;
}

inline BankEvaluation evaluate(const Bank& bank, std::span<const FundusSample> samples, double threshold = 0.5) {
  if (!bank.glaucoma) throw MissingInputError("bank has no glaucoma checkpoint");
  return evaluate_with([&bank](const FundusSample& s) { return score_sample(bank, s); }, samples, threshold);
}

/// id,rg,glaucoma,p1..p10,t1..t10 with full precision.
inline void write_scores(std::ostream& out, const BankEvaluation& ev) {
  const auto precision = out.precision();
  out << "id,rg,glaucoma";
  for (std::size_t k = 1; k <= kFeatureCount; ++k) out << ",p" << k;
  for (std::size_t k = 1; k <= kFeatureCount; ++k) out << ",t" << k;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < ev.ids.size(); ++i) {
    out << ev.ids[i] << ',' << ev.labels[i] << ',' << ev.scores[i].glaucoma;
    for (double p : ev.scores[i].features) out << ',' << p;
    for (auto t : ev.truth[i]) out << ',' << static_cast<int>(t);
    out << '\n';
  }
  out.precision(precision);
}

/// Reads a score dump back into an evaluation (report recomputed).
inline BankEvaluation read_scores(std::istream& in, double threshold, const std::string& source = "<scores>") {
  std::string line;
  if (!std::getline(in, line)) throw ManifestError(source + ": empty score file");
  BankEvaluation ev;
  std::vector<double> glaucoma;
  std::vector<std::array<double, kFeatureCount>> probs;
  for (int line_no = 2; std::getline(in, line); ++line_no) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 3 + 2 * kFeatureCount) {
      throw ManifestError(source + ":" + std::to_string(line_no) + ": wrong field count");
    }
    try {
      SampleScores sc;
      sc.glaucoma = std::stod(cells[2]);
      FeatureFlags t{};
      for (std::size_t k = 0; k < kFeatureCount; ++k) {
        sc.features[k] = std::stod(cells[3 + k]);
        t[k] = static_cast<std::uint8_t>(std::stoi(cells[3 + kFeatureCount + k]));
      }
      ev.ids.push_back(cells[0]);
      ev.labels.push_back(std::stoi(cells[1]));
      ev.scores.push_back(sc);
      ev.truth.push_back(t);
      glaucoma.push_back(sc.glaucoma);
      probs.push_back(sc.features);
    } catch (const std::logic_error&) {
      throw ManifestError(source + ":" + std::to_string(line_no) + ": malformed number");
    }
  }
  ev.report = evaluate_scores(glaucoma, ev.labels, probs, ev.truth, threshold);
  return ev;
}

}  // namespace brighteye
