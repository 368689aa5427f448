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

// Command implementations behind the brighteye executable. Each command
// takes parsed arguments and streams for output so tests can drive it
// without spawning a process.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "brighteye/checkpoint.hpp"
#include "brighteye/config.hpp"
#include "brighteye/dataset.hpp"
#include "brighteye/pipeline.hpp"
#include "brighteye/synth.hpp"

namespace brighteye {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitMissingInput = 2, kExitIncompatible = 3 };

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const MissingInputError*>(&e) || dynamic_cast<const ManifestError*>(&e) ||
      dynamic_cast<const DetectionFormatError*>(&e) || dynamic_cast<const ImageIoError*>(&e)) {
    return kExitMissingInput;
  }
  if (dynamic_cast<const CheckpointError*>(&e) || dynamic_cast<const IncompatibleError*>(&e)) {
    return kExitIncompatible;
  }
  return kExitUsage;
}

// synth

inline DatasetManifest cmd_synth(const SynthOptions& opt, const std::filesystem::path& out_dir) {
  return write_synthetic(out_dir, generate_synthetic(opt));
}

// preprocess

/// Writes <out>/<id>.ppm for every manifest row; returns the number written.
inline std::size_t cmd_preprocess(const std::filesystem::path& manifest_path, const PreprocessOptions& opt,
                                  const std::filesystem::path& out_dir, std::ostream& log) {
  const auto samples = load_samples(read_manifest(manifest_path));
  std::filesystem::create_directories(out_dir);
  for (const auto& s : samples) {
    const RoiPlan plan = select_roi(s.detections, opt.confidence_floor);
    if (std::holds_alternative<FullImage>(plan)) log << s.id << ": fallback: full image\n";
    write_ppm(out_dir / (s.id + ".ppm"), prepare_image(s.image, plan, opt));
  }
  return samples.size();
}

// train

struct TrainOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<bool> od_crop;
  std::optional<bool> bg_removal;
  std::optional<std::string> task;
};

inline void apply_overrides(RunConfig& c, const TrainOverrides& o) {
  if (o.seed) c.setup.train.seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
  if (o.od_crop) c.setup.preprocess.od_crop = *o.od_crop;
  if (o.bg_removal) c.setup.preprocess.bg_removal = *o.bg_removal;
  if (o.task) c.task = *o.task;
}

struct TrainSummary {
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path log;
};

inline void write_log_header(std::ostream& out, const RunConfig& c) {
  out << "brighteye train\n";
  for (const auto& [key, value] : c.effective()) out << "config." << key << '=' << value << '\n';
  out << "assumed_defaults=";
  const auto& keys = assumed_default_keys();
  for (std::size_t i = 0; i < keys.size(); ++i) out << (i ? "," : "") << keys[i];
  out << '\n';
}

/// Trains the configured task (or the whole bank) and writes <task>.ckpt
/// files plus train.log into the output directory.
inline TrainSummary cmd_train(const RunConfig& config, std::ostream& progress) {
  if (config.manifest.empty()) throw ConfigError("data.manifest is not set");
  std::optional<std::size_t> single;
  if (config.task != "bank") {
    try {
      single = parse_task(config.task);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  const auto samples = load_samples(read_manifest(config.manifest));
  std::filesystem::create_directories(config.output_dir);

  TrainSummary summary;
  summary.log = config.output_dir / "train.log";
  std::ofstream log(summary.log);
  if (!log) throw std::runtime_error("cannot write " + summary.log.string());
  write_log_header(log, config);
  for (const auto& s : samples)
    if (std::holds_alternative<FullImage>(select_roi(s.detections, config.setup.preprocess.confidence_floor)))
      log << s.id << ": fallback: full image\n";

  auto finish = [&](const TrainResult& r) {
    const auto path = config.output_dir / (task_name(r.task) + ".ckpt");
    save_checkpoint(path, r.model, task_metadata(config.setup, r));
    write_epoch_records(log, r);
    log << "task=" << task_name(r.task) << " checkpoint=" << path.filename().string()
        << " fnv1a=" << file_checksum(path) << '\n';
    progress << task_name(r.task) << ": best_epoch=" << r.best_epoch << " -> " << path.string() << '\n';
    summary.checkpoints.push_back(path);
  };
  if (single) {
    finish(train_task(config.setup, samples, *single));
  } else {
    for (const auto& outcome : train_bank(config.setup, samples)) {
      if (outcome.result) {
        finish(*outcome.result);
      } else {
        log << "task=" << task_name(outcome.task) << " skipped=" << outcome.skip_reason << '\n';
        progress << task_name(outcome.task) << ": skipped (" << outcome.skip_reason << ")\n";
      }
    }
  }
  if (!log) throw std::runtime_error("error writing " + summary.log.string());
  return summary;
}

// eval

struct EvalArgs {
  std::vector<std::filesystem::path> checkpoints;
  std::optional<std::filesystem::path> bank_dir;
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> scores_in;  // evaluate a score dump instead of running models
  std::optional<std::filesystem::path> report_out;
  std::optional<std::filesystem::path> roc_out;
  std::optional<std::filesystem::path> scores_out;
  std::optional<double> threshold;
};

inline std::vector<std::filesystem::path> checkpoint_paths(const std::vector<std::filesystem::path>& explicit_paths,
                                                           const std::optional<std::filesystem::path>& bank_dir) {
  std::vector<std::filesystem::path> paths = explicit_paths;
  if (bank_dir) {
    const auto found = bank_files(*bank_dir);
    paths.insert(paths.end(), found.begin(), found.end());
  }
  return paths;
}

inline void check_against_config(const Bank& bank, const RunConfig& config) {
  const auto* model = bank.any();
  if (model && !(model->config == config.setup.model)) throw IncompatibleError("checkpoint model config differs from run config");
  if (!(bank.preprocess == config.setup.preprocess)) throw IncompatibleError("checkpoint preprocessing differs from run config");
}

inline BankEvaluation cmd_eval(const EvalArgs& args, std::ostream& out) {
  std::optional<RunConfig> config;
  if (args.config) config = load_run_config(*args.config);
  const double threshold = args.threshold ? *args.threshold : config ? config->eval_threshold : 0.5;

  BankEvaluation ev;
  if (args.scores_in) {
    std::ifstream in(*args.scores_in);
    if (!in) throw MissingInputError("score file not found: " + args.scores_in->string());
    ev = read_scores(in, threshold, args.scores_in->string());
  } else {
    std::filesystem::path manifest;
    if (args.manifest) {
      manifest = *args.manifest;
    } else if (config && !config->manifest.empty()) {
      manifest = config->manifest;
    } else {
      throw ConfigError("eval needs --manifest or a config with data.manifest");
    }
    const Bank bank = load_bank(checkpoint_paths(args.checkpoints, args.bank_dir));
    if (config) check_against_config(bank, *config);
    const auto samples = load_samples(read_manifest(manifest));
    ev = evaluate(bank, samples, threshold);
  }

  write_report(out, ev.report, ev.ids);
  if (args.report_out) {
    std::ofstream f(*args.report_out);
    write_report(f, ev.report, ev.ids);
    if (!f) throw std::runtime_error("cannot write " + args.report_out->string());
  }
  if (args.roc_out) {
    std::ofstream f(*args.roc_out);
    write_roc_csv(f, ev.report.roc);
    if (!f) throw std::runtime_error("cannot write " + args.roc_out->string());
  }
  if (args.scores_out) {
    std::ofstream f(*args.scores_out);
    write_scores(f, ev);
    if (!f) throw std::runtime_error("cannot write " + args.scores_out->string());
  }
  return ev;
}

// infer

struct InferArgs {
  std::vector<std::filesystem::path> checkpoints;
  std::optional<std::filesystem::path> bank_dir;
  std::filesystem::path image;
  std::optional<std::filesystem::path> detection;
};

/// Prints "glaucoma p" and, when any feature classifier is loaded, the ten
/// "featureK p" lines; probabilities use six decimals.
inline SampleScores cmd_infer(const InferArgs& args, std::ostream& out, std::ostream& log) {
  const Bank bank = load_bank(checkpoint_paths(args.checkpoints, args.bank_dir));
  if (!bank.glaucoma) throw MissingInputError("no glaucoma checkpoint given");
  if (!std::filesystem::exists(args.image)) throw MissingInputError("image not found: " + args.image.string());
  const Image8 image = read_ppm(args.image);
  std::vector<DiscDetection> detections;
  if (args.detection) {
    if (!std::filesystem::exists(*args.detection)) {
      throw MissingInputError("detection file not found: " + args.detection->string());
    }
    detections = load_detection_file(*args.detection, {image.width, image.height});
  }
  const RoiPlan plan = select_roi(detections, bank.preprocess.confidence_floor);
  if (std::holds_alternative<FullImage>(plan)) log << "fallback: full image\n";
  const SampleScores s = score_image(bank, image, plan);

  bool has_features = false;
  for (const auto& f : bank.features) has_features = has_features || f.has_value();
  std::ostringstream text;
  text << std::fixed << std::setprecision(6) << "glaucoma " << s.glaucoma << '\n';
  if (has_features)
    for (std::size_t k = 0; k < kFeatureCount; ++k) text << task_name(k + 1) << ' ' << s.features[k] << '\n';
  out << text.str();
  return s;
}

}  // namespace brighteye
