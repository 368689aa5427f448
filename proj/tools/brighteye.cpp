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

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "brighteye/app.hpp"

namespace {

using namespace brighteye;
namespace fs = std::filesystem;

std::optional<bool> optional_bool(const std::string& key, const std::string& value) {
  if (value.empty()) return std::nullopt;
  return parse_bool(key, value);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"brighteye: glaucoma and feature classification of fundus images"};
  app.require_subcommand(1);

  // synth
  SynthOptions synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic fundus dataset");
  synth_cmd->add_option("-n,--count", synth.count, "Number of images")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--size", synth.image_size, "Image side in pixels")->capture_default_str();
  synth_cmd->add_option("--positive-fraction", synth.positive_fraction, "Share of referable samples")
      ->capture_default_str();
  synth_cmd->add_option("--feature-rate", synth.feature_rate, "Feature presence rate on referable samples")
      ->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();

  // preprocess
  std::string pre_manifest, pre_out, pre_config, pre_crop, pre_bg;
  auto* pre_cmd = app.add_subcommand("preprocess", "Write model-ready images for a manifest");
  pre_cmd->add_option("--manifest", pre_manifest, "Dataset manifest")->required();
  pre_cmd->add_option("--out", pre_out, "Output directory")->required();
  pre_cmd->add_option("--config", pre_config, "Run config supplying preprocessing settings");
  pre_cmd->add_option("--od-crop", pre_crop, "Crop around the detected optic disc (bool)");
  pre_cmd->add_option("--bg-removal", pre_bg, "Remove the black surround (bool)");

  // train
  std::string train_config, train_out, train_crop, train_bg, train_task_name;
  std::optional<std::uint64_t> train_seed;
  auto* train_cmd = app.add_subcommand("train", "Train a classifier or a classifier bank");
  train_cmd->add_option("--config", train_config, "Run config")->required();
  train_cmd->add_option("--seed", train_seed, "Override the seed");
  train_cmd->add_option("--out", train_out, "Override the output directory");
  train_cmd->add_option("--od-crop", train_crop, "Override optic disc cropping (bool)");
  train_cmd->add_option("--bg-removal", train_bg, "Override background removal (bool)");
  train_cmd->add_option("--task", train_task_name, "glaucoma, feature1..feature10 or bank");

  // eval
  EvalArgs eval;
  std::vector<std::string> eval_ckpts;
  std::string eval_bank, eval_manifest, eval_config, eval_scores, eval_report, eval_roc, eval_dump;
  std::optional<double> eval_threshold;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate checkpoints on a manifest");
  eval_cmd->add_option("--checkpoint", eval_ckpts, "Checkpoint file (repeatable)");
  eval_cmd->add_option("--bank", eval_bank, "Directory of checkpoints");
  eval_cmd->add_option("--manifest", eval_manifest, "Dataset manifest");
  eval_cmd->add_option("--config", eval_config, "Run config the checkpoints must match");
  eval_cmd->add_option("--scores", eval_scores, "Evaluate a score dump instead of running models");
  eval_cmd->add_option("--out", eval_report, "Report file");
  eval_cmd->add_option("--roc", eval_roc, "ROC curve CSV");
  eval_cmd->add_option("--dump-scores", eval_dump, "Write per-sample scores");
  eval_cmd->add_option("--threshold", eval_threshold, "Feature probability threshold");

  // infer
  std::vector<std::string> infer_ckpts;
  std::string infer_bank, infer_image, infer_det;
  auto* infer_cmd = app.add_subcommand("infer", "Predict probabilities for one image");
  infer_cmd->add_option("--checkpoint", infer_ckpts, "Checkpoint file (repeatable)");
  infer_cmd->add_option("--bank", infer_bank, "Directory of checkpoints");
  infer_cmd->add_option("--image", infer_image, "PPM image")->required();
  infer_cmd->add_option("--detection", infer_det, "Detection file for the image");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth_cmd) {
      const auto m = cmd_synth(synth, synth_out);
      std::cout << "wrote " << m.rows.size() << " samples to " << synth_out << '\n';
    } else if (*pre_cmd) {
      PreprocessOptions opt;
      if (!pre_config.empty()) opt = load_run_config(pre_config).setup.preprocess;
      if (auto v = optional_bool("--od-crop", pre_crop)) opt.od_crop = *v;
      if (auto v = optional_bool("--bg-removal", pre_bg)) opt.bg_removal = *v;
      const auto n = cmd_preprocess(pre_manifest, opt, pre_out, std::cerr);
      std::cout << "wrote " << n << " images to " << pre_out << '\n';
    } else if (*train_cmd) {
      TrainOverrides o;
      o.seed = train_seed;
      if (!train_out.empty()) o.out = fs::path(train_out);
      o.od_crop = optional_bool("--od-crop", train_crop);
      o.bg_removal = optional_bool("--bg-removal", train_bg);
      if (!train_task_name.empty()) o.task = train_task_name;
      RunConfig config = load_run_config(train_config);
      apply_overrides(config, o);
      cmd_train(config, std::cout);
    } else if (*eval_cmd) {
      eval.checkpoints.assign(eval_ckpts.begin(), eval_ckpts.end());
      if (!eval_bank.empty()) eval.bank_dir = eval_bank;
      if (!eval_manifest.empty()) eval.manifest = eval_manifest;
      if (!eval_config.empty()) eval.config = eval_config;
      if (!eval_scores.empty()) eval.scores_in = eval_scores;
      if (!eval_report.empty()) eval.report_out = eval_report;
      if (!eval_roc.empty()) eval.roc_out = eval_roc;
      if (!eval_dump.empty()) eval.scores_out = eval_dump;
      eval.threshold = eval_threshold;
      cmd_eval(eval, std::cout);
    } else if (*infer_cmd) {
      InferArgs args;
      args.checkpoints.assign(infer_ckpts.begin(), infer_ckpts.end());
      if (!infer_bank.empty()) args.bank_dir = infer_bank;
      args.image = infer_image;
      if (!infer_det.empty()) args.detection = fs::path(infer_det);
      cmd_infer(args, std::cout, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "brighteye: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitOk;
}
