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

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "brighteye/app.hpp"
#include "test_util.hpp"

namespace {

using namespace brighteye;
namespace bt = brighteye::testing;
namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args, const fs::path& dir) {
  const auto out = dir / "cli.out", err = dir / "cli.err";
  const std::string cmd = std::string(BRIGHTEYE_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

// Body of a training log without the lines that name output locations.
std::string log_body(const fs::path& log) {
  std::istringstream in(slurp(log));
  std::string line, body;
  while (std::getline(in, line))
    if (!line.starts_with("config.output.dir=")) body += line + "\n";
  return body;
}

class AppTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = bt::scratch_dir("app");
    SynthOptions opt;
    opt.count = 20;
    opt.seed = 7;
    cmd_synth(opt, dir_ / "data");
    std::ofstream cfg(dir_ / "run.cfg");
    cfg << "data.manifest = data/manifest.csv\n"
           "model.height = 16\nmodel.width = 16\nmodel.patch = 8\nmodel.dim = 8\n"
           "model.depth = 1\nmodel.heads = 2\n"
           "train.epochs = 2\ntrain.batch_size = 8\n";
  }

  static RunConfig config(const std::string& out, std::optional<bool> crop = {}, std::optional<bool> bg = {}) {
    RunConfig c = load_run_config(dir_ / "run.cfg");
    TrainOverrides o;
    o.out = dir_ / out;
    o.od_crop = crop;
    o.bg_removal = bg;
    apply_overrides(c, o);
    return c;
  }

  static fs::path dir_;
};

fs::path AppTest::dir_;

TEST_F(AppTest, SynthTreesAreByteIdentical) {
  SynthOptions opt;
  opt.count = 20;
  opt.seed = 7;
  cmd_synth(opt, dir_ / "data_again");
  for (const auto& e : fs::recursive_directory_iterator(dir_ / "data")) {
    if (e.is_regular_file()) {
      EXPECT_EQ(slurp(e.path()), slurp(dir_ / "data_again" / fs::relative(e.path(), dir_ / "data")));
    }
  }
}

TEST_F(AppTest, PreprocessWritesModelSizedImages) {
  std::ostringstream log;
  PreprocessOptions opt;
  opt.input_size = 24;
  EXPECT_EQ(cmd_preprocess(dir_ / "data/manifest.csv", opt, dir_ / "prep", log), 20u);
  const auto img = read_ppm(dir_ / "prep/synth0003.ppm");
  EXPECT_EQ(img.width, 24);
  EXPECT_EQ(log.str(), "");
}

TEST_F(AppTest, TrainRerunGivesIdenticalLogAndCheckpoint) {
  std::ostringstream progress;
  const auto a = cmd_train(config("train_a"), progress);
  const auto b = cmd_train(config("train_b"), progress);
  ASSERT_EQ(a.checkpoints.size(), 1u);
  EXPECT_EQ(file_checksum(a.checkpoints[0]), file_checksum(b.checkpoints[0]));
  EXPECT_EQ(log_body(a.log), log_body(b.log));
  const std::string log = slurp(a.log);
  EXPECT_NE(log.find("config.train.lr0=0.00020000000000000001\n"), std::string::npos);
  EXPECT_NE(log.find("assumed_defaults="), std::string::npos);
  EXPECT_NE(log.find("best_epoch="), std::string::npos);
}

TEST_F(AppTest, PreprocessingTogglesChangeCheckpoint) {
  std::ostringstream progress;
  const auto off = cmd_train(config("toggle_off", false, false), progress);
  const auto on = cmd_train(config("toggle_on", true, true), progress);
  EXPECT_NE(file_checksum(off.checkpoints[0]), file_checksum(on.checkpoints[0]));
  const auto ck = load_checkpoint<float>(on.checkpoints[0]);
  EXPECT_EQ(ck.metadata.at("preprocess.od_crop"), "true");
  EXPECT_EQ(ck.metadata.at("task"), "glaucoma");
}

TEST_F(AppTest, BankTrainingWritesMembers) {
  auto c = config("bank");
  c.task = "bank";
  c.setup.train.epochs = 1;
  std::ostringstream progress;
  const auto summary = cmd_train(c, progress);
  EXPECT_GE(summary.checkpoints.size(), 2u);
  const Bank bank = load_bank(bank_files(dir_ / "bank"));
  EXPECT_TRUE(bank.glaucoma.has_value());
  std::ostringstream report;
  EvalArgs args;
  args.bank_dir = dir_ / "bank";
  args.manifest = dir_ / "data/manifest.csv";
  cmd_eval(args, report);
  EXPECT_NE(report.str().find("nhd_mean="), std::string::npos);
}

TEST_F(AppTest, OracleBankScoresPerfectly) {
  const auto samples = load_samples(read_manifest(dir_ / "data/manifest.csv"));
  const auto ev = evaluate_with(
      [](const FundusSample& s) {
        SampleScores sc;
        sc.glaucoma = s.rg;
        for (std::size_t k = 0; k < kFeatureCount; ++k) sc.features[k] = s.features[k];
        return sc;
      },
      samples, 0.5);
  EXPECT_EQ(ev.report.tpr_at_95, 1.0);
  EXPECT_EQ(ev.report.auc, 1.0);
  EXPECT_EQ(ev.report.nhd_mean, 0.0);
}

TEST_F(AppTest, EvalIsRepeatableAndMatchesScoreDump) {
  std::ostringstream progress;
  const auto trained = cmd_train(config("eval_model"), progress);
  EvalArgs args;
  args.checkpoints = trained.checkpoints;
  args.manifest = dir_ / "data/manifest.csv";
  args.report_out = dir_ / "report1.txt";
  args.scores_out = dir_ / "scores.csv";
  std::ostringstream out1, out2;
  const auto ev = cmd_eval(args, out1);
  args.report_out = dir_ / "report2.txt";
  args.scores_out.reset();
  cmd_eval(args, out2);
  EXPECT_EQ(slurp(dir_ / "report1.txt"), slurp(dir_ / "report2.txt"));
  EXPECT_EQ(out1.str(), out2.str());

  // Recompute directly from the dumped per-sample scores.
  std::ifstream dump(dir_ / "scores.csv");
  std::string line;
  std::getline(dump, line);
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<std::array<double, kFeatureCount>> probs;
  std::vector<FeatureFlags> truth;
  while (std::getline(dump, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    labels.push_back(std::stoi(cells[1]));
    scores.push_back(std::stod(cells[2]));
    probs.emplace_back();
    truth.emplace_back();
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      probs.back()[k] = std::stod(cells[3 + k]);
      truth.back()[k] = static_cast<std::uint8_t>(std::stoi(cells[13 + k]));
    }
  }
  EXPECT_EQ(tpr_at_specificity(scores, labels, 0.95), ev.report.tpr_at_95);
  EXPECT_EQ(auc(scores, labels), ev.report.auc);
  const auto direct = evaluate_scores(scores, labels, probs, truth, 0.5);
  EXPECT_EQ(direct.nhd_mean, ev.report.nhd_mean);

  EvalArgs from_dump;
  from_dump.scores_in = dir_ / "scores.csv";
  std::ostringstream out3;
  cmd_eval(from_dump, out3);
  EXPECT_EQ(out3.str(), out1.str());
}

TEST_F(AppTest, EvalRejectsMismatchedConfig) {
  std::ostringstream progress;
  const auto trained = cmd_train(config("mismatch"), progress);
  std::ofstream(dir_ / "other.cfg") << "data.manifest = data/manifest.csv\n"
                                       "model.height = 16\nmodel.width = 16\nmodel.patch = 8\nmodel.dim = 16\n"
                                       "model.depth = 1\nmodel.heads = 2\n";
  const auto r = run_cli("eval --checkpoint " + trained.checkpoints[0].string() + " --config " +
                             (dir_ / "other.cfg").string(),
                         dir_);
  EXPECT_EQ(r.code, 3) << r.err;
  const auto ok = run_cli("eval --checkpoint " + trained.checkpoints[0].string() + " --config " +
                              (dir_ / "run.cfg").string(),
                          dir_);
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_NE(ok.out.find("tpr_at_95="), std::string::npos);
}

TEST_F(AppTest, InferFallbackAndCentredFullDetectionAgree) {
  std::ostringstream progress;
  const auto trained = cmd_train(config("infer_model"), progress);
  const auto image = dir_ / "data/images/synth0004.ppm";
  std::ofstream(dir_ / "full.txt") << "0 0.5 0.5 0.333333333 0.333333333 0.9\n";
  const auto bare = run_cli("infer --checkpoint " + trained.checkpoints[0].string() + " --image " + image.string(), dir_);
  ASSERT_EQ(bare.code, 0) << bare.err;
  EXPECT_NE(bare.err.find("fallback: full image"), std::string::npos);
  const auto with_det = run_cli("infer --checkpoint " + trained.checkpoints[0].string() + " --image " +
                                    image.string() + " --detection " + (dir_ / "full.txt").string(),
                                dir_);
  ASSERT_EQ(with_det.code, 0) << with_det.err;
  EXPECT_EQ(with_det.err.find("fallback"), std::string::npos);
  EXPECT_EQ(bare.out, with_det.out);
  ASSERT_EQ(bare.out.size(), std::string("glaucoma 0.000000\n").size());
  EXPECT_TRUE(bare.out.starts_with("glaucoma 0.") || bare.out.starts_with("glaucoma 1.000000"));
}

TEST_F(AppTest, InferPrintsBankInFixedOrder) {
  auto c = config("infer_bank");
  c.task = "bank";
  c.setup.train.epochs = 1;
  std::ostringstream progress, out, log;
  cmd_train(c, progress);
  InferArgs args;
  args.bank_dir = dir_ / "infer_bank";
  args.image = dir_ / "data/images/synth0001.ppm";
  args.detection = dir_ / "data/detections/synth0001.txt";
  const auto s = cmd_infer(args, out, log);
  std::istringstream lines(out.str());
  std::string name;
  double p = 0;
  std::vector<std::string> names;
  while (lines >> name >> p) {
    names.push_back(name);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
  ASSERT_EQ(names.size(), 11u);
  for (std::size_t t = 0; t < kTaskCount; ++t) EXPECT_EQ(names[t], task_name(t));
  EXPECT_GE(s.glaucoma, 0.0);
}

TEST_F(AppTest, ExitCodes) {
  const auto missing = run_cli("train --config " + (dir_ / "nope.cfg").string(), dir_);
  EXPECT_EQ(missing.code, 2);
  std::ofstream(dir_ / "no_manifest.cfg") << "data.manifest = absent/manifest.csv\n";
  const auto no_manifest = run_cli("train --config " + (dir_ / "no_manifest.cfg").string(), dir_);
  EXPECT_EQ(no_manifest.code, 2);
  EXPECT_NE(no_manifest.err.find("absent/manifest.csv"), std::string::npos) << no_manifest.err;
  std::ofstream(dir_ / "bad_key.cfg") << "model.colour = red\n";
  EXPECT_EQ(run_cli("train --config " + (dir_ / "bad_key.cfg").string(), dir_).code, 1);
  EXPECT_EQ(run_cli("frobnicate", dir_).code, 1);
  EXPECT_EQ(run_cli("train", dir_).code, 1);
  EXPECT_EQ(run_cli("train --config " + (dir_ / "run.cfg").string() + " --od-crop maybe", dir_).code, 1);
  std::ofstream(dir_ / "junk.ckpt") << "garbage";
  EXPECT_EQ(run_cli("infer --checkpoint " + (dir_ / "junk.ckpt").string() + " --image x.ppm", dir_).code, 3);
  EXPECT_EQ(run_cli("--help", dir_).code, 0);
}

}  // namespace
