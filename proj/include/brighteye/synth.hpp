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

// Synthetic fundus-like images for desk-scale experiments.
//
// Each image has a black surround, a reddish circular field and a bright
// optic disc placed away from the image centre. The label lives only in the
// disc: referable samples have a large pale cup, non-referable a small one.
// Feature k of a referable sample is a dark notch on the disc rim at angle
// 36 * (k - 1) degrees. The disc box is written out as a detector file.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "brighteye/common.hpp"
#include "brighteye/dataset.hpp"
#include "brighteye/detection.hpp"
#include "brighteye/image.hpp"
#include "brighteye/preprocess.hpp"

namespace brighteye {

struct SynthOptions {
  std::size_t count = 20;
  std::uint64_t seed = 7;
  int image_size = 128;
  double positive_fraction = 0.5;
  double feature_rate = 0.5;  // per-feature presence probability on referable samples
};

struct SynthSample {
  FundusSample sample;
  DiscDetection disc;  // ground truth, pixels
};

namespace detail {

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

}  // namespace detail

inline SynthSample render_synthetic(std::size_t index, int rg, const SynthOptions& opt) {
  std::mt19937_64 rng(mix_seed(opt.seed, 100 + index));
  auto uniform = [&rng](double lo, double hi) { return lo + (hi - lo) * detail::unit_uniform(rng); };
  const int s = opt.image_size;
  const double size = s;

  SynthSample out;
  FundusSample& fs = out.sample;
  fs.id = "synth" + std::to_string(10000 + index).substr(1);
  fs.rg = rg;
  if (rg) {
    for (auto& f : fs.features) f = detail::unit_uniform(rng) < opt.feature_rate ? 1 : 0;
  }

  const double field_x = size / 2 + uniform(-0.03, 0.03) * size;
  const double field_y = size / 2 + uniform(-0.03, 0.03) * size;
  const double field_r = 0.46 * size;
  const double illum = uniform(0.8, 1.2);
  const double disc_r = uniform(0.055, 0.07) * size;
  const double angle = uniform(0.0, 2.0 * std::numbers::pi);
  const double dist = uniform(0.18, 0.28) * size;
  const double disc_x = field_x + dist * std::cos(angle);
  const double disc_y = field_y + dist * std::sin(angle);
  const double cup_r = disc_r * (rg ? uniform(0.6, 0.75) : uniform(0.25, 0.4));
  const double notch_r = 0.2 * disc_r;
  std::vector<std::pair<double, double>> notches;
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    if (!fs.features[k]) continue;
    const double a = static_cast<double>(k) * 2.0 * std::numbers::pi / kFeatureCount;
    notches.emplace_back(disc_x + 0.85 * disc_r * std::cos(a), disc_y + 0.85 * disc_r * std::sin(a));
  }

  Image8 img(s, s);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      auto* p = img.at(x, y);
      const double px = x + 0.5, py = y + 0.5;
      const double rf = std::hypot(px - field_x, py - field_y);
      if (rf > field_r) {
        const double n = uniform(0.0, 5.0);
        p[0] = p[1] = p[2] = detail::to_byte(n);
        continue;
      }
      const double vignette = 1.0 - 0.35 * (rf / field_r) * (rf / field_r);
      double r = 165 * illum * vignette + uniform(-6, 6);
      double g = 72 * illum * vignette + uniform(-4, 4);
      double b = 38 * illum * vignette + uniform(-3, 3);
      const double rd = std::hypot(px - disc_x, py - disc_y);
      if (rd < disc_r + 1.0) {
        const double w = std::clamp(disc_r + 1.0 - rd, 0.0, 1.0);  // soft rim
        double dr = 240, dg = 195, db = 125;
        if (rd < cup_r) {
          dr = 255;
          dg = 245;
          db = 215;
        }
        for (const auto& [nx, ny] : notches) {
          if (std::hypot(px - nx, py - ny) < notch_r) {
            dr = 120;
            dg = 45;
            db = 25;
          }
        }
        r = (1 - w) * r + w * dr * illum;
        g = (1 - w) * g + w * dg * illum;
        b = (1 - w) * b + w * db * illum;
      }
      p[0] = detail::to_byte(r);
      p[1] = detail::to_byte(g);
      p[2] = detail::to_byte(b);
    }
  fs.image = std::move(img);
  out.disc = {disc_x, disc_y, 2 * disc_r, 2 * disc_r, uniform(0.6, 1.0)};
  fs.detections = {out.disc};
  return out;
}

/// Exactly round(count * positive_fraction) referable samples, in seeded
/// random positions.
inline std::vector<SynthSample> generate_synthetic(const SynthOptions& opt) {
  if (opt.image_size < 16) throw std::invalid_argument("synthetic image size must be at least 16");
  const auto positives = static_cast<std::size_t>(std::llround(opt.positive_fraction * opt.count));
  std::vector<int> labels(opt.count, 0);
  std::fill_n(labels.begin(), std::min(positives, opt.count), 1);
  std::mt19937_64 rng(mix_seed(opt.seed, 0));
  for (std::size_t i = labels.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(detail::unit_uniform(rng) * static_cast<double>(i));
    std::swap(labels[i - 1], labels[std::min(j, i - 1)]);
  }
  std::vector<SynthSample> out;
  out.reserve(opt.count);
  for (std::size_t i = 0; i < opt.count; ++i) out.push_back(render_synthetic(i, labels[i], opt));
  return out;
}

/// Writes images/<id>.ppm, detections/<id>.txt and manifest.csv under `dir`.
inline DatasetManifest write_synthetic(const std::filesystem::path& dir,
                                       const std::vector<SynthSample>& samples) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "detections");
  DatasetManifest m;
  m.base_dir = dir;
  for (const auto& s : samples) {
    const auto& fsample = s.sample;
    ManifestRow row;
    row.id = fsample.id;
    row.image = "images/" + fsample.id + ".ppm";
    row.width = fsample.image.width;
    row.height = fsample.image.height;
    row.rg = fsample.rg;
    row.features = fsample.features;
    row.detection = "detections/" + fsample.id + ".txt";
    write_ppm(dir / row.image, fsample.image);
    std::ofstream det(dir / row.detection);
    det << format_detection_line(s.disc, {row.width, row.height}) << '\n';
    if (!det) throw std::runtime_error("cannot write " + (dir / row.detection).string());
    m.rows.push_back(std::move(row));
  }
  save_manifest(dir / "manifest.csv", m);
  return m;
}

}  // namespace brighteye
