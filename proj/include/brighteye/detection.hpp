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

// Optic-disc detector output: parsing of normalized bounding-box files and
// the per-image ROI decision (crop around the disc, or the full image when
// nothing usable was detected).

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "brighteye/metrics.hpp"

namespace brighteye {

class DetectionFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Disc box in pixels.
struct DiscDetection {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  double confidence = 1.0;

  bool operator==(const DiscDetection&) const = default;
};

struct ImageExtent {
  int width = 0;
  int height = 0;
};

inline constexpr double kDefaultConfidenceFloor = 0.25;

/// Normalized-coordinate line "class cx cy w h confidence" for a detection.
inline std::string format_detection_line(const DiscDetection& d, ImageExtent extent) {
  std::ostringstream out;
  out.precision(9);
  out << 0 << ' ' << d.cx / extent.width << ' ' << d.cy / extent.height << ' '
      << d.w / extent.width << ' ' << d.h / extent.height << ' ' << d.confidence;
  return out.str();
}

/// Parses one detection file. Blank lines are ignored; anything else must be
/// six numeric fields with geometry and confidence in [0,1].
inline std::vector<DiscDetection> parse_detections(std::istream& in, ImageExtent extent,
                                                   const std::string& source = "<stream>") {
  if (extent.width <= 0 || extent.height <= 0) {
    throw DetectionFormatError(source + ": image extent unknown");
  }
  std::vector<DiscDetection> out;
  std::string line;
  for (int line_no = 1; std::getline(in, line); ++line_no) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& why) {
      return DetectionFormatError(source + ":" + std::to_string(line_no) + ": " + why);
    };
    std::istringstream fields(line);
    double cls = 0, cx = 0, cy = 0, w = 0, h = 0, conf = 0;
    if (!(fields >> cls >> cx >> cy >> w >> h >> conf)) {
      throw fail("expected 'class cx cy w h confidence'");
    }
    std::string extra;
    if (fields >> extra) throw fail("trailing field '" + extra + "'");
    for (double v : {cx, cy, w, h}) {
      if (!(v >= 0.0 && v <= 1.0)) throw fail("normalized coordinate outside [0,1]");
    }
    if (!(conf >= 0.0 && conf <= 1.0)) throw fail("confidence outside [0,1]");
    if (w <= 0.0 || h <= 0.0) throw fail("box extent must be positive");
    out.push_back({cx * extent.width, cy * extent.height, w * extent.width, h * extent.height, conf});
  }
  std::stable_sort(out.begin(), out.end(), [](const DiscDetection& a, const DiscDetection& b) {
    return a.confidence > b.confidence;
  });
  return out;
}

inline std::vector<DiscDetection> load_detection_file(const std::filesystem::path& path,
                                                      ImageExtent extent) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open detection file " + path.string());
  return parse_detections(in, extent, path.string());
}

/// Loads <dir>/<image-id>.txt for every listed image. Images without a file
/// are absent from the result.
inline std::map<std::string, std::vector<DiscDetection>> load_detections(
    const std::filesystem::path& dir, const std::map<std::string, ImageExtent>& images) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("detection directory not found: " + dir.string());
  }
  std::map<std::string, std::vector<DiscDetection>> out;
  for (const auto& [id, extent] : images) {
    const auto path = dir / (id + ".txt");
    if (std::filesystem::exists(path)) out[id] = load_detection_file(path, extent);
  }
  return out;
}

struct CropDisc {
  DiscDetection detection;
  bool operator==(const CropDisc&) const = default;
};

struct FullImage {
  bool operator==(const FullImage&) const = default;
};

using RoiPlan = std::variant<CropDisc, FullImage>;

/// Highest-confidence detection at or above the floor; otherwise the full image.
inline RoiPlan select_roi(std::span<const DiscDetection> detections,
                          double confidence_floor = kDefaultConfidenceFloor) {
  const DiscDetection* best = nullptr;
  for (const auto& d : detections) {
    if (d.confidence < confidence_floor) continue;
    if (!best || d.confidence > best->confidence) best = &d;
  }
  if (best) return CropDisc{*best};
  return FullImage{};
}

/// AUC of per-image max detector confidence against disc-present flags.
inline double detector_auc(std::span<const double> max_confidence,
                           std::span<const int> disc_present) {
  return auc(max_confidence, disc_present);
}

}  // namespace brighteye
