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

// Dataset manifest (comma-separated, header row) and in-memory samples.
//
//   id,image,width,height,rg,f1,...,f10,detection
//
// Paths are relative to the manifest's directory; an empty detection field
// means the image has no detector output.

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "brighteye/common.hpp"
#include "brighteye/detection.hpp"
#include "brighteye/image.hpp"

namespace brighteye {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ManifestRow {
  std::string id;
  std::string image;  // relative to the manifest directory
  int width = 0;
  int height = 0;
  int rg = 0;
  FeatureFlags features{};
  std::string detection;  // relative path, empty if none
};

struct DatasetManifest {
  std::filesystem::path base_dir;
  std::vector<ManifestRow> rows;
};

struct FundusSample {
  std::string id;
  Image8 image;
  int rg = 0;
  FeatureFlags features{};
  std::vector<DiscDetection> detections;

  /// Label of task 0 (glaucoma) or task k in 1..10 (feature k).
  int label(std::size_t task) const { return task == 0 ? rg : features.at(task - 1); }
};

inline std::string manifest_header() {
  std::string h = "id,image,width,height,rg";
  for (std::size_t k = 1; k <= kFeatureCount; ++k) h += ",f" + std::to_string(k);
  return h + ",detection";
}

inline void write_manifest(std::ostream& out, const DatasetManifest& m) {
  out << manifest_header() << '\n';
  for (const auto& r : m.rows) {
    out << r.id << ',' << r.image << ',' << r.width << ',' << r.height << ',' << r.rg;
    for (auto f : r.features) out << ',' << static_cast<int>(f);
    out << ',' << r.detection << '\n';
  }
}

inline DatasetManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir,
                                      const std::string& source = "<manifest>") {
  DatasetManifest m;
  m.base_dir = base_dir;
  std::string line;
  if (!std::getline(in, line)) throw ManifestError(source + ": empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != manifest_header()) throw ManifestError(source + ":1: unexpected header");
  std::set<std::string> ids;
  for (int line_no = 2; std::getline(in, line); ++line_no) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) {
      return ManifestError(source + ":" + std::to_string(line_no) + ": " + why);
    };
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 6 + kFeatureCount) throw fail("expected " + std::to_string(6 + kFeatureCount) + " fields");
    auto binary = [&](const std::string& s) {
      if (s != "0" && s != "1") throw fail("label '" + s + "' is not 0 or 1");
      return s == "1" ? 1 : 0;
    };
    auto positive_int = [&](const std::string& s) {
      try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size() || v <= 0) throw std::invalid_argument(s);
        return v;
      } catch (const std::exception&) {
        throw fail("invalid extent '" + s + "'");
      }
    };
    ManifestRow r;
    r.id = cells[0];
    if (r.id.empty()) throw fail("empty id");
    if (!ids.insert(r.id).second) throw fail("duplicate id " + r.id);
    r.image = cells[1];
    r.width = positive_int(cells[2]);
    r.height = positive_int(cells[3]);
    r.rg = binary(cells[4]);
    for (std::size_t k = 0; k < kFeatureCount; ++k) r.features[k] = static_cast<std::uint8_t>(binary(cells[5 + k]));
    r.detection = cells[5 + kFeatureCount];
    m.rows.push_back(std::move(r));
  }
  return m;
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("manifest not found: " + path.string());
  return parse_manifest(in, path.parent_path(), path.string());
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  write_manifest(out, m);
}

/// Reads every image and detection file named by the manifest.
inline std::vector<FundusSample> load_samples(const DatasetManifest& m) {
  std::vector<FundusSample> out;
  out.reserve(m.rows.size());
  for (const auto& r : m.rows) {
    const auto image_path = m.base_dir / r.image;
    if (!std::filesystem::exists(image_path)) throw MissingInputError("image not found: " + image_path.string());
    FundusSample s;
    s.id = r.id;
    s.image = read_ppm(image_path);
    if (s.image.width != r.width || s.image.height != r.height) {
      throw ManifestError(r.id + ": manifest extent " + std::to_string(r.width) + "x" +
                          std::to_string(r.height) + " differs from image " +
                          std::to_string(s.image.width) + "x" + std::to_string(s.image.height));
    }
    s.rg = r.rg;
    s.features = r.features;
    if (!r.detection.empty()) {
      const auto det_path = m.base_dir / r.detection;
      if (!std::filesystem::exists(det_path)) throw MissingInputError("detection file not found: " + det_path.string());
      s.detections = load_detection_file(det_path, {r.width, r.height});
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace brighteye
