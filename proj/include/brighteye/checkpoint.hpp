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

// Checkpoint file: a text manifest followed by raw parameter data.
//
//   brighteye-checkpoint 1
//   config.<key>=<value>          (every ModelConfig field)
//   meta.<key>=<value>            (free-form, e.g. task and preprocessing)
//   param <name> <d0>x<d1>... offset=<bytes> count=<values>
//   end
//   <little-endian float32 values, parameters in manifest order>
//
// Offsets are relative to the first byte after the "end" line.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "brighteye/common.hpp"
#include "brighteye/model.hpp"

namespace brighteye {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kCheckpointMagic = "brighteye-checkpoint";
inline constexpr int kCheckpointVersion = 1;

using Metadata = std::map<std::string, std::string>;

template <typename T>
struct Checkpoint {
  BrighteyeModel<T> model;
  Metadata metadata;
};

inline std::map<std::string, std::string> config_entries(const ModelConfig& c) {
  return {{"height", std::to_string(c.height)},
          {"width", std::to_string(c.width)},
          {"patch", std::to_string(c.patch)},
          {"dim", std::to_string(c.dim)},
          {"depth", std::to_string(c.depth)},
          {"heads", std::to_string(c.heads)},
          {"agg_hidden", std::to_string(c.agg_hidden)},
          {"mlp_hidden", std::to_string(c.mlp_hidden)},
          {"activation", to_string(c.activation)}};
}

namespace detail {

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xffU) << 24) | ((v & 0xff00U) << 8) | ((v >> 8) & 0xff00U) | (v >> 24);
  }
  return v;
}

}  // namespace detail

template <typename T>
void write_checkpoint(std::ostream& out, const BrighteyeModel<T>& model, const Metadata& metadata = {}) {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  for (const auto& [k, v] : config_entries(model.config)) out << "config." << k << '=' << v << '\n';
  for (const auto& [k, v] : metadata) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw CheckpointError("metadata entry '" + k + "' cannot be stored");
    }
    out << "meta." << k << '=' << v << '\n';
  }
  const auto params = model.parameters();
  std::size_t offset = 0;
  for (const auto& p : params) {
    std::string dims;
    for (std::size_t i = 0; i < p.tensor.rank(); ++i) {
      if (i) dims += 'x';
      dims += std::to_string(p.tensor.dim(i));
    }
    out << "param " << p.name << ' ' << dims << " offset=" << offset
        << " count=" << p.tensor.numel() << '\n';
    offset += p.tensor.numel() * 4;
  }
  out << "end\n";
  for (const auto& p : params) {
    for (T v : p.tensor.data()) {
      const std::uint32_t bits = detail::to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      char bytes[4];
      std::memcpy(bytes, &bits, 4);
      out.write(bytes, 4);
    }
  }
  if (!out) throw CheckpointError("checkpoint write failed");
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const BrighteyeModel<T>& model,
                     const Metadata& metadata = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  write_checkpoint(out, model, metadata);
}

template <typename T = float>
Checkpoint<T> read_checkpoint(std::istream& in, const std::string& source = "<stream>") {
  auto fail = [&source](const std::string& why) { return CheckpointError(source + ": " + why); };
  std::string line;
  if (!std::getline(in, line)) throw fail("empty checkpoint");
  {
    std::istringstream head(line);
    std::string magic;
    int version = 0;
    head >> magic >> version;
    if (magic != kCheckpointMagic) throw fail("not a brighteye checkpoint");
    if (version != kCheckpointVersion) throw fail("unsupported checkpoint version " + std::to_string(version));
  }
  std::map<std::string, std::string> config;
  Metadata metadata;
  struct Entry {
    std::string name;
    std::string dims;
    std::size_t offset = 0;
    std::size_t count = 0;
  };
  std::vector<Entry> entries;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.rfind("param ", 0) == 0) {
      std::istringstream fields(line.substr(6));
      Entry e;
      std::string off, cnt;
      fields >> e.name >> e.dims >> off >> cnt;
      if (off.rfind("offset=", 0) != 0 || cnt.rfind("count=", 0) != 0) throw fail("bad param line: " + line);
      e.offset = std::stoull(off.substr(7));
      e.count = std::stoull(cnt.substr(6));
      entries.push_back(e);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw fail("bad manifest line: " + line);
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key.rfind("config.", 0) == 0) {
      config[key.substr(7)] = value;
    } else if (key.rfind("meta.", 0) == 0) {
      metadata[key.substr(5)] = value;
    } else {
      throw fail("unknown manifest key " + key);
    }
  }
  if (!ended) throw fail("manifest not terminated");

  ModelConfig c;
  try {
    c.height = std::stoull(config.at("height"));
    c.width = std::stoull(config.at("width"));
    c.patch = std::stoull(config.at("patch"));
    c.dim = std::stoull(config.at("dim"));
    c.depth = std::stoull(config.at("depth"));
    c.heads = std::stoull(config.at("heads"));
    c.agg_hidden = std::stoull(config.at("agg_hidden"));
    c.mlp_hidden = std::stoull(config.at("mlp_hidden"));
    c.activation = parse_activation(config.at("activation"));
  } catch (const std::exception& e) {
    throw fail(std::string("incomplete model config (") + e.what() + ")");
  }
  Checkpoint<T> ck{BrighteyeModel<T>::zeros(c), std::move(metadata)};
  auto params = ck.model.parameters();
  if (params.size() != entries.size()) throw fail("parameter list does not match config");

  std::vector<char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t expected_offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& e = entries[i];
    if (e.name != p.name || e.count != p.tensor.numel() || e.offset != expected_offset) {
      throw fail("parameter " + e.name + " does not match expected " + p.name + " " +
                 shape_string(p.tensor.shape()));
    }
    if (e.offset + e.count * 4 > blob.size()) throw fail("truncated parameter data for " + e.name);
    auto dst = p.tensor.mutable_data();
    for (std::size_t j = 0; j < e.count; ++j) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, blob.data() + e.offset + j * 4, 4);
      const float v = std::bit_cast<float>(detail::to_little_endian(bits));
      if (!std::isfinite(v)) throw fail("non-finite value in " + e.name);
      dst[j] = static_cast<T>(v);
    }
    expected_offset += e.count * 4;
  }
  if (expected_offset != blob.size()) throw fail("trailing bytes after parameter data");
  return ck;
}

template <typename T = float>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return read_checkpoint<T>(in, path.string());
}

/// FNV-1a of a file's bytes, as 16 hex digits.
inline std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a(bytes);
  return hex.str();
}

}  // namespace brighteye
