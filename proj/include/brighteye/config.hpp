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

// Run configuration: flat "key = value" text, '#' starts a comment.
// Unknown keys are rejected. effective() lists every value, defaults
// included, in a fixed order for run logs.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "brighteye/model.hpp"
#include "brighteye/preprocess.hpp"
#include "brighteye/train.hpp"

namespace brighteye {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  TrainSetup setup;
  std::string task = "glaucoma";  // glaucoma, feature1..feature10 or bank
  std::filesystem::path manifest;
  std::filesystem::path output_dir = "run";
  double eval_threshold = 0.5;

  std::vector<std::pair<std::string, std::string>> effective() const;
};

/// Settings with no value given by the method description; flagged in logs.
inline const std::vector<std::string>& assumed_default_keys() {
  static const std::vector<std::string> keys = {
      "model.height",      "model.width",      "model.dim",         "model.depth",
      "model.heads",       "model.agg_hidden", "model.mlp_hidden",  "model.activation",
      "train.batch_size",  "train.epochs",     "train.adam_beta1",  "train.adam_beta2",
      "train.adam_eps",    "train.max_steps",  "train.negatives",   "preprocess.bg_threshold",
      "preprocess.confidence_floor", "eval.threshold"};
  return keys;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace detail

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

/// Field table shared by the parser and effective().
class ConfigFields {
 public:
  using Setter = std::function<void(RunConfig&, const std::string&)>;
  using Getter = std::function<std::string(const RunConfig&)>;

  static const ConfigFields& instance() {
    static const ConfigFields fields;
    return fields;
  }

  const std::vector<std::string>& keys() const { return order_; }

  void set(RunConfig& c, const std::string& key, const std::string& value) const {
    const auto it = setters_.find(key);
    if (it == setters_.end()) throw ConfigError("unknown configuration key '" + key + "'");
    try {
      it->second(c, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(key + ": invalid value '" + value + "' (" + e.what() + ")");
    }
  }

  std::string get(const RunConfig& c, const std::string& key) const { return getters_.at(key)(c); }

 private:
  ConfigFields() {
    auto size_field = [this](const std::string& key, auto member) {
      add(key,
          [member](RunConfig& c, const std::string& v) {
            std::size_t used = 0;
            const auto n = std::stoull(v, &used);
            if (used != v.size() || v.front() == '-') throw ConfigError("not a non-negative integer: " + v);
            member(c) = static_cast<std::size_t>(n);
          },
          [member](const RunConfig& c) { return std::to_string(member(c)); });
    };
    auto real_field = [this](const std::string& key, auto member) {
      add(key,
          [member](RunConfig& c, const std::string& v) {
            std::size_t used = 0;
            const double d = std::stod(v, &used);
            if (used != v.size() || !std::isfinite(d)) throw ConfigError("not a finite number: " + v);
            member(c) = d;
          },
          [member](const RunConfig& c) { return detail::format_double(member(c)); });
    };
    auto bool_field = [this](const std::string& key, auto member) {
      add(key, [member, key](RunConfig& c, const std::string& v) { member(c) = parse_bool(key, v); },
          [member](const RunConfig& c) { return std::string(member(c) ? "true" : "false"); });
    };

    add("seed", [](RunConfig& c, const std::string& v) { c.setup.train.seed = std::stoull(v); },
        [](const RunConfig& c) { return std::to_string(c.setup.train.seed); });
    add("task",
        [](RunConfig& c, const std::string& v) {
          if (v != "bank") parse_task(v);
          c.task = v;
        },
        [](const RunConfig& c) { return c.task; });
    add("data.manifest", [](RunConfig& c, const std::string& v) { c.manifest = v; },
        [](const RunConfig& c) { return c.manifest.string(); });
    add("output.dir", [](RunConfig& c, const std::string& v) { c.output_dir = v; },
        [](const RunConfig& c) { return c.output_dir.string(); });

    size_field("model.height", [](auto& c) -> auto& { return c.setup.model.height; });
    size_field("model.width", [](auto& c) -> auto& { return c.setup.model.width; });
    size_field("model.patch", [](auto& c) -> auto& { return c.setup.model.patch; });
    size_field("model.dim", [](auto& c) -> auto& { return c.setup.model.dim; });
    size_field("model.depth", [](auto& c) -> auto& { return c.setup.model.depth; });
    size_field("model.heads", [](auto& c) -> auto& { return c.setup.model.heads; });
    size_field("model.agg_hidden", [](auto& c) -> auto& { return c.setup.model.agg_hidden; });
    size_field("model.mlp_hidden", [](auto& c) -> auto& { return c.setup.model.mlp_hidden; });
    add("model.activation",
        [](RunConfig& c, const std::string& v) { c.setup.model.activation = parse_activation(v); },
        [](const RunConfig& c) { return to_string(c.setup.model.activation); });

    real_field("train.lr0", [](auto& c) -> auto& { return c.setup.train.schedule.lr0; });
    real_field("train.lr_decay", [](auto& c) -> auto& { return c.setup.train.schedule.factor; });
    size_field("train.lr_period", [](auto& c) -> auto& { return c.setup.train.schedule.period; });
    size_field("train.batch_size", [](auto& c) -> auto& { return c.setup.train.batch_size; });
    size_field("train.epochs", [](auto& c) -> auto& { return c.setup.train.epochs; });
    size_field("train.max_steps", [](auto& c) -> auto& { return c.setup.train.max_steps; });
    real_field("train.adam_beta1", [](auto& c) -> auto& { return c.setup.train.adam.beta1; });
    real_field("train.adam_beta2", [](auto& c) -> auto& { return c.setup.train.adam.beta2; });
    real_field("train.adam_eps", [](auto& c) -> auto& { return c.setup.train.adam.eps; });
    size_field("train.split_train", [](auto& c) -> auto& { return c.setup.train.split.train; });
    size_field("train.split_val", [](auto& c) -> auto& { return c.setup.train.split.val; });
    add("train.negatives",
        [](RunConfig& c, const std::string& v) {
          if (v == "all") {
            c.setup.train.negatives.reset();
          } else {
            std::size_t used = 0;
            const auto n = std::stoull(v, &used);
            if (used != v.size() || v.front() == '-') throw ConfigError("expected 'all' or a count");
            c.setup.train.negatives = n;
          }
        },
        [](const RunConfig& c) {
          return c.setup.train.negatives ? std::to_string(*c.setup.train.negatives) : std::string("all");
        });
    bool_field("train.augment", [](auto& c) -> auto& { return c.setup.train.augment; });
    add("train.loss_form",
        [](RunConfig& c, const std::string& v) {
          if (v == "average") {
            c.setup.train.loss_form = LossForm::average;
          } else if (v == "sum") {
            c.setup.train.loss_form = LossForm::sum;
          } else {
            throw ConfigError("train.loss_form: expected average or sum");
          }
        },
        [](const RunConfig& c) {
          return std::string(c.setup.train.loss_form == LossForm::average ? "average" : "sum");
        });

    real_field("augment.p_flip_h", [](auto& c) -> auto& { return c.setup.train.augment_params.p_flip_h; });
    real_field("augment.p_flip_v", [](auto& c) -> auto& { return c.setup.train.augment_params.p_flip_v; });
    real_field("augment.rot_min", [](auto& c) -> auto& { return c.setup.train.augment_params.rot_min; });
    real_field("augment.rot_max", [](auto& c) -> auto& { return c.setup.train.augment_params.rot_max; });
    real_field("augment.sat_min", [](auto& c) -> auto& { return c.setup.train.augment_params.sat_min; });
    real_field("augment.sat_max", [](auto& c) -> auto& { return c.setup.train.augment_params.sat_max; });
    real_field("augment.bright_min", [](auto& c) -> auto& { return c.setup.train.augment_params.bright_min; });
    real_field("augment.bright_max", [](auto& c) -> auto& { return c.setup.train.augment_params.bright_max; });
    real_field("augment.hue_min", [](auto& c) -> auto& { return c.setup.train.augment_params.hue_min; });
    real_field("augment.hue_max", [](auto& c) -> auto& { return c.setup.train.augment_params.hue_max; });

    bool_field("preprocess.od_crop", [](auto& c) -> auto& { return c.setup.preprocess.od_crop; });
    bool_field("preprocess.bg_removal", [](auto& c) -> auto& { return c.setup.preprocess.bg_removal; });
    add("preprocess.bg_threshold",
        [](RunConfig& c, const std::string& v) {
          const int t = std::stoi(v);
          if (t < 0 || t > 255) throw ConfigError("preprocess.bg_threshold must be in 0..255");
          c.setup.preprocess.bg_threshold = static_cast<std::uint8_t>(t);
        },
        [](const RunConfig& c) { return std::to_string(c.setup.preprocess.bg_threshold); });
    real_field("preprocess.confidence_floor", [](auto& c) -> auto& { return c.setup.preprocess.confidence_floor; });
    real_field("eval.threshold", [](auto& c) -> auto& { return c.eval_threshold; });
  }

  void add(const std::string& key, Setter s, Getter g) {
    order_.push_back(key);
    setters_[key] = std::move(s);
    getters_[key] = std::move(g);
  }

  std::vector<std::string> order_;
  std::map<std::string, Setter> setters_;
  std::map<std::string, Getter> getters_;
};

inline std::vector<std::pair<std::string, std::string>> RunConfig::effective() const {
  std::vector<std::pair<std::string, std::string>> out;
  const auto& fields = ConfigFields::instance();
  for (const auto& key : fields.keys()) out.emplace_back(key, fields.get(*this, key));
  return out;
}

/// Cross-field checks and derived values; the model input is square and the
/// preprocessing resizes to it.
inline void finalize(RunConfig& c) {
  auto& m = c.setup.model;
  if (m.height != m.width) throw ConfigError("model.height and model.width must match");
  try {
    m.validate();
  } catch (const DimensionError& e) {
    throw ConfigError(e.what());
  }
  c.setup.preprocess.input_size = static_cast<int>(m.height);
  if (c.setup.train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (c.setup.train.split.train == 0) throw ConfigError("train.split_train must be positive");
}

/// Parses `key = value` lines. Relative paths resolve against `base_dir`.
/// model.agg_hidden defaults to model.dim and model.mlp_hidden to 4 * model.dim.
inline RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir = {},
                                  const std::string& source = "<config>") {
  RunConfig c;
  std::set<std::string> seen;
  std::string line;
  for (int line_no = 1; std::getline(in, line); ++line_no) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (!seen.insert(key).second) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    try {
      ConfigFields::instance().set(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!seen.count("model.agg_hidden")) c.setup.model.agg_hidden = c.setup.model.dim;
  if (!seen.count("model.mlp_hidden")) c.setup.model.mlp_hidden = 4 * c.setup.model.dim;
  if (!c.manifest.empty() && c.manifest.is_relative()) c.manifest = base_dir / c.manifest;
  if (c.output_dir.is_relative()) c.output_dir = base_dir / c.output_dir;
  finalize(c);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("config not found: " + path.string());
  return parse_run_config(in, path.parent_path(), path.string());
}

}  // namespace brighteye
